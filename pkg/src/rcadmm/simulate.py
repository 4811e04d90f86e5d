"""Benchmark data generation and the Monte Carlo experiment harness.

A second-order-plus-delay plant is driven by a relay in closed loop to
excite a sustained oscillation; input and output are sampled at a fixed
period and Gaussian noise is added to the recorded output samples only.
Ground-truth FIR coefficients come from the plant's exact zero-order-hold
step response, so estimates can be scored against the true model.

Relay decisions happen at sampling instants and the input is held in
between.  The integrator runs on a fine grid with classic fixed-step
fourth-order Runge-Kutta; for a linear plant with held input one RK4 step
is the affine map x+ = F x + G u with F and G the degree-four Taylor
truncations of the exact discretization, which is what the loop applies.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import tf2ss
from scipy.linalg import expm

from .admm import initial_state
from .driver import DriverConfig, solve
from .errors import NumericFailure
from .problem import RegressionData, assemble_problem

STATE_NORM_LIMIT = 1e12


@dataclass(frozen=True)
class SotdPlant:
    """Strictly proper second-order transfer function with input delay."""

    num: tuple
    den: tuple
    delay: float

    def __post_init__(self):
        if len(self.num) != 2 or len(self.den) != 3:
            raise ValueError("plant must be (b1 s + b0) / (a2 s^2 + a1 s + a0)")
        if self.den[0] <= 0.0:
            raise ValueError("leading denominator coefficient must be positive")
        if min(self.den) <= 0.0:
            raise ValueError("denominator coefficients must be positive")
        if self.delay < 0.0:
            raise ValueError("delay must be nonnegative")

    def state_space(self):
        a, b, c, d = tf2ss(list(self.num), list(self.den))
        if np.any(d != 0.0):
            raise ValueError("plant must be strictly proper")
        return a, b.ravel(), c.ravel()


@dataclass(frozen=True)
class RelayConfig:
    amplitude: float = 1.0
    hysteresis: float = 0.01

    def __post_init__(self):
        if self.amplitude <= 0.0:
            raise ValueError("relay amplitude must be positive")
        if self.hysteresis < 0.0:
            raise ValueError("relay hysteresis must be nonnegative")


@dataclass(frozen=True)
class BenchmarkScenario:
    plant: SotdPlant
    duration: float = 50.0
    dt: float = 0.5
    noise_var: float = 0.01
    relay: RelayConfig = RelayConfig()
    fine_step: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0.0 or self.dt <= 0.0:
            raise ValueError("duration and dt must be positive")
        if self.noise_var < 0.0:
            raise ValueError("noise variance must be nonnegative")
        if abs(round(self.duration / self.dt) * self.dt - self.duration) > 1e-9:
            raise ValueError("duration must be a whole number of samples")
        if self.fine_step > self.dt / 10.0 + 1e-12:
            raise ValueError("fine step must be at most dt/10")
        if abs(round(self.dt / self.fine_step) * self.fine_step - self.dt) > 1e-9:
            raise ValueError("dt must be a whole number of fine steps")

    @property
    def n_samples(self):
        return round(self.duration / self.dt)


def default_scenario(seed=0):
    plant = SotdPlant(num=(0.2, 1.0), den=(1.5, 0.6, 1.0), delay=3.0)
    return BenchmarkScenario(plant=plant, seed=seed)


@dataclass(frozen=True)
class SimulationResult:
    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    y_clean: np.ndarray

    @property
    def data(self):
        return RegressionData(self.u, self.y)


def _rk4_matrices(a, b, step):
    # Degree-four Taylor truncation: identical to one classic RK4 step
    # for x' = A x + B u with u held over the step.
    eye = np.eye(a.shape[0])
    f = eye.copy()
    g_acc = np.zeros_like(a)
    term = eye
    for order in range(1, 5):
        g_acc = g_acc + term * step / order
        term = term @ a * step / order
        f = f + term
    return f, g_acc @ b


def _relay_loop(a, b, c, scn):
    """Integrate the closed loop; returns sampled u and clean y."""
    per_sample = round(scn.dt / scn.fine_step)
    n_fine = per_sample * scn.n_samples
    delay_steps = round(scn.plant.delay / scn.fine_step)
    f_mat, g_vec = _rk4_matrices(a, b, scn.fine_step)
    f11, f12 = f_mat[0]
    f21, f22 = f_mat[1]
    g1, g2 = g_vec
    c1, c2 = c
    d = scn.relay.amplitude
    h = scn.relay.hysteresis

    x1 = x2 = 0.0
    relay_high = True
    u_now = d
    u_fine = [0.0] * n_fine
    u_samples = np.empty(scn.n_samples)
    y_samples = np.empty(scn.n_samples)

    for q in range(n_fine):
        if q % per_sample == 0:
            i = q // per_sample
            y_now = c1 * x1 + c2 * x2
            if abs(x1) + abs(x2) > STATE_NORM_LIMIT:
                raise NumericFailure("plant state diverged during simulation")
            error = -y_now
            if relay_high and error <= -h:
                relay_high = False
            elif not relay_high and error >= h:
                relay_high = True
            u_now = d if relay_high else -d
            y_samples[i] = y_now
            u_samples[i] = u_now
        u_fine[q] = u_now
        u_del = u_fine[q - delay_steps] if q >= delay_steps else 0.0
        x1, x2 = (
            f11 * x1 + f12 * x2 + g1 * u_del,
            f21 * x1 + f22 * x2 + g2 * u_del,
        )
    return u_samples, y_samples


def simulate_relay(scn):
    """Run the closed-loop experiment and return the sampled records.

    Sample i records the input applied on [i dt, (i+1) dt) and the output
    at t = i dt; the relay decision at each sampling instant sees the
    noise-free output, and noise lands on the recorded output only.
    """
    a, b, c = scn.plant.state_space()
    u, y_clean = _relay_loop(a, b, c, scn)
    rng = np.random.default_rng(scn.seed)
    noise = rng.normal(0.0, np.sqrt(scn.noise_var), scn.n_samples)
    t = np.arange(scn.n_samples) * scn.dt
    return SimulationResult(t=t, u=u, y=y_clean + noise, y_clean=y_clean)


def true_impulse_response(plant, dt, l):
    """FIR coefficients of the exact zero-order-hold discretization.

    Coefficient k is the step-response increment S(k dt) - S((k-1) dt)
    including the input delay, so the identity y(i dt) = sum_k theta_k
    u[i-k] holds exactly for held inputs (delay >= dt assumed by the
    regressor convention, which excludes the in-flight interval).
    """
    a, b, c = plant.state_space()
    dim = a.shape[0]
    aug = np.zeros((dim + 1, dim + 1))
    aug[:dim, :dim] = a
    aug[:dim, dim] = b

    def step_value(horizon):
        if horizon <= 0.0:
            return 0.0
        return float(c @ expm(aug * horizon)[:dim, dim])

    theta = np.empty(l)
    for k in range(1, l + 1):
        theta[k - 1] = step_value(k * dt - plant.delay) - step_value(
            (k - 1) * dt - plant.delay
        )
    return theta


@dataclass(frozen=True)
class ExperimentCell:
    name: str
    config: DriverConfig


@dataclass(frozen=True)
class RunSummary:
    run: int
    cell: str
    iterations: int
    termination: str
    final_primal_sq: float
    final_dual_sq: float
    final_combined: float
    final_beta: float
    final_objective: float
    theta_error: float


@dataclass
class CellAverages:
    """Accepted-row running means indexed by iteration number."""

    name: str
    sums: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    runs: int = 0
    failures: int = 0

    @property
    def iterations(self):
        return np.arange(1, self.sums.shape[1] + 1)

    def _mean(self, row):
        with np.errstate(invalid="ignore"):
            return self.sums[row] / self.counts

    @property
    def primal_sq(self):
        return self._mean(0)

    @property
    def dual_sq(self):
        return self._mean(1)

    @property
    def combined(self):
        return self._mean(2)

    @property
    def beta(self):
        return self._mean(3)

    @property
    def objective(self):
        return self._mean(4)


@dataclass
class McResult:
    cells: dict
    summaries: list
    traces: dict | None = None


def _new_averages(name, horizon):
    return CellAverages(
        name=name, sums=np.zeros((5, horizon)), counts=np.zeros(horizon)
    )


def _accumulate(avg, records):
    for record in records:
        if not record.accepted:
            continue
        j = record.iteration - 1
        if j >= avg.sums.shape[1]:
            continue
        avg.sums[0, j] += record.primal_sq
        avg.sums[1, j] += record.dual_sq
        avg.sums[2, j] += record.combined
        avg.sums[3, j] += record.beta
        avg.sums[4, j] += record.objective
        avg.counts[j] += 1


def _run_cells(scn, cells, run, base_seed, l, n, r, theta_true):
    """One Monte Carlo run: shared data, one solve per cell."""
    sim = simulate_relay(replace(scn, seed=base_seed + run))
    problem = assemble_problem(sim.data, l=l, n=n, r=r)
    init = initial_state(problem)
    scale = float(np.linalg.norm(theta_true))
    out = []
    for cell in cells:
        try:
            result = solve(problem, cell.config, init=init)
            final = next(
                (rec for rec in reversed(result.records) if rec.accepted), None
            )
            error = float(np.linalg.norm(result.theta - theta_true)) / scale
            summary = RunSummary(
                run=run,
                cell=cell.name,
                iterations=result.iterations,
                termination=result.termination,
                final_primal_sq=final.primal_sq if final else float("nan"),
                final_dual_sq=final.dual_sq if final else float("nan"),
                final_combined=final.combined if final else float("nan"),
                final_beta=final.beta if final else float("nan"),
                final_objective=final.objective if final else float("nan"),
                theta_error=error,
            )
            out.append((cell.name, summary, result.records))
        except Exception:
            summary = RunSummary(
                run=run,
                cell=cell.name,
                iterations=0,
                termination="error",
                final_primal_sq=float("nan"),
                final_dual_sq=float("nan"),
                final_combined=float("nan"),
                final_beta=float("nan"),
                final_objective=float("nan"),
                theta_error=float("nan"),
            )
            out.append((cell.name, summary, []))
    return out


def monte_carlo(
    scn,
    cells,
    runs,
    *,
    l=60,
    n=20,
    r=8,
    base_seed=0,
    jobs=1,
    keep_traces=False,
):
    """Paired Monte Carlo study over penalty strategies.

    Run i regenerates data with seed base_seed + i and reuses the same
    problem and initial iterate for every cell, so strategy comparisons
    are paired.  Averages are over accepted records at each iteration
    index; failed runs are counted and skipped in the averages.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    names = [cell.name for cell in cells]
    if len(set(names)) != len(names):
        raise ValueError("cell names must be unique")

    theta_true = true_impulse_response(scn.plant, scn.dt, l)
    horizon = max(cell.config.k_max for cell in cells) + 1
    averages = {cell.name: _new_averages(cell.name, horizon) for cell in cells}
    summaries = []
    traces = {} if keep_traces else None

    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            batches = list(
                pool.map(
                    _run_cells,
                    [scn] * runs,
                    [cells] * runs,
                    range(runs),
                    [base_seed] * runs,
                    [l] * runs,
                    [n] * runs,
                    [r] * runs,
                    [theta_true] * runs,
                )
            )
    else:
        batches = [
            _run_cells(scn, cells, run, base_seed, l, n, r, theta_true)
            for run in range(runs)
        ]

    for batch in batches:
        for name, summary, records in batch:
            summaries.append(summary)
            avg = averages[name]
            avg.runs += 1
            if summary.termination in ("error", "numeric-failure"):
                avg.failures += 1
            _accumulate(avg, records)
            if traces is not None:
                traces[(name, summary.run)] = records

    return McResult(cells=averages, summaries=summaries, traces=traces)
