"""File formats: trace/data CSV schemas and JSON config parsing.

Floats are written with repr() so values round-trip exactly and reruns
can be compared byte for byte.  The trace schema is fixed: changing it
breaks downstream plotting, so the header is asserted in tests.
"""

import csv
import json

import numpy as np

from .driver import DriverConfig, IterationRecord
from .errors import ConfigError
from .penalty import (
    ConstantPenalty,
    MultiplicativePenalty,
    ResidualBasedPenalty,
    SelfAdaptivePenalty,
)
from .simulate import BenchmarkScenario, ExperimentCell, RelayConfig, SotdPlant

TRACE_HEADER = [
    "run_id",
    "iter",
    "beta",
    "primal_sq",
    "dual_sq",
    "combined",
    "objective",
    "accepted",
    "dldbeta",
]

AVERAGES_HEADER = ["iter", "mean_primal_sq", "mean_dual_sq", "mean_beta"]


def _fmt(value):
    return repr(float(value))


def write_trace_csv(path, records, run_id=0):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for rec in records:
            writer.writerow(
                [
                    run_id,
                    rec.iteration,
                    _fmt(rec.beta),
                    _fmt(rec.primal_sq),
                    _fmt(rec.dual_sq),
                    _fmt(rec.combined),
                    _fmt(rec.objective),
                    "true" if rec.accepted else "false",
                    _fmt(rec.dldbeta),
                ]
            )


def read_trace_csv(path):
    """Returns (run_ids, records) parsed back into IterationRecord."""
    run_ids = []
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRACE_HEADER:
            raise ConfigError(f"unexpected trace header: {header}")
        for row in reader:
            run_ids.append(int(row[0]))
            records.append(
                IterationRecord(
                    iteration=int(row[1]),
                    beta=float(row[2]),
                    primal_sq=float(row[3]),
                    dual_sq=float(row[4]),
                    combined=float(row[5]),
                    objective=float(row[6]),
                    accepted={"true": True, "false": False}[row[7]],
                    dldbeta=float(row[8]),
                )
            )
    return run_ids, records


def write_data_csv(path, sim):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "u", "y"])
        for t, u, y in zip(sim.t, sim.u, sim.y):
            writer.writerow([_fmt(t), _fmt(u), _fmt(y)])


def read_data_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t", "u", "y"]:
            raise ConfigError(f"unexpected data header: {header}")
        rows = [[float(v) for v in row] for row in reader]
    cols = np.array(rows).T
    return cols[0], cols[1], cols[2]


def write_averages_csv(path, averages):
    """Average trajectory for one cell; rows without any run are dropped."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AVERAGES_HEADER)
        for j in range(averages.sums.shape[1]):
            if averages.counts[j] == 0:
                continue
            writer.writerow(
                [
                    j + 1,
                    _fmt(averages.primal_sq[j]),
                    _fmt(averages.dual_sq[j]),
                    _fmt(averages.beta[j]),
                ]
            )


def read_averages_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != AVERAGES_HEADER:
            raise ConfigError(f"unexpected averages header: {header}")
        rows = [(int(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in reader]
    return rows


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _require(section, key, path):
    if key not in section:
        label = f"{path}.{key}" if path else key
        raise ConfigError(f"missing key: {label}")
    return section[key]


def _section(cfg, key, default=None):
    value = cfg.get(key, default if default is not None else {})
    if not isinstance(value, dict):
        raise ConfigError(f"section {key} must be an object")
    return value


STRATEGY_NAMES = ("constant", "multiplicative", "residual", "self-adaptive")


def strategy_from_config(solver, path="solver"):
    name = _require(solver, "strategy", path)
    if name == "constant":
        return ConstantPenalty()
    if name == "multiplicative":
        return MultiplicativePenalty(
            rho=solver.get("rho", 1.01),
            beta_max=solver.get("beta_max", 100.0),
        )
    if name == "residual":
        return ResidualBasedPenalty(
            kappa=solver.get("kappa", 10.0),
            rho_inc=solver.get("rho_inc", 1.02),
            rho_dec=solver.get("rho_dec", 1.02),
        )
    if name == "self-adaptive":
        return SelfAdaptivePenalty(
            rho_inc=solver.get("rho_inc", 1.05),
            rho_dec=solver.get("rho_dec", 1.02),
        )
    raise ConfigError(
        f"{path}.strategy must be one of {', '.join(STRATEGY_NAMES)}: got {name!r}"
    )


def driver_config_from(solver, path="solver"):
    try:
        return DriverConfig(
            beta0=solver.get("beta0", 1.0),
            strategy=strategy_from_config(solver, path),
            eps_tol=solver.get("eps_tol", 1e-10),
            k_max=solver.get("k_max", 500),
            m_max=solver.get("m_max", 5),
            acceleration=solver.get("acceleration", True),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid {path} settings: {exc}") from exc


def scenario_from_config(cfg, seed=None):
    section = _section(cfg, "scenario")
    plant_cfg = _section(section, "plant")
    relay_cfg = _section(section, "relay")
    try:
        plant = SotdPlant(
            num=tuple(plant_cfg.get("num", (0.2, 1.0))),
            den=tuple(plant_cfg.get("den", (1.5, 0.6, 1.0))),
            delay=plant_cfg.get("delay", 3.0),
        )
        relay = RelayConfig(
            amplitude=relay_cfg.get("amplitude", 1.0),
            hysteresis=relay_cfg.get("hysteresis", 0.01),
        )
        return BenchmarkScenario(
            plant=plant,
            duration=section.get("duration", 50.0),
            dt=section.get("dt", 0.5),
            noise_var=section.get("noise_var", 0.01),
            relay=relay,
            fine_step=section.get("fine_step", 0.01),
            seed=seed if seed is not None else section.get("seed", 0),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid scenario settings: {exc}") from exc


def problem_dims_from_config(cfg):
    section = _section(cfg, "problem")
    l = _require(section, "l", "problem")
    n = _require(section, "n", "problem")
    r = _require(section, "rank", "problem")
    return int(l), int(n), int(r)


def cells_from_config(cfg, path="cells"):
    raw = cfg.get("cells")
    if not raw:
        raise ConfigError(f"missing key: {path}")
    cells = []
    for idx, entry in enumerate(raw):
        name = _require(entry, "name", f"{path}[{idx}]")
        solver = _section(entry, "solver")
        cells.append(
            ExperimentCell(
                name=str(name),
                config=driver_config_from(solver, f"{path}[{idx}].solver"),
            )
        )
    names = [cell.name for cell in cells]
    if len(set(names)) != len(names):
        raise ConfigError("cell names must be unique")
    return cells
