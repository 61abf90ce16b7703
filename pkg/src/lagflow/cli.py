"""Command-line front end.

    lagflow exp1 --out runs/exp1
    lagflow evolve --config run.cfg --tau 5e-4
    lagflow converge --Ks 25,50,100

A config file holds ``key = value`` lines (``#`` starts a comment); command
line flags override the file.  Exit codes: 0 success, 2 configuration
error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .equilibria import (
    MinimizerError,
    equilibrium,
    linf_error,
    lp_error,
    reference_profile,
)
from .functionals import ModelParams
from .mass_mesh import (
    DomainError,
    LagrangianState,
    MassGrid,
    QuantileError,
    build_initial_vector,
    density_from_state,
    l1_distance,
)
from .rescaling import (
    RescaleSchedule,
    confined_minimizer,
    continuous_rescale_factor,
    dilate,
    evolve_unconfined,
    l1_to_rescaled_profile,
    max_coordinate_deviation,
    nearest_indices,
    profile_at_scale,
)
from .stepper import StepConfig, StepFailure, Trajectory, evolve, fit_log_slope, uniform_schedule

log = logging.getLogger("lagflow")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
COMMANDS = ("evolve", "exp1", "exp2", "minimizer", "converge")
EXP2_TIMES = (0.0, 0.1, 1.0, 10.0, 100.0)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "evolve"
    alpha: float = 1.0
    lam: float = 5.0
    K: int = 50
    tau: float = 1e-3
    t_end: float = 0.8
    initial: str = "sine-bump"
    grid: str = "uniform"
    out: str = "."
    stride: int = 10
    Ks: tuple[int, ...] = (25, 50, 100, 200, 400)
    workers: int = 1

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        try:
            ModelParams(self.alpha, self.lam)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        if self.K < 1 or any(k < 1 for k in self.Ks):
            raise ConfigError("K must be a positive integer")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ConfigError("tau must be positive")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ConfigError("t_end must be non-negative")
        if self.stride < 1 or self.workers < 1:
            raise ConfigError("stride and workers must be positive")
        if not (self.initial in ("sine-bump", "barenblatt", "uniform") or self.initial.startswith("file:")):
            raise ConfigError(f"unknown initial condition {self.initial!r}")
        if not (self.grid == "uniform" or self.grid.startswith("nonuniform:")):
            raise ConfigError(f"unknown grid mode {self.grid!r}")
        if self.command in ("exp1", "converge", "minimizer") and not self.lam > 0:
            raise ConfigError(f"{self.command} needs lam > 0")
        if self.command == "exp2" and self.lam != 0:
            raise ConfigError("exp2 runs without confinement, lam must be 0")

    def echo(self) -> list[tuple[str, str]]:
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(k) for k in v)
            elif isinstance(v, float):
                v = repr(v)
            out.append((f.name, str(v)))
        return out


# per-command defaults, applied before the config file and the flags
COMMAND_DEFAULTS = {
    "exp1": dict(alpha=1.0, lam=5.0, K=50, tau=1e-3, t_end=0.8, initial="sine-bump", stride=10),
    "exp2": dict(alpha=1.0, lam=0.0, K=50, tau=1e-3, t_end=100.0, initial="barenblatt"),
    "minimizer": dict(alpha=1.0, lam=5.0, K=50),
    "converge": dict(alpha=1.0, lam=5.0),
}

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, raw: str):
    typ = _FIELD_TYPES[key]
    try:
        if typ == "float":
            return float(raw)
        if typ == "int":
            return int(raw)
        if key == "Ks":
            return tuple(int(k) for k in raw.replace(" ", "").split(",") if k)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def read_config_file(path: str | Path) -> dict[str, object]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lagflow", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="key = value file; flags override it")
    for name in ("alpha", "lam", "tau", "t_end"):
        ap.add_argument(f"--{name}", type=str)
    for name in ("K", "stride", "workers", "initial", "grid", "out", "Ks"):
        ap.add_argument(f"--{name}", type=str)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict[str, object] = dict(COMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        file_vals = read_config_file(args.config)
        if "command" in file_vals and file_vals["command"] != args.command:
            raise ConfigError("config file command differs from the command line")
        values.update(file_vals)
    for key in _FIELD_TYPES:
        raw = getattr(args, key, None)
        if raw is not None and key != "command":
            values[key] = _coerce(key, raw)
    values["command"] = args.command
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------- inputs


def make_grid(cfg: RunConfig, K: int | None = None) -> MassGrid:
    if cfg.grid == "uniform":
        return MassGrid.uniform_grid(cfg.K if K is None else K)
    path = cfg.grid.split(":", 1)[1]
    try:
        xi = np.loadtxt(path, ndmin=1, comments="#").ravel()
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read grid file: {exc}") from None
    try:
        grid = MassGrid.nonuniform_grid(xi)
    except DomainError as exc:
        raise ConfigError(f"invalid grid file: {exc}") from None
    if abs(grid.M - 1.0) > 1e-14:
        raise ConfigError("grid file must end at total mass 1")
    return grid


def sine_bump(x: float) -> float:
    """Asymmetric sine bump on [-pi, pi] with unit mass."""
    return 0.25 * abs(math.sin(x)) * (0.5 + (1.0 if x > 0 else 0.0))


def _file_density(path: str) -> tuple[Callable[[float], float], tuple[float, float], list[float]]:
    try:
        data = np.loadtxt(path, comments="#", delimiter=None, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read initial condition: {exc}") from None
    if data.shape[1] != 2 or data.shape[0] < 2:
        raise ConfigError("initial-condition file needs two columns x, u and at least two rows")
    xs, us = data[:, 0], data[:, 1]
    if np.any(np.diff(xs) <= 0) or np.any(us < 0) or not np.all(np.isfinite(data)):
        raise ConfigError("initial-condition samples need increasing x and finite u >= 0")
    mass = float(np.trapezoid(us, xs))
    if not mass > 0:
        raise ConfigError("initial-condition file has zero mass")
    scale = 1.0 / mass

    def u0(x: float) -> float:
        return scale * float(np.interp(x, xs, us))

    return u0, (float(xs[0]), float(xs[-1])), list(xs[1:-1])


def make_initial(cfg: RunConfig, grid: MassGrid) -> LagrangianState:
    if cfg.initial == "sine-bump":
        return build_initial_vector(sine_bump, (-math.pi, math.pi), grid, breakpoints=[0.0])
    if cfg.initial == "uniform":
        return LagrangianState(grid.xi - 0.5 * grid.M, grid)
    if cfg.initial == "barenblatt":
        return confined_minimizer(cfg.alpha, grid)
    u0, support, kinks = _file_density(cfg.initial.split(":", 1)[1])
    return build_initial_vector(u0, support, grid, breakpoints=kinks)


# ---------------------------------------------------------------- outputs


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def header_lines(cfg: RunConfig, extra: Sequence[tuple[str, object]] = ()) -> list[str]:
    lam, tau = cfg.lam, cfg.tau
    consts = [
        ("rate_2lam_over_1_plus_lam_tau", fmt(2.0 * lam / (1.0 + lam * tau))),
        ("a_tau", fmt((1.0 + tau) ** (-(2.0 * cfg.alpha + 2.0)))),
        ("b_tau", fmt(1.0 + 2.0 * tau)),
    ]
    rows = cfg.echo() + consts + [(k, v if isinstance(v, str) else fmt(v)) for k, v in extra]
    return [f"# {k} = {v}" for k, v in rows]


def write_csv(path: Path, header: list[str], columns: Sequence[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in header:
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def snapshot_rows(times, states):
    for t, s in zip(times, states):
        yield [t, *s.x]


def density_rows(times, states):
    for t, s in zip(times, states):
        z = s.z
        for j in range(z.size):
            yield [t, j, s.x[j], s.x[j + 1], z[j]]


def snapshot_columns(K: int) -> list[str]:
    return ["t"] + [f"x{k}" for k in range(K + 1)]


# ---------------------------------------------------------------- commands


def crossover_time(t: np.ndarray, gap: np.ndarray, target: float, width: int = 20) -> float:
    """First time the local log-slope of ``gap`` lies within 10% of ``target``."""
    mask = gap > 0
    t, lg = t[mask], np.log(gap[mask])
    for i in range(t.size - width):
        slope = (lg[i + width] - lg[i]) / (t[i + width] - t[i])
        if abs(slope - target) <= 0.1 * abs(target):
            return float(t[i])
    return math.nan


def run_evolve(cfg: RunConfig, out: Path) -> None:
    grid = make_grid(cfg)
    params = ModelParams(cfg.alpha, cfg.lam)
    x0 = make_initial(cfg, grid)
    eq = equilibrium(params, grid) if params.lam > 0 else None
    traj = evolve(x0, uniform_schedule(cfg.tau, cfg.t_end), params, StepConfig(), equilibrium=eq)
    _write_trajectory(cfg, out, traj, eq)


def _write_trajectory(cfg, out, traj: Trajectory, eq) -> None:
    t = np.array(traj.times)
    H, F = traj.H(), traj.F()
    extra: list[tuple[str, object]] = [("mass", traj.grid.M)]
    if eq is not None:
        H_gap, F_gap = H - eq.H_min, F - eq.F_min
        u_min = eq.density
        l1 = np.array([l1_distance(density_from_state(s), u_min) for s in traj.states])
        extra += [("H_min", eq.H_min), ("F_min", eq.F_min)]
        rate = 2.0 * cfg.lam / (1.0 + cfg.lam * cfg.tau)
        lo, hi = 0.5 * cfg.t_end, cfg.t_end
        if t.size > 2 and cfg.t_end > 0:
            try:
                extra.append(("fitted_F_gap_slope", fit_log_slope(t, F_gap, (lo, hi))))
                extra.append(("fitted_H_gap_slope", fit_log_slope(t, H_gap, (lo, hi))))
            except DomainError:
                pass
            extra.append(("fit_window", f"{fmt(lo)},{fmt(hi)}"))
            extra.append(("crossover_time", crossover_time(t, H_gap, -rate)))
    else:
        H_gap = F_gap = l1 = np.full(t.size, math.nan)
    reps = traj.reports
    header = header_lines(cfg, extra)
    cols = ["t", "H", "F", "H_gap", "F_gap", "L1_err", "newton_iters", "residual", "H_slack", "F_slack"]
    rows = (
        [t[i], H[i], F[i], H_gap[i], F_gap[i], l1[i], reps[i].newton_iters, reps[i].residual,
         reps[i].H_slack, reps[i].F_slack]
        for i in range(t.size)
    )
    write_csv(out / "timeseries.csv", header, cols, rows)
    keep = list(range(0, len(traj), cfg.stride))
    if keep[-1] != len(traj) - 1:
        keep.append(len(traj) - 1)
    times = [traj.times[i] for i in keep]
    states = [traj.states[i] for i in keep]
    write_csv(out / "snapshots.csv", header, snapshot_columns(traj.grid.K), snapshot_rows(times, states))
    write_csv(out / "densities.csv", header, ["t", "cell_index", "x_left", "x_right", "z"],
              density_rows(times, states))


def run_exp2(cfg: RunConfig, out: Path) -> None:
    grid = make_grid(cfg)
    sched = RescaleSchedule.until(cfg.tau, cfg.t_end, cfg.alpha)
    x_min = confined_minimizer(cfg.alpha, grid)
    traj = evolve_unconfined(x_min, sched)
    profile = profile_at_scale(cfg.alpha)
    targets = [s for s in EXP2_TIMES if s <= cfg.t_end] or [0.0]
    idx = nearest_indices(sched.s_hat, targets)
    S, s_hat = sched.S, sched.s_hat
    R_delta = sched.decay_factors()
    rows = []
    for i in idx:
        exact = dilate(x_min, S[i])
        dev = max_coordinate_deviation(traj.states[i], exact)
        R = continuous_rescale_factor(s_hat[i], cfg.alpha)
        rows.append([i, s_hat[i], S[i], dev, l1_to_rescaled_profile(traj.states[i], profile, R), R_delta[i]])
    worst = max(
        max_coordinate_deviation(s, dilate(x_min, Sn)) / np.max(np.abs(Sn * x_min.x))
        for s, Sn in zip(traj.states, S)
    )
    header = header_lines(cfg, [("base_steps", str(sched.base_steps.size)),
                                ("max_rel_coord_dev_all_steps", worst)])
    write_csv(out / "selfsim.csv", header, ["n", "t_hat", "S", "max_coord_dev", "L1_dev", "R_delta"], rows)
    write_csv(out / "snapshots.csv", header, snapshot_columns(grid.K),
              snapshot_rows([s_hat[i] for i in idx], [traj.states[i] for i in idx]))


def run_minimizer(cfg: RunConfig, out: Path) -> None:
    grid = make_grid(cfg)
    params = ModelParams(cfg.alpha, cfg.lam)
    eq = equilibrium(params, grid)
    ref = reference_profile(params)
    header = header_lines(cfg, [("H_min", eq.H_min), ("F_min", eq.F_min), ("H_continuous", ref.entropy())])
    write_csv(out / f"minimizer_K{grid.K}.csv", header, snapshot_columns(grid.K), snapshot_rows([0.0], [eq.state]))


def convergence_row(alpha: float, lam: float, K: int) -> list[float]:
    params = ModelParams(alpha, lam)
    grid = MassGrid.uniform_grid(K)
    eq = equilibrium(params, grid)
    ref = reference_profile(params)
    u = eq.density
    return [
        K,
        lp_error(u, ref, 1.0),
        lp_error(u, ref, 2.0),
        linf_error(u, ref),
        eq.H_min - ref.entropy(),
    ]


def run_converge(cfg: RunConfig, out: Path) -> None:
    if cfg.grid != "uniform":
        raise ConfigError("converge runs on uniform grids")
    Ks = sorted(set(cfg.Ks))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(convergence_row, [cfg.alpha] * len(Ks), [cfg.lam] * len(Ks), Ks))
    else:
        rows = [convergence_row(cfg.alpha, cfg.lam, K) for K in Ks]
    extra = []
    if len(rows) >= 2:
        arr = np.array(rows)
        for j, name in ((1, "L1"), (2, "L2"), (3, "Linf")):
            extra.append((f"slope_{name}", float(np.polyfit(np.log(arr[:, 0]), np.log(arr[:, j]), 1)[0])))
    write_csv(out / "convergence.csv", header_lines(cfg, extra), ["K", "L1", "L2", "Linf", "H_gap"], rows)


RUNNERS = {
    "evolve": run_evolve,
    "exp1": run_evolve,
    "exp2": run_exp2,
    "minimizer": run_minimizer,
    "converge": run_converge,
}


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: config: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        RUNNERS[cfg.command](cfg, out)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepFailure as exc:
        t = exc.trajectory.times[-1] if exc.trajectory is not None and len(exc.trajectory) else math.nan
        print(f"error: solver: {exc}\nlast_time = {t!r}\nresidual = {exc.residual!r}", file=sys.stderr)
        return EXIT_SOLVER
    except (MinimizerError, QuantileError) as exc:
        print(f"error: solver: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except DomainError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
