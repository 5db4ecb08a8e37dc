"""Experiment orchestration: configs, seeded pipelines, sweeps, file I/O.

An experiment is: generate a benchmark trajectory, hide a random fraction of
it, reconstruct with the fixed-point iteration, and score against the
withheld truth and the interpolation baselines.  Three independent seeds
(dynamics, reservoir, mask) keep the three random ingredients orthogonal so
sweeps and ensembles vary one factor at a time.

Config files are INI text (sections: experiment, reservoir, fixed_point,
seeds); series travel as CSV with one row per time index and empty fields
for missing values; results are JSON.  All files are written atomically.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import os
import tempfile
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .dynamics import (
    Lorenz63Params,
    Lorenz96Params,
    MackeyGlassParams,
    Trajectory,
    VdpParams,
    gen_lorenz63,
    gen_lorenz96,
    gen_mackey_glass,
    gen_vdp,
)
from .errors import ConfigError, MalformedFileError, NumericalError
from .fixed_point import FixedPointConfig, ObservationSet, reconstruct
from .reservoir import ReservoirSpec, build_reservoir
from .sparsity import (
    MaskSpec,
    MetricReport,
    interp_cubic_spline,
    interp_linear,
    make_mask,
    metric_report,
)

__all__ = [
    "SYSTEMS",
    "ExperimentConfig",
    "ExperimentResult",
    "EnsembleSummary",
    "default_config",
    "load_config",
    "save_config",
    "run_experiment",
    "sweep",
    "export_series",
    "import_series",
    "emit_report",
    "load_report",
]

# system name -> (n_targets, n_exo, normalize_inputs default)
SYSTEMS = {
    "mackey_glass": (1, 0, False),
    "lorenz63_partial": (1, 1, True),
    "lorenz63_full": (3, 0, True),
    "lorenz96": (6, 0, True),
    "vdp": (1, 1, False),
}

# per-system (missing_fraction, relaxation, ridge) defaults
_DEFAULT_RUNS = {
    "mackey_glass": (0.90, 0.2, 1e-9),
    "lorenz63_partial": (0.90, 0.2, 1e-7),
    "lorenz63_full": (0.90, 0.2, 1e-6),
    "lorenz96": (0.90, 0.2, 1e-7),
    "vdp": (0.98, 0.2, 1e-6),
}


@dataclass
class ExperimentConfig:
    """Full description of one experiment; sufficient for an exact re-run."""

    system: str
    t_len: int
    missing_fraction: float
    relaxation: float
    ridge: float
    reservoir: ReservoirSpec
    fixed_point: FixedPointConfig
    dynamics_seed: int = 0
    mask_seed: int = 0
    ensemble: int = 1

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ConfigError(
                f"unknown system {self.system!r}; choose one of "
                f"{sorted(SYSTEMS)}")
        n_y, n_u, _ = SYSTEMS[self.system]
        if (self.reservoir.n_target, self.reservoir.n_exo) != (n_y, n_u):
            raise ConfigError(
                f"{self.system} needs a reservoir with n_target={n_y}, "
                f"n_exo={n_u}; got {self.reservoir.n_target}, "
                f"{self.reservoir.n_exo}")
        if self.fixed_point.relaxation != self.relaxation \
                or self.fixed_point.ridge != self.ridge:
            raise ConfigError(
                "fixed_point settings disagree with the experiment-level "
                "relaxation/ridge values")
        if self.t_len <= self.fixed_point.washout + 1:
            raise ConfigError("t_len must exceed the washout length")
        if self.ensemble < 1:
            raise ConfigError("ensemble must be at least 1")

    @property
    def reservoir_seed(self) -> int:
        return self.reservoir.seed


@dataclass(frozen=True)
class EnsembleSummary:
    """Statistics over independent reservoir realizations.

    Non-converged members are excluded from the mean/std and counted in
    ``n_excluded``; ``members`` holds one (seed, sigma_lin, converged,
    iterations) record per realization.
    """

    mean_sigma_lin: float
    std_sigma_lin: float
    n_members: int
    n_excluded: int
    members: list


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: MetricReport
    metrics_post_washout: MetricReport
    improvements: np.ndarray
    iterations: int
    converged: bool
    wall_time: float
    ensemble_summary: EnsembleSummary = None


def default_config(system: str, t_len: int = 20000, **overrides) -> ExperimentConfig:
    """Reference configuration for a benchmark system.

    The reservoir uses the shared reference parameter set; missing fraction,
    relaxation and ridge default to a per-system benchmark point.  Keyword
    overrides accept any experiment-level field plus ``washout``, ``tol``,
    ``max_iter``, ``normalize_inputs`` and reservoir fields (``n_latent``,
    ``leak``, ``sparsity``, ``spectral_radius``, ``scale_a``, ``scale_b``).
    """
    if system not in SYSTEMS:
        raise ConfigError(f"unknown system {system!r}")
    n_y, n_u, norm_default = SYSTEMS[system]
    omega, alpha, ridge = _DEFAULT_RUNS[system]
    omega = overrides.pop("missing_fraction", omega)
    alpha = overrides.pop("relaxation", alpha)
    ridge = overrides.pop("ridge", ridge)
    res_kwargs = dict(n_latent=1000, n_target=n_y, n_exo=n_u, leak=0.6,
                      sparsity=0.01, spectral_radius=0.9, scale_a=1.0,
                      scale_b=0.4, seed=overrides.pop("reservoir_seed", 0))
    for key in ("n_latent", "leak", "sparsity", "spectral_radius",
                "scale_a", "scale_b"):
        if key in overrides:
            res_kwargs[key] = overrides.pop(key)
    fp_kwargs = dict(relaxation=alpha, ridge=ridge, washout=200, tol=1e-6,
                     max_iter=500, normalize_inputs=norm_default)
    for key in ("washout", "tol", "max_iter", "normalize_inputs"):
        if key in overrides:
            fp_kwargs[key] = overrides.pop(key)
    cfg_kwargs = dict(system=system, t_len=t_len, missing_fraction=omega,
                      relaxation=alpha, ridge=ridge,
                      reservoir=ReservoirSpec(**res_kwargs),
                      fixed_point=FixedPointConfig(**fp_kwargs))
    for key in ("dynamics_seed", "mask_seed", "ensemble"):
        if key in overrides:
            cfg_kwargs[key] = overrides.pop(key)
    if overrides:
        raise ConfigError(f"unknown config overrides: {sorted(overrides)}")
    return ExperimentConfig(**cfg_kwargs)


def load_config(path) -> ExperimentConfig:
    """Read an INI config file; missing keys fall back to system defaults."""
    parser = configparser.ConfigParser()
    read = parser.read(str(path))
    if not read:
        raise ConfigError(f"config file {path!s} not found or unreadable")
    try:
        system = parser.get("experiment", "system")
    except (configparser.NoSectionError, configparser.NoOptionError) as exc:
        raise ConfigError(f"{path!s}: missing [experiment] system entry") from exc
    overrides = {}
    exp_float = {"missing_fraction": float, "relaxation": float,
                 "ridge": float, "t_len": int, "ensemble": int}
    for key, conv in exp_float.items():
        if parser.has_option("experiment", key):
            overrides[key] = conv(parser.get("experiment", key))
    res_keys = {"n_latent": int, "leak": float, "sparsity": float,
                "spectral_radius": float, "scale_a": float, "scale_b": float}
    for key, conv in res_keys.items():
        if parser.has_option("reservoir", key):
            overrides[key] = conv(parser.get("reservoir", key))
    fp_keys = {"washout": int, "tol": float, "max_iter": int}
    for key, conv in fp_keys.items():
        if parser.has_option("fixed_point", key):
            overrides[key] = conv(parser.get("fixed_point", key))
    if parser.has_option("fixed_point", "normalize_inputs"):
        overrides["normalize_inputs"] = parser.getboolean(
            "fixed_point", "normalize_inputs")
    seed_keys = {"dynamics": "dynamics_seed", "reservoir": "reservoir_seed",
                 "mask": "mask_seed"}
    for opt, key in seed_keys.items():
        if parser.has_option("seeds", opt):
            overrides[key] = parser.getint("seeds", opt)
    t_len = overrides.pop("t_len", 20000)
    try:
        return default_config(system, t_len=t_len, **overrides)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"{path!s}: {exc}") from exc


def save_config(cfg: ExperimentConfig, path) -> None:
    parser = configparser.ConfigParser()
    parser["experiment"] = {
        "system": cfg.system,
        "t_len": str(cfg.t_len),
        "missing_fraction": repr(cfg.missing_fraction),
        "relaxation": repr(cfg.relaxation),
        "ridge": repr(cfg.ridge),
        "ensemble": str(cfg.ensemble),
    }
    r = cfg.reservoir
    parser["reservoir"] = {
        "n_latent": str(r.n_latent), "leak": repr(r.leak),
        "sparsity": repr(r.sparsity),
        "spectral_radius": repr(r.spectral_radius),
        "scale_a": repr(r.scale_a), "scale_b": repr(r.scale_b),
    }
    f = cfg.fixed_point
    parser["fixed_point"] = {
        "washout": str(f.washout), "tol": repr(f.tol),
        "max_iter": str(f.max_iter),
        "normalize_inputs": str(f.normalize_inputs).lower(),
    }
    parser["seeds"] = {
        "dynamics": str(cfg.dynamics_seed),
        "reservoir": str(cfg.reservoir.seed),
        "mask": str(cfg.mask_seed),
    }
    with _atomic_writer(path) as handle:
        parser.write(handle)


def generate_truth(cfg: ExperimentConfig) -> Trajectory:
    """Ground-truth trajectory for the configured system.

    Targets and exogenous columns are already split: the partially observed
    convection benchmark exposes the first state variable as the target and
    wires the third in as fully known forcing.
    """
    if cfg.system == "mackey_glass":
        return gen_mackey_glass(MackeyGlassParams(), cfg.t_len)
    if cfg.system == "lorenz63_partial":
        full = gen_lorenz63(Lorenz63Params(), cfg.t_len)
        return Trajectory(y=full.y[:, :1].copy(), u=full.y[:, 2:3].copy(),
                          dt=full.dt)
    if cfg.system == "lorenz63_full":
        return gen_lorenz63(Lorenz63Params(), cfg.t_len)
    if cfg.system == "lorenz96":
        return gen_lorenz96(Lorenz96Params(), cfg.t_len)
    if cfg.system == "vdp":
        return gen_vdp(VdpParams(), cfg.t_len, cfg.dynamics_seed)
    raise ConfigError(f"unknown system {cfg.system!r}")


def make_observations(cfg: ExperimentConfig, truth: Trajectory) -> ObservationSet:
    mask = make_mask(truth.y.shape[0], truth.y.shape[1],
                     MaskSpec(missing_fraction=cfg.missing_fraction,
                              seed=cfg.mask_seed))
    return ObservationSet.from_dense(truth.y, mask, u=truth.u, dt=truth.dt)


def run_experiment(cfg: ExperimentConfig, callback=None) -> ExperimentResult:
    """Run the full pipeline; with ensemble > 1, repeat over independent
    reservoir realizations and attach aggregate statistics."""
    start = time.perf_counter()
    truth = generate_truth(cfg)
    obs = make_observations(cfg, truth)
    y_lin = interp_linear(obs.y_obs, obs.mask)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        y_csp = interp_cubic_spline(obs.y_obs, obs.mask)

    member_seeds = [cfg.reservoir.seed]
    if cfg.ensemble > 1:
        children = np.random.SeedSequence(cfg.reservoir.seed).spawn(cfg.ensemble)
        member_seeds = [int(c.generate_state(1)[0]) for c in children]

    runs = []
    for seed in member_seeds:
        res = build_reservoir(replace(cfg.reservoir, seed=seed))
        runs.append((seed, reconstruct(res, obs, cfg.fixed_point,
                                       callback=callback)))

    _, first = runs[0]
    ws = cfg.fixed_point.washout
    metrics = metric_report(first.y_r, y_lin, y_csp, truth.y)
    metrics_post = metric_report(first.y_r[ws + 1:], y_lin[ws + 1:],
                                 y_csp[ws + 1:], truth.y[ws + 1:])
    summary = None
    if cfg.ensemble > 1:
        members = []
        sigmas = []
        for seed, run in runs:
            sig = metric_report(run.y_r, y_lin, y_csp, truth.y).sigma_lin
            members.append({"reservoir_seed": seed, "sigma_lin": sig,
                            "converged": run.converged,
                            "iterations": run.iterations})
            if run.converged:
                sigmas.append(sig)
        summary = EnsembleSummary(
            mean_sigma_lin=float(np.mean(sigmas)) if sigmas else float("nan"),
            std_sigma_lin=float(np.std(sigmas)) if sigmas else float("nan"),
            n_members=len(members),
            n_excluded=len(members) - len(sigmas),
            members=members)
    return ExperimentResult(
        config=cfg, metrics=metrics, metrics_post_washout=metrics_post,
        improvements=first.improvements, iterations=first.iterations,
        converged=first.converged, wall_time=time.perf_counter() - start,
        ensemble_summary=summary)


# parameter-grid keys -> where they live
_SWEEP_TARGETS = {
    "leak": "reservoir", "scale_b": "reservoir", "sparsity": "reservoir",
    "n_latent": "reservoir", "spectral_radius": "reservoir",
    "scale_a": "reservoir",
    "missing_fraction": "experiment", "relaxation": "experiment",
    "ridge": "experiment",
}


def sweep(base_cfg: ExperimentConfig, grid: dict, jobs: int = 1) -> list:
    """Cartesian sweep over a parameter grid.

    Returns one record per cell: {"params", "result", "error"}; numerical
    failures are recorded and the sweep continues.  Cells run in a thread
    pool when jobs > 1 (the heavy kernels release the GIL).
    """
    for key in grid:
        if key not in _SWEEP_TARGETS:
            raise ConfigError(
                f"cannot sweep {key!r}; supported: {sorted(_SWEEP_TARGETS)}")
    names = list(grid)
    combos = [()]
    for name in names:
        combos = [c + (v,) for c in combos for v in grid[name]]
    cells = [dict(zip(names, combo)) for combo in combos]

    def one(params):
        cfg = _apply_params(base_cfg, params)
        try:
            return {"params": params, "result": run_experiment(cfg), "error": None}
        except NumericalError as exc:
            return {"params": params, "result": None, "error": str(exc)}

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, cells))
    return [one(p) for p in cells]


def _apply_params(cfg: ExperimentConfig, params: dict) -> ExperimentConfig:
    res_kwargs = {}
    exp_kwargs = {}
    for key, value in params.items():
        if _SWEEP_TARGETS[key] == "reservoir":
            res_kwargs[key] = value
        else:
            exp_kwargs[key] = value
    reservoir = replace(cfg.reservoir, **res_kwargs) if res_kwargs else cfg.reservoir
    alpha = exp_kwargs.get("relaxation", cfg.relaxation)
    ridge = exp_kwargs.get("ridge", cfg.ridge)
    fixed_point = replace(cfg.fixed_point, relaxation=alpha, ridge=ridge)
    return replace(cfg, reservoir=reservoir, fixed_point=fixed_point,
                   **exp_kwargs)


def export_series(path, data, mask=None) -> None:
    """Write a trajectory or observation set as CSV.

    Columns: t, y_1..y_n, u_1..u_m and, for observation sets, the mask
    columns m_1..m_n.  Missing values are empty fields.  Values are written
    with 17 significant digits, so a read-back reproduces them bit-exactly.
    """
    if isinstance(data, ObservationSet):
        y, u, m, dt = data.y_obs, data.u, data.mask, data.dt
    elif isinstance(data, Trajectory):
        y, u, m, dt = data.y, data.u, mask, data.dt
    else:
        raise TypeError("data must be a Trajectory or ObservationSet")
    n_y, n_u = y.shape[1], u.shape[1]
    header = (["t"] + [f"y_{j + 1}" for j in range(n_y)]
              + [f"u_{j + 1}" for j in range(n_u)])
    if m is not None:
        header += [f"m_{j + 1}" for j in range(n_y)]
    with _atomic_writer(path) as handle:
        handle.write(f"# dt = {dt!r}\n")
        writer = csv.writer(handle)
        writer.writerow(header)
        for t in range(y.shape[0]):
            row = [str(t)]
            for j in range(n_y):
                missing = m is not None and not m[t, j]
                row.append("" if missing else _fmt(y[t, j]))
            row.extend(_fmt(u[t, j]) for j in range(n_u))
            if m is not None:
                row.extend("1" if m[t, j] else "0" for j in range(n_y))
            writer.writerow(row)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def import_series(path):
    """Read a CSV written by ``export_series``.

    Returns an ``ObservationSet`` when mask columns are present, otherwise a
    ``Trajectory``.  Raises ``MalformedFileError`` (with the line number) on
    short rows, bad numbers, or empty-field/mask disagreement.
    """
    with open(path, newline="") as handle:
        dt = 1.0
        first = handle.readline()
        if first.startswith("#"):
            try:
                dt = float(first.split("=", 1)[1])
            except (IndexError, ValueError) as exc:
                raise MalformedFileError(
                    f"{path!s}:1: bad dt comment {first!r}") from exc
            offset = 2
            header_line = handle.readline()
        else:
            offset = 1
            header_line = first
        header = next(csv.reader([header_line]))
        n_y = sum(1 for h in header if h.startswith("y_"))
        n_u = sum(1 for h in header if h.startswith("u_"))
        n_m = sum(1 for h in header if h.startswith("m_"))
        if n_y == 0 or header[0] != "t" or (n_m not in (0, n_y)):
            raise MalformedFileError(f"{path!s}: unrecognized header {header}")
        y_rows, u_rows, m_rows = [], [], []
        expected = 1 + n_y + n_u + n_m
        for lineno, row in enumerate(csv.reader(handle), start=offset + 1):
            if not row:
                continue
            if len(row) != expected:
                raise MalformedFileError(
                    f"{path!s}:{lineno}: expected {expected} fields, "
                    f"got {len(row)}")
            try:
                y_vals = [float(v) if v != "" else np.nan
                          for v in row[1:1 + n_y]]
                u_vals = [float(v) for v in row[1 + n_y:1 + n_y + n_u]]
                m_vals = [int(v) for v in row[1 + n_y + n_u:]]
            except ValueError as exc:
                raise MalformedFileError(
                    f"{path!s}:{lineno}: unparseable value ({exc})") from exc
            if n_m:
                for j, (v, mv) in enumerate(zip(row[1:1 + n_y], m_vals)):
                    if (v == "") == bool(mv):
                        raise MalformedFileError(
                            f"{path!s}:{lineno}: empty-field/mask mismatch "
                            f"in column y_{j + 1}")
            elif any(v == "" for v in row[1:1 + n_y]):
                raise MalformedFileError(
                    f"{path!s}:{lineno}: missing value without mask columns")
            y_rows.append(y_vals)
            u_rows.append(u_vals)
            m_rows.append(m_vals)
    y = np.asarray(y_rows, dtype=float)
    u = (np.asarray(u_rows, dtype=float)
         if n_u else np.zeros((y.shape[0], 0)))
    if n_m:
        mask = np.asarray(m_rows, dtype=bool)
        return ObservationSet(y_obs=y, mask=mask, u=u, dt=dt)
    return Trajectory(y=y, u=u, dt=dt)


def emit_report(result: ExperimentResult, path) -> None:
    """Write an experiment result as JSON (config echo, metrics, history)."""
    payload = {
        "version": __version__,
        "config": _config_dict(result.config),
        "metrics": dataclasses.asdict(result.metrics),
        "metrics_post_washout": dataclasses.asdict(result.metrics_post_washout),
        "improvements": [float(e) for e in result.improvements],
        "iterations": result.iterations,
        "converged": result.converged,
        "wall_time": result.wall_time,
        "ensemble": (dataclasses.asdict(result.ensemble_summary)
                     if result.ensemble_summary else None),
    }
    with _atomic_writer(path) as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


_REPORT_KEYS = ("version", "config", "metrics", "metrics_post_washout",
                "improvements", "iterations", "converged", "wall_time",
                "ensemble")


def load_report(path) -> dict:
    """Read a report JSON file and validate its schema."""
    try:
        with open(path) as handle:
            payload = json.load(handle)
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{path!s}: invalid JSON ({exc})") from exc
    missing = [k for k in _REPORT_KEYS if k not in payload]
    if missing:
        raise MalformedFileError(f"{path!s}: missing report keys {missing}")
    if len(payload["improvements"]) != payload["iterations"]:
        raise MalformedFileError(
            f"{path!s}: improvement history length "
            f"{len(payload['improvements'])} != iterations "
            f"{payload['iterations']}")
    return payload


def _config_dict(cfg: ExperimentConfig) -> dict:
    return {
        "system": cfg.system,
        "t_len": cfg.t_len,
        "missing_fraction": cfg.missing_fraction,
        "relaxation": cfg.relaxation,
        "ridge": cfg.ridge,
        "ensemble": cfg.ensemble,
        "reservoir": dataclasses.asdict(cfg.reservoir),
        "fixed_point": dataclasses.asdict(cfg.fixed_point),
        "seeds": {"dynamics": cfg.dynamics_seed,
                  "reservoir": cfg.reservoir.seed,
                  "mask": cfg.mask_seed},
    }


class _atomic_writer:
    """Write-to-temp-then-rename context manager."""

    def __init__(self, path):
        self.path = str(path)

    def __enter__(self):
        directory = os.path.dirname(self.path) or "."
        fd, self.tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        self.handle = os.fdopen(fd, "w", newline="")
        return self.handle

    def __exit__(self, exc_type, exc, tb):
        self.handle.close()
        if exc_type is None:
            os.replace(self.tmp, self.path)
        else:
            os.unlink(self.tmp)
        return False
