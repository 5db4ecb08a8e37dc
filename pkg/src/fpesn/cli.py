"""Command-line interface.

Verbs compose through a run directory: ``gen`` writes the ground truth,
``mask`` the sparse observations, ``baseline`` the interpolants,
``reconstruct`` the reconstruction and a result report, ``report`` the
per-timestep comparison table, ``sweep`` a parameter study, ``jacobian``
the local-convergence diagnostics.  Any verb regenerates missing upstream
artifacts from the (seeded) config, so each one also works standalone.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .errors import ConfigError, NumericalError
from .fixed_point import reconstruct
from .harness import (
    _atomic_writer,
    emit_report,
    export_series,
    generate_truth,
    import_series,
    load_config,
    make_observations,
    run_experiment,
    sweep,
)
from .jacobian import l1_report
from .readout import NormalEquationAccumulator
from .reservoir import build_reservoir, iter_state_blocks
from .sparsity import interp_cubic_spline, interp_linear

_TRUTH = "truth.csv"
_OBS = "observations.csv"
_LIN = "baseline_linear.csv"
_CSP = "baseline_spline.csv"
_RECON = "reconstruction.csv"
_REPORT = "report.json"
_SERIES = "series.csv"
_SWEEP = "sweep.json"
_JACOBIAN = "jacobian.json"


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = _apply_flag_overrides(cfg, args)
        out = args.out
        os.makedirs(out, exist_ok=True)
        return args.func(cfg, out, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fpesn",
        description="Reconstruct nonlinear dynamics from sparse time series")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add(name, func, helptext):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--out", default=".", help="run directory")
        p.add_argument("--omega", type=float, default=None,
                       help="override the missing fraction")
        p.add_argument("--ensemble", type=int, default=None,
                       help="override the ensemble size")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for sweeps")
        p.add_argument("--seed-dynamics", type=int, default=None)
        p.add_argument("--seed-reservoir", type=int, default=None)
        p.add_argument("--seed-mask", type=int, default=None)
        p.set_defaults(func=func)
        return p

    add("gen", _cmd_gen, "generate the ground-truth trajectory")
    add("mask", _cmd_mask, "generate sparse observations")
    add("baseline", _cmd_baseline, "linear and cubic-spline baselines")
    add("reconstruct", _cmd_reconstruct, "run the fixed-point reconstruction")
    add("report", _cmd_report, "emit the per-timestep comparison table")
    p = add("sweep", _cmd_sweep, "run a parameter sweep")
    p.add_argument("--grid", action="append", default=[],
                   metavar="PARAM=V1,V2,...",
                   help="sweep axis (repeatable), e.g. leak=0.4,0.6,0.8")
    p = add("jacobian", _cmd_jacobian, "local-convergence diagnostics")
    p.add_argument("--window", type=int, default=1000,
                   help="trajectory window length for the diagnostics")
    return parser


def _apply_flag_overrides(cfg, args):
    if args.omega is not None:
        cfg = dataclasses.replace(cfg, missing_fraction=args.omega)
    if args.ensemble is not None:
        cfg = dataclasses.replace(cfg, ensemble=args.ensemble)
    if args.seed_dynamics is not None:
        cfg = dataclasses.replace(cfg, dynamics_seed=args.seed_dynamics)
    if args.seed_mask is not None:
        cfg = dataclasses.replace(cfg, mask_seed=args.seed_mask)
    if args.seed_reservoir is not None:
        cfg = dataclasses.replace(
            cfg, reservoir=dataclasses.replace(cfg.reservoir,
                                               seed=args.seed_reservoir))
    return cfg


def _truth(cfg, out):
    path = os.path.join(out, _TRUTH)
    if os.path.exists(path):
        return import_series(path)
    truth = generate_truth(cfg)
    export_series(path, truth)
    return truth


def _observations(cfg, out):
    path = os.path.join(out, _OBS)
    if os.path.exists(path):
        return import_series(path)
    obs = make_observations(cfg, _truth(cfg, out))
    export_series(path, obs)
    return obs


def _cmd_gen(cfg, out, args):
    truth = generate_truth(cfg)
    export_series(os.path.join(out, _TRUTH), truth)
    print(f"wrote {os.path.join(out, _TRUTH)} "
          f"({truth.y.shape[0]} rows, {truth.y.shape[1]} target(s))")
    return 0


def _cmd_mask(cfg, out, args):
    obs = make_observations(cfg, _truth(cfg, out))
    export_series(os.path.join(out, _OBS), obs)
    print(f"wrote {os.path.join(out, _OBS)} "
          f"(missing fraction {obs.missing_fraction:.4f})")
    return 0


def _cmd_baseline(cfg, out, args):
    from .dynamics import Trajectory

    obs = _observations(cfg, out)
    lin = interp_linear(obs.y_obs, obs.mask)
    csp = interp_cubic_spline(obs.y_obs, obs.mask)
    for name, series in ((_LIN, lin), (_CSP, csp)):
        export_series(os.path.join(out, name),
                      Trajectory(y=series, u=obs.u, dt=obs.dt))
        print(f"wrote {os.path.join(out, name)}")
    return 0


def _cmd_reconstruct(cfg, out, args):
    import time
    import warnings

    from .dynamics import Trajectory
    from .harness import ExperimentResult
    from .sparsity import metric_report

    if cfg.ensemble > 1:
        # ensembles regenerate everything from the config (seeded)
        result = run_experiment(cfg)
        emit_report(result, os.path.join(out, _REPORT))
        s = result.ensemble_summary
        print(f"ensemble of {s.n_members}: mean sigma_lin="
              f"{s.mean_sigma_lin:.4f} (std {s.std_sigma_lin:.4f}, "
              f"{s.n_excluded} non-converged excluded)")
        print(f"wrote {os.path.join(out, _REPORT)}")
        return 0

    start = time.perf_counter()
    truth = _truth(cfg, out)
    obs = _observations(cfg, out)
    res = build_reservoir(cfg.reservoir)
    run = reconstruct(res, obs, cfg.fixed_point)
    lin = interp_linear(obs.y_obs, obs.mask)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        csp = interp_cubic_spline(obs.y_obs, obs.mask)
    ws = cfg.fixed_point.washout
    result = ExperimentResult(
        config=cfg,
        metrics=metric_report(run.y_r, lin, csp, truth.y),
        metrics_post_washout=metric_report(run.y_r[ws + 1:], lin[ws + 1:],
                                           csp[ws + 1:], truth.y[ws + 1:]),
        improvements=run.improvements, iterations=run.iterations,
        converged=run.converged, wall_time=time.perf_counter() - start)
    export_series(os.path.join(out, _RECON),
                  Trajectory(y=run.y_r, u=obs.u, dt=obs.dt))
    emit_report(result, os.path.join(out, _REPORT))
    m = result.metrics
    print(f"converged={result.converged} iterations={result.iterations}")
    print(f"nrmse={m.nrmse:.4f} sigma_lin={m.sigma_lin:.4f} "
          f"sigma_csp={m.sigma_csp:.4f}")
    print(f"wrote {os.path.join(out, _RECON)} and {os.path.join(out, _REPORT)}")
    return 0


def _cmd_report(cfg, out, args):
    truth = _truth(cfg, out)
    obs = _observations(cfg, out)
    recon_path = os.path.join(out, _RECON)
    if not os.path.exists(recon_path):
        _cmd_reconstruct(cfg, out, args)
    recon = import_series(recon_path)
    lin = interp_linear(obs.y_obs, obs.mask)
    csp = interp_cubic_spline(obs.y_obs, obs.mask)
    path = os.path.join(out, _SERIES)
    n_y = truth.y.shape[1]
    with _atomic_writer(path) as handle:
        cols = ["t"]
        for j in range(1, n_y + 1):
            cols += [f"truth_{j}", f"observed_{j}", f"recon_{j}",
                     f"linear_{j}", f"spline_{j}"]
        handle.write(",".join(cols) + "\n")
        for t in range(truth.y.shape[0]):
            row = [str(t)]
            for j in range(n_y):
                row += [format(truth.y[t, j], ".17g"),
                        "1" if obs.mask[t, j] else "0",
                        format(recon.y[t, j], ".17g"),
                        format(lin[t, j], ".17g"),
                        format(csp[t, j], ".17g")]
            handle.write(",".join(row) + "\n")
    print(f"wrote {path}")
    return 0


def _cmd_sweep(cfg, out, args):
    grid = {}
    for spec in args.grid:
        if "=" not in spec:
            raise ConfigError(f"bad --grid entry {spec!r}; use PARAM=V1,V2")
        name, _, values = spec.partition("=")
        try:
            grid[name.strip()] = [float(v) if "." in v or "e" in v.lower()
                                  else int(v) for v in values.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad --grid values in {spec!r}") from exc
    if not grid:
        raise ConfigError("sweep requires at least one --grid axis")
    cells = sweep(cfg, grid, jobs=args.jobs)
    payload = []
    for cell in cells:
        entry = {"params": cell["params"], "error": cell["error"]}
        if cell["result"] is not None:
            r = cell["result"]
            entry.update({
                "converged": r.converged,
                "iterations": r.iterations,
                "metrics": dataclasses.asdict(r.metrics),
                "ensemble": (dataclasses.asdict(r.ensemble_summary)
                             if r.ensemble_summary else None),
            })
        payload.append(entry)
    path = os.path.join(out, _SWEEP)
    with _atomic_writer(path) as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")
    for entry in payload:
        status = ("failed: " + entry["error"] if entry["error"]
                  else f"sigma_lin={entry['metrics']['sigma_lin']:.4f} "
                       f"converged={entry['converged']}")
        print(f"{entry['params']}: {status}")
    print(f"wrote {path}")
    return 0


def _cmd_jacobian(cfg, out, args):
    truth = _truth(cfg, out)
    obs = _observations(cfg, out)
    recon_path = os.path.join(out, _RECON)
    if not os.path.exists(recon_path):
        _cmd_reconstruct(cfg, out, args)
    recon = import_series(recon_path)
    res = build_reservoir(cfg.reservoir)
    window = min(args.window, cfg.t_len)
    y_win = recon.y[:window + 1]
    u_win = obs.u[:window + 1] if obs.u.shape[1] else None
    # refit the readout on the reconstruction, as the iteration's last step does
    acc = NormalEquationAccumulator(cfg.reservoir.n_latent + 1, recon.y.shape[1])
    yv = np.where(obs.mask, obs.y_obs, 0.0)
    ws = max(cfg.fixed_point.washout, 1)
    for start, blk in iter_state_blocks(res, recon.y[:-1],
                                        obs.u[:-1] if obs.u.shape[1] else None):
        stop = start + blk.shape[0]
        if stop <= ws:
            continue
        lo = max(ws - start, 0)
        acc.add(blk[lo:], yv[start + lo:stop], obs.mask[start + lo:stop])
    theta = acc.solve(cfg.ridge)
    reports = []
    for target in range(recon.y.shape[1]):
        rep = l1_report(res, theta, y_win[:-1], None if u_win is None
                        else u_win[:-1], relaxation=cfg.relaxation,
                        target=target)
        reports.append(dataclasses.asdict(rep))
        print(f"target {target}: l1_norm={rep.l1_norm:.4f} "
              f"condition_lhs={rep.sufficient_condition_lhs:.4f} "
              f"satisfied={rep.sufficient_condition_satisfied}")
    path = os.path.join(out, _JACOBIAN)
    with _atomic_writer(path) as handle:
        json.dump(reports, handle, indent=2)
        handle.write("\n")
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
