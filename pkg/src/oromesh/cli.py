"""Command-line driver.

Subcommands:

  run          one scenario; writes diagnostics.csv, newton_traces.csv,
               snapshots at the output cadence, and manifest.json
  mesh         initial mesh generation only; writes the Newton trace and
               a snapshot of the adapted mesh
  convergence  error-versus-resolution sweep with the standard dt pairing
               (dt = 50/n); writes convergence.csv

Flags mirror the configuration file; anything given on the command line
overrides the file.
"""

from __future__ import annotations

import argparse
import sys
import time as _time
from pathlib import Path

import numpy as np

from .advection import AdjustedState
from .config import ConfigError, parse_config, serialise_config
from .io import (
    write_diagnostics,
    write_manifest,
    write_newton_traces,
    write_snapshot,
)
from .scenarios import (
    ScenarioError,
    convergence_study,
    init_tracer,
    initial_adapted_mesh,
    run_scenario,
)

_OROGRAPHY_CHOICES = ("flat", "smooth", "steep")


def _add_common(parser):
    parser.add_argument("--config", help="configuration file (key=value sections)")
    parser.add_argument("--out-dir", default="out", help="output directory (default: out)")
    parser.add_argument(
        "--no-volume-adjust",
        action="store_true",
        help="disable the volume adjustment (A forced to 1)",
    )
    parser.add_argument(
        "--fixed-mesh", action="store_true", help="keep the mesh uniform and static"
    )
    parser.add_argument(
        "--orography", choices=_OROGRAPHY_CHOICES, help="terrain shape override"
    )
    parser.add_argument("--revolutions", help="rotation periods (e.g. 0.5 or 1/12)")
    parser.add_argument(
        "--seed-scale",
        type=int,
        metavar="N",
        help="cells per direction; also pairs the time step as dt = 50/N",
    )


def _overrides(args) -> dict:
    over = {}
    if args.no_volume_adjust:
        over["solver.use_volume_adjust"] = "false"
    if args.fixed_mesh:
        over["solver.move_mesh"] = "false"
    if args.orography:
        over["orography.kind"] = args.orography
    if args.revolutions is not None:
        over["domain.revolutions"] = args.revolutions
    if args.seed_scale is not None:
        over["domain.n"] = str(args.seed_scale)
        over["domain.dt"] = repr(50.0 / args.seed_scale)
    return over


def _cmd_run(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []

    def snap(_, t, mesh, state):
        files.extend(write_snapshot(mesh, state, t, cfg.name, out_dir))

    started = _time.perf_counter()
    try:
        result = run_scenario(cfg, on_snapshot=snap)
    except ScenarioError as exc:
        files.append(write_diagnostics(exc.diagnostics, out_dir / "diagnostics.csv"))
        files.append(write_newton_traces(exc.newton_traces, out_dir / "newton_traces.csv"))
        write_manifest(
            cfg, serialise_config(cfg), files, _time.perf_counter() - started, out_dir
        )
        print(f"run aborted: {exc}", file=sys.stderr)
        return 1

    files.append(write_diagnostics(result.diagnostics, out_dir / "diagnostics.csv"))
    files.append(write_newton_traces(result.newton_traces, out_dir / "newton_traces.csv"))
    write_manifest(cfg, serialise_config(cfg), files, result.wall_time, out_dir)

    first, last = result.diagnostics[0], result.diagnostics[-1]
    av_drift = abs(last.total_av - first.total_av) / abs(first.total_av)
    mass_drift = abs(last.total_rho_av - first.total_rho_av) / max(
        abs(first.total_rho_av), 1e-300
    )
    max_c = max(r.max_courant for r in result.diagnostics)
    print(f"scenario {cfg.name}: {cfg.n_steps} steps in {result.wall_time:.1f} s")
    print(f"  L2 error vs exact rotation: {result.error:.6e}")
    print(f"  conservation drift: AV {av_drift:.3e}, rho*AV {mass_drift:.3e}")
    print(f"  max |Courant| {max_c:.3f}, min A {min(r.min_adjust for r in result.diagnostics):.6f}")
    print(f"  outputs in {out_dir}")
    return 0


def _cmd_mesh(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    started = _time.perf_counter()
    mesh, _phi, trace = initial_adapted_mesh(cfg)
    rho = init_tracer(
        mesh.cell_centres[..., :2], cfg.initial_condition, cfg.tracer_centre, cfg.tracer_radius
    )
    state = AdjustedState(rho=rho, vol_adjust=np.ones_like(rho), av=mesh.volumes.copy())

    files = list(write_snapshot(mesh, state, 0.0, cfg.name, out_dir))
    if trace is not None:
        files.append(write_newton_traces([trace], out_dir / "newton_traces.csv"))
    write_manifest(cfg, serialise_config(cfg), files, _time.perf_counter() - started, out_dir)

    if trace is not None:
        residuals = trace.initial_residuals
        print(f"initial mesh for {cfg.name}: {len(residuals)} Newton iterations")
        print(f"  residuals {residuals[0]:.3e} -> {residuals[-1]:.3e}")
    else:
        print(f"initial mesh for {cfg.name}: fixed uniform mesh")
    print(f"  cell volume ratio max/min: {mesh.volumes.max() / mesh.volumes.min():.3f}")
    print(f"  outputs in {out_dir}")
    return 0


def _cmd_convergence(args) -> int:
    base_overrides = _overrides(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ns = tuple(int(v) for v in args.resolutions.split(","))

    started = _time.perf_counter()
    cfg0 = parse_config(args.config, base_overrides)
    study = convergence_study(
        ns=ns,
        move_mesh=cfg0.move_mesh,
        use_volume_adjust=cfg0.use_volume_adjust,
        orography_kind=cfg0.orography.kind,
        revolutions=cfg0.revolutions,
    )

    lines = ["n,dt,l2_error"]
    print("      n        dt       L2 error")
    for n, dt, err in study.entries:
        lines.append(f"{n},{dt!r},{err!r}")
        print(f"  {n:5d}  {dt:8.4f}   {err:.6e}")
    print(f"least-squares order of accuracy: {study.slope:.3f}")
    table = out_dir / "convergence.csv"
    table.write_text("\n".join(lines) + "\n")
    write_manifest(
        cfg0, serialise_config(cfg0), [table], _time.perf_counter() - started, out_dir
    )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="oromesh",
        description="Conservative tracer advection on adaptive moving meshes over terrain.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_mesh = sub.add_parser("mesh", help="generate the initial adapted mesh only")
    _add_common(p_mesh)
    p_mesh.set_defaults(func=_cmd_mesh)

    p_conv = sub.add_parser("convergence", help="error-versus-resolution sweep")
    _add_common(p_conv)
    p_conv.add_argument(
        "--resolutions",
        default="50,100,200",
        help="comma-separated cell counts (default: 50,100,200)",
    )
    p_conv.set_defaults(func=_cmd_convergence)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
