"""Output writers: diagnostics CSV, Newton traces, snapshots, manifest.

All numeric text uses 17 significant digits, so every value round-trips
through the files at full double precision.  Snapshots come in two
flavours per output time: a legacy-VTK structured-grid ASCII file (two
point layers, terrain and lid, with cell scalars) and a plain columnar
file for tools that just want numbers.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DIAGNOSTICS_HEADER = (
    "time,total_V,total_AV,total_rhoV,total_rhoAV,min_A,max_A,max_courant,min_cell_volume"
)
TRACE_HEADER = "step,outer_iter,initial_residual,inner_iters"
SNAPSHOT_HEADER = "x_center,y_center,rho,A,V"


def _fmt(x) -> str:
    return "%.17g" % float(x)


def write_diagnostics(records, path) -> Path:
    """One CSV row per record, in the order given."""
    path = Path(path)
    lines = [DIAGNOSTICS_HEADER]
    for r in records:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    r.time,
                    r.total_v,
                    r.total_av,
                    r.total_rho_v,
                    r.total_rho_av,
                    r.min_adjust,
                    r.max_adjust,
                    r.max_courant,
                    r.min_volume,
                )
            )
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def write_newton_traces(traces, path) -> Path:
    """Flatten per-step Newton traces; step 0 is initial mesh generation."""
    path = Path(path)
    lines = [TRACE_HEADER]
    for step_index, trace in enumerate(traces):
        for outer, rec in enumerate(trace.records, start=1):
            lines.append(
                f"{step_index},{outer},{_fmt(rec.initial_residual)},{rec.inner_iterations}"
            )
    path.write_text("\n".join(lines) + "\n")
    return path


def write_snapshot(mesh, state, time, name, out_dir) -> list:
    """Write VTK and columnar snapshot files; returns their paths.

    Filenames embed the scenario name and the integer time in seconds.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{name}_{int(round(time))}s"
    n = mesh.n

    vtk_path = out_dir / f"{stem}.vtk"
    lines = [
        "# vtk DataFile Version 2.0",
        f"{name} tracer snapshot at t={_fmt(time)} s",
        "ASCII",
        "DATASET STRUCTURED_GRID",
        f"DIMENSIONS {n + 1} {n + 1} 2",
        f"POINTS {2 * (n + 1) * (n + 1)} double",
    ]
    xs = mesh.vertex_x.ravel(order="F")
    ys = mesh.vertex_y.ravel(order="F")
    bottoms = mesh.vertex_bottom.ravel(order="F")
    tops = np.full_like(bottoms, mesh.height)
    for zs in (bottoms, tops):
        for x, y, z in zip(xs, ys, zs):
            lines.append(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}")
    lines.append(f"CELL_DATA {n * n}")
    for label, values in (
        ("rho", state.rho),
        ("A", state.vol_adjust),
        ("V", mesh.volumes),
    ):
        lines.append(f"SCALARS {label} double")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in values.ravel(order="F"))
    vtk_path.write_text("\n".join(lines) + "\n")

    dat_path = out_dir / f"{stem}.dat"
    rows = [SNAPSHOT_HEADER]
    cc = mesh.cell_centres
    for x, y, r, a, v in zip(
        cc[..., 0].ravel(order="F"),
        cc[..., 1].ravel(order="F"),
        state.rho.ravel(order="F"),
        state.vol_adjust.ravel(order="F"),
        mesh.volumes.ravel(order="F"),
    ):
        rows.append(",".join(_fmt(v2) for v2 in (x, y, r, a, v)))
    dat_path.write_text("\n".join(rows) + "\n")

    return [vtk_path, dat_path]


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    version: str
    scenario: str
    config_text: str
    wall_seconds: float
    files: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": self.version,
                "scenario": self.scenario,
                "wall_seconds": self.wall_seconds,
                "config": self.config_text,
                "files": self.files,
            },
            indent=2,
            sort_keys=True,
        )


def write_manifest(cfg, config_text, file_paths, wall_seconds, out_dir) -> Path:
    """Checksum every emitted file into manifest.json (listed exactly once)."""
    from . import __version__

    out_dir = Path(out_dir)
    unique = {}
    for p in file_paths:
        p = Path(p)
        unique[p.name] = _sha256(p)
    manifest = RunManifest(
        version=__version__,
        scenario=cfg.name,
        config_text=config_text,
        wall_seconds=wall_seconds,
        files=unique,
    )
    path = out_dir / "manifest.json"
    path.write_text(manifest.to_json() + "\n")
    return path


def read_diagnostics(path):
    """Load a diagnostics CSV back into a column dict of float arrays."""
    lines = Path(path).read_text().strip().split("\n")
    names = lines[0].split(",")
    rows = [[float(v) for v in line.split(",")] for line in lines[1:]]
    data = np.array(rows) if rows else np.zeros((0, len(names)))
    return {name: data[:, k] for k, name in enumerate(names)}
