"""Rotating-tracer experiments over orography.

A cosine tracer bubble rides a steady, non-divergent rotation inside a
square box: solid-body rotation out to ``r_inner``, a linear taper to
rest at ``r_outer``.  The bubble stays inside the solid-body region, so
after whole revolutions (period pi/omega) the exact field equals the
initial one; at intermediate times it is the initial bubble rotated by
angle 2*omega*t.

``run_scenario`` drives the full pipeline per step: monitor from the
current tracer (or from the analytic bubble when the tracer itself is
uniform and carries no structure), warm-started Newton solve for the
mesh potential, vertex displacement, swept volumes, adjustment
transport, RK2 advection, diagnostics.  Everything is deterministic;
repeated runs produce bit-identical results.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from .advection import AdjustedState, face_fluxes_from_stream, step
from .geometry import ColumnMesh, apply_vertex_positions, build_mesh
from .monge_ampere import (
    NewtonParams,
    displaced_cell_centres,
    mesh_from_potential,
    monitor_normalise,
    monitor_raw,
    monitor_smooth,
    solve_monge_ampere,
)
from .orography import OrographySpec

MONITOR_SOURCES = ("auto", "tracer", "analytic_bubble")
INITIAL_CONDITIONS = ("cosine_bubble", "uniform")


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete run description; the defaults are the control experiment."""

    name: str = "control"
    n: int = 100
    half_length: float = 5000.0
    height: float = 1000.0
    dt: float = 0.5
    revolutions: float = 1.0
    orography: OrographySpec = OrographySpec(kind="smooth_cosine")
    initial_condition: str = "cosine_bubble"
    use_volume_adjust: bool = True
    move_mesh: bool = True
    alpha: float = 0.5
    omega: float = math.pi / 600.0
    r_inner: float = 3800.0
    r_outer: float = 5000.0
    tracer_radius: float = 1000.0
    tracer_centre: tuple = (0.0, 2500.0)
    r_max: float = 4.0
    monitor_smoothing: float = 20.0
    monitor_source: str = "auto"
    initial_outer: int = 9
    step_outer: int = 4
    newton_rel_tol: float = 0.01
    newton_abs_tol: float = 0.0
    max_inner: int = 400
    delta_reg: float = 1e-5
    output_every: int = 50

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.revolutions <= 0.0:
            raise ValueError("revolutions must be positive")
        if self.omega <= 0.0:
            raise ValueError("omega must be positive")
        if not (0.0 < self.r_inner < self.r_outer <= self.half_length):
            raise ValueError("need 0 < r_inner < r_outer <= half_length")
        seam = stream_seam_mismatch(self.omega, self.r_inner, self.r_outer)
        if seam > 1e-12:
            raise ValueError(f"stream-function branches disagree at a seam radius ({seam:.3g})")
        if self.initial_condition not in INITIAL_CONDITIONS:
            raise ValueError(f"unknown initial_condition {self.initial_condition!r}")
        if self.monitor_source not in MONITOR_SOURCES:
            raise ValueError(f"unknown monitor_source {self.monitor_source!r}")
        # fastest flow is the solid-body rim; keep the advective step stable
        dx = 2.0 * self.half_length / self.n
        courant = self.dt * 2.0 * self.omega * self.r_inner / dx
        if courant >= 1.0:
            raise ValueError(f"advective Courant number {courant:.2f} >= 1; reduce dt")

    @property
    def steps_per_revolution(self) -> int:
        return round(math.pi / (self.omega * self.dt))

    @property
    def n_steps(self) -> int:
        return round(self.revolutions * math.pi / (self.omega * self.dt))

    def resolved_monitor_source(self) -> str:
        if self.monitor_source != "auto":
            return self.monitor_source
        return "tracer" if self.initial_condition == "cosine_bubble" else "analytic_bubble"


def control_config(**overrides) -> ScenarioConfig:
    """The control experiment, optionally with fields replaced."""
    return replace(ScenarioConfig(), **overrides) if overrides else ScenarioConfig()


def stream_function(x, y, omega, r_inner, r_outer):
    """Three-branch rotation stream function, constant outside r_outer.

    Solid body (psi = omega r^2) inside r_inner, then a linear decay of
    the azimuthal speed to zero at r_outer, then constant.  Continuous at
    both seams.
    """
    r = np.hypot(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    inner = omega * r * r
    ramp = omega * r_inner * (
        r_inner + (r - r_inner) * ((r_outer - r) / (r_outer - r_inner) + 1.0)
    )
    outer = omega * r_inner * r_outer
    return np.where(r <= r_inner, inner, np.where(r <= r_outer, ramp, outer))


def stream_seam_mismatch(omega, r_inner, r_outer) -> float:
    """Relative stream-function jump across the two branch seams.

    Evaluates the profile one ulp either side of each seam radius and
    returns the larger jump relative to the outer plateau value.
    """
    scale = abs(omega * r_inner * r_outer)
    worst = 0.0
    for seam in (r_inner, r_outer):
        lo = float(stream_function(np.nextafter(seam, 0.0), 0.0, omega, r_inner, r_outer))
        hi = float(stream_function(np.nextafter(seam, np.inf), 0.0, omega, r_inner, r_outer))
        worst = max(worst, abs(hi - lo))
    return worst / scale


def init_tracer(points_xy, kind="cosine_bubble", centre=(0.0, 2500.0), radius=1000.0):
    """Initial tracer density at the given horizontal points."""
    p = np.asarray(points_xy, dtype=float)
    if kind == "uniform":
        return np.ones(p.shape[:-1])
    if kind != "cosine_bubble":
        raise ValueError(f"unknown initial_condition {kind!r}")
    r = np.hypot(p[..., 0] - centre[0], p[..., 1] - centre[1])
    return np.where(r <= radius, 0.5 * (1.0 + np.cos(np.pi * np.minimum(r, radius) / radius)), 0.0)


def exact_tracer(points_xy, t, omega, centre=(0.0, 2500.0), radius=1000.0):
    """Bubble rotated by angle 2*omega*t; exact while it stays solid-body."""
    angle = 2.0 * omega * t
    c, s = math.cos(angle), math.sin(angle)
    cx = c * centre[0] - s * centre[1]
    cy = s * centre[0] + c * centre[1]
    return init_tracer(points_xy, "cosine_bubble", (cx, cy), radius)


def l2_error(rho, rho_exact, weights) -> float:
    """Volume-weighted relative L2 norm of (rho - rho_exact)."""
    rho = np.asarray(rho, dtype=float)
    rho_exact = np.asarray(rho_exact, dtype=float)
    w = np.asarray(weights, dtype=float)
    denom = float((w * rho_exact * rho_exact).sum())
    if denom == 0.0:
        raise ValueError("exact field is identically zero; relative error undefined")
    return math.sqrt(float((w * (rho - rho_exact) ** 2).sum()) / denom)


@dataclass(frozen=True)
class DiagnosticsRecord:
    time: float
    total_v: float
    total_av: float
    total_rho_v: float
    total_rho_av: float
    min_adjust: float
    max_adjust: float
    max_courant: float
    min_volume: float


@dataclass
class RunResult:
    config: ScenarioConfig
    mesh: ColumnMesh
    state: AdjustedState
    diagnostics: list
    newton_traces: list
    error: float
    rho_min: float
    rho_max: float
    wall_time: float


class ScenarioError(RuntimeError):
    """Run aborted; carries whatever diagnostics accumulated before."""

    def __init__(self, message, diagnostics=None, newton_traces=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []
        self.newton_traces = newton_traces or []


def _record(t, mesh, state, max_courant):
    rho_v = state.rho * mesh.volumes
    return DiagnosticsRecord(
        time=t,
        total_v=float(mesh.volumes.sum()),
        total_av=float(state.av.sum()),
        total_rho_v=float(rho_v.sum()),
        total_rho_av=float((state.rho * state.av).sum()),
        min_adjust=float(state.vol_adjust.min()),
        max_adjust=float(state.vol_adjust.max()),
        max_courant=max_courant,
        min_volume=float(mesh.volumes.min()),
    )


def _newton_params(cfg: ScenarioConfig) -> NewtonParams:
    return NewtonParams(
        max_outer=cfg.initial_outer,
        rel_tol=cfg.newton_rel_tol,
        abs_tol=cfg.newton_abs_tol,
        max_inner=cfg.max_inner,
        delta_reg=cfg.delta_reg,
    )


def _monitor_pipeline(cfg: ScenarioConfig, dx, field):
    m1 = monitor_raw(field, dx)
    m2 = monitor_normalise(m1, cfg.r_max)
    return monitor_smooth(m2, dx, cfg.monitor_smoothing)


def _analytic_monitor(cfg: ScenarioConfig, dx, t):
    """Monitor callback sampling the analytic field at each iterate.

    Re-evaluating at every Newton iterate's cell positions lets the mesh
    and its monitor settle to a joint fixed point, so fields later
    sampled on the generated mesh reproduce the converged monitor.
    """
    source_kind = cfg.resolved_monitor_source()

    def monitor(phi_k):
        pos = displaced_cell_centres(phi_k, cfg.half_length)
        if source_kind == "analytic_bubble":
            field = exact_tracer(pos, t, cfg.omega, cfg.tracer_centre, cfg.tracer_radius)
        else:
            field = init_tracer(pos, cfg.initial_condition, cfg.tracer_centre, cfg.tracer_radius)
        return _monitor_pipeline(cfg, dx, field)

    return monitor


def initial_adapted_mesh(cfg: ScenarioConfig):
    """Uniform mesh adapted to the initial condition.

    Returns (mesh, phi, trace); phi and trace are None for fixed-mesh
    configurations.
    """
    mesh = build_mesh(cfg.n, cfg.half_length, cfg.height, cfg.orography)
    if not cfg.move_mesh:
        return mesh, None, None
    phi, trace = solve_monge_ampere(
        _analytic_monitor(cfg, mesh.dx, 0.0),
        mesh.dx,
        phi0=np.zeros((cfg.n, cfg.n)),
        params=_newton_params(cfg),
    )
    mesh = apply_vertex_positions(mesh, mesh_from_potential(phi, cfg.half_length))
    return mesh, phi, trace


def run_scenario(cfg: ScenarioConfig, on_snapshot=None) -> RunResult:
    """Run one scenario to completion.

    on_snapshot(step_index, time, mesh, state), when given, is called at
    the configured output cadence (every output_every steps, plus step 0
    and the final step).  Raises ScenarioError on tangling, Courant
    violation or solver failure, carrying partial diagnostics.
    """
    started = _time.perf_counter()
    source_kind = cfg.resolved_monitor_source()
    step_params = replace(_newton_params(cfg), max_outer=cfg.step_outer)

    def step_monitor(current_rho, t):
        if source_kind == "tracer":
            return _monitor_pipeline(cfg, dx, current_rho)
        return _analytic_monitor(cfg, dx, t)

    diagnostics = []
    traces = []
    try:
        mesh, phi, trace = initial_adapted_mesh(cfg)
        dx = mesh.dx
        if trace is not None:
            traces.append(trace)

        rho = init_tracer(
            mesh.cell_centres[..., :2], cfg.initial_condition, cfg.tracer_centre, cfg.tracer_radius
        )
        state = AdjustedState(rho=rho, vol_adjust=np.ones_like(rho), av=mesh.volumes.copy())
        vx, vy = mesh.vertex_x, mesh.vertex_y
        fluxes = face_fluxes_from_stream(
            stream_function(vx, vy, cfg.omega, cfg.r_inner, cfg.r_outer), cfg.height
        )

        diagnostics.append(_record(0.0, mesh, state, 0.0))
        rho_min = float(state.rho.min())
        rho_max = float(state.rho.max())
        if on_snapshot is not None:
            on_snapshot(0, 0.0, mesh, state)

        n_steps = cfg.n_steps
        for k in range(1, n_steps + 1):
            t = k * cfg.dt
            if cfg.move_mesh:
                phi, trace = solve_monge_ampere(
                    step_monitor(state.rho, t), dx, phi0=phi, params=step_params
                )
                traces.append(trace)
                mesh_new = apply_vertex_positions(mesh, mesh_from_potential(phi, cfg.half_length))
                fluxes_new = face_fluxes_from_stream(
                    stream_function(
                        mesh_new.vertex_x, mesh_new.vertex_y, cfg.omega, cfg.r_inner, cfg.r_outer
                    ),
                    cfg.height,
                )
            else:
                mesh_new = mesh
                fluxes_new = fluxes

            state, info = step(
                state, mesh, mesh_new, fluxes, fluxes_new, cfg.dt, cfg.alpha, cfg.use_volume_adjust
            )
            mesh = mesh_new
            fluxes = fluxes_new

            diagnostics.append(_record(t, mesh, state, info.max_courant))
            rho_min = min(rho_min, float(state.rho.min()))
            rho_max = max(rho_max, float(state.rho.max()))
            if on_snapshot is not None and (k % cfg.output_every == 0 or k == n_steps):
                on_snapshot(k, t, mesh, state)
    except Exception as exc:
        raise ScenarioError(str(exc), diagnostics, traces) from exc

    if cfg.initial_condition == "uniform":
        exact = np.ones_like(state.rho)
    else:
        exact = exact_tracer(
            mesh.cell_centres[..., :2],
            n_steps * cfg.dt,
            cfg.omega,
            cfg.tracer_centre,
            cfg.tracer_radius,
        )
    err = l2_error(state.rho, exact, state.av)

    return RunResult(
        config=cfg,
        mesh=mesh,
        state=state,
        diagnostics=diagnostics,
        newton_traces=traces,
        error=err,
        rho_min=rho_min,
        rho_max=rho_max,
        wall_time=_time.perf_counter() - started,
    )


@dataclass
class ConvergenceStudy:
    entries: list  # (n, dt, l2 error)
    slope: float
    results: list = field(repr=False, default_factory=list)


def convergence_study(
    ns=(50, 100, 200),
    move_mesh=True,
    use_volume_adjust=True,
    orography_kind="smooth_cosine",
    revolutions=1.0,
    precomputed=None,
) -> ConvergenceStudy:
    """L2 error after whole revolutions across resolutions, dt paired as 50/n.

    precomputed maps n to an existing RunResult to reuse (the control run,
    typically).  The slope is the least-squares order of accuracy in dx.
    """
    entries = []
    results = []
    for n in ns:
        res = precomputed.get(n) if precomputed else None
        if res is None:
            cfg = control_config(
                name=f"convergence_n{n}",
                n=n,
                dt=50.0 / n,
                move_mesh=move_mesh,
                use_volume_adjust=use_volume_adjust,
                orography=OrographySpec(kind=orography_kind),
                revolutions=revolutions,
            )
            res = run_scenario(cfg)
        entries.append((n, res.config.dt, res.error))
        results.append(res)
    log_dx = np.log([1.0 / n for n, _, _ in entries])
    log_err = np.log([e for _, _, e in entries])
    slope = float(np.polyfit(log_dx, log_err, 1)[0])
    return ConvergenceStudy(entries=entries, slope=slope, results=results)
