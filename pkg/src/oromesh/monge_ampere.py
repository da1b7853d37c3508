"""Optimal-transport mesh generation on the uniform computational grid.

A scalar mesh potential on cell centres defines the physical vertex
positions through x = xi + grad(potential).  The potential solves the
fully nonlinear equation

    det(I + H(potential)) = c / m3

where H is the finite-difference Hessian, m3 the smoothed monitor field
and c the equidistribution constant fixed by compatibility.  Newton's
method linearises the determinant through the cofactor matrix P of
I + H; each outer iteration solves one variable-coefficient Poisson
problem div(Q grad eta) = c/m3 - det(I + H) with Q = P + gamma*I, where
gamma is a single global shift keeping Q positive definite.

All fields live on the n x n computational grid with zero-gradient
(mirror) boundary treatment; the potential is defined up to a constant
and re-centred to zero mean after every update.

The monitor pipeline runs in three stages: ``monitor_raw`` (Frobenius
norm of the tracer Hessian), ``monitor_normalise`` (floor 1, cap r_max)
and ``monitor_smooth`` (implicit diffusion step).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import MeshTanglingError
from .poisson import assemble, rms, solve


class MongeAmpereDivergenceError(RuntimeError):
    """Raised when the Newton residual grows instead of decaying."""


def hessian_components(f, dx):
    """Centred second derivatives (f_xx, f_xy, f_yy) with mirror boundaries.

    The cross term differentiates in x first, then in y, each pass using
    the same centred stencil with edge mirroring.
    """
    f = np.asarray(f, dtype=float)
    p = np.pad(f, 1, mode="edge")
    fxx = (p[2:, 1:-1] - 2.0 * f + p[:-2, 1:-1]) / (dx * dx)
    fyy = (p[1:-1, 2:] - 2.0 * f + p[1:-1, :-2]) / (dx * dx)
    gx = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2.0 * dx)
    pg = np.pad(gx, 1, mode="edge")
    fxy = (pg[1:-1, 2:] - pg[1:-1, :-2]) / (2.0 * dx)
    return fxx, fxy, fyy


def hessian_determinant(phi, dx):
    """Per-cell det(I + H(phi))."""
    pxx, pxy, pyy = hessian_components(phi, dx)
    return (1.0 + pxx) * (1.0 + pyy) - pxy * pxy


@dataclass(frozen=True)
class CofactorField:
    """Cofactor matrix of I + H(phi) with a global ellipticity shift."""

    p_xx: np.ndarray = field(repr=False)
    p_xy: np.ndarray = field(repr=False)
    p_yy: np.ndarray = field(repr=False)
    gamma: float

    @property
    def q_xx(self):
        return self.p_xx + self.gamma

    @property
    def q_xy(self):
        return self.p_xy

    @property
    def q_yy(self):
        return self.p_yy + self.gamma


def cofactor(phi, dx, delta_reg: float = 1e-5) -> CofactorField:
    """Cofactor matrix P of I + H(phi), shifted to Q = P + gamma*I.

    gamma is one global scalar: zero when the smallest eigenvalue of P
    over all cells is already positive, otherwise delta_reg minus that
    eigenvalue, so Q's spectrum starts at delta_reg.
    """
    pxx, pxy, pyy = hessian_components(phi, dx)
    p11 = 1.0 + pyy
    p22 = 1.0 + pxx
    half_tr = 0.5 * (p11 + p22)
    radius = np.sqrt(0.25 * (p11 - p22) ** 2 + pxy * pxy)
    eig_min = float(np.min(half_tr - radius))
    gamma = 0.0 if eig_min > 0.0 else delta_reg - eig_min
    return CofactorField(p_xx=p11, p_xy=-pxy, p_yy=p22, gamma=gamma)


def monitor_raw(rho, dx):
    """Frobenius norm of the Hessian of the source field."""
    rxx, rxy, ryy = hessian_components(rho, dx)
    return np.sqrt(rxx * rxx + 2.0 * rxy * rxy + ryy * ryy)


def monitor_normalise(m1, r_max: float = 4.0):
    """Scale to min(1 + m1/mean(m1), r_max); all ones when m1 vanishes."""
    m1 = np.asarray(m1, dtype=float)
    if np.any(m1 < 0.0):
        raise ValueError("raw monitor must be non-negative")
    mu = float(m1.mean())
    if mu == 0.0:
        return np.ones_like(m1)
    return np.minimum(1.0 + m1 / mu, r_max)


def monitor_smooth(m2, dx, smoothing: float = 20.0):
    """Implicit smoothing (I - (smoothing*dx^2/4) lap) m3 = m2, clamped > 0.

    smoothing = 0 returns m2 unchanged.  The elliptic solve is driven to
    near machine precision; failure to converge is an error.
    """
    m2 = np.asarray(m2, dtype=float)
    if smoothing == 0.0:
        return m2.copy()
    k = smoothing * dx * dx / 4.0
    problem = assemble(k, 0.0, k, -m2, dx, identity_coeff=1.0)
    m3, info = solve(problem, rel_tol=1e-12, abs_tol=1e-13, max_iter=400, x0=m2)
    if not info.converged:
        raise RuntimeError(
            f"monitor smoothing solve stalled at residual {info.residuals[-1]:.3e}"
        )
    return np.maximum(m3, 1e-8)


def equidistribution_constant(phi, m3, dx) -> float:
    """Compatibility constant c = sum(det(I+H)) / sum(1/m3).

    Makes c/m3 - det(I+H) zero-mean, as required by the pure-Neumann
    linearised problem.
    """
    det = hessian_determinant(phi, dx)
    return float(det.sum() / (1.0 / np.asarray(m3, dtype=float)).sum())


@dataclass(frozen=True)
class NewtonParams:
    """Newton-solve knobs.

    max_inner caps the conjugate-gradient iterations per linear solve; it
    is a safety net, not a tolerance.  The solver normally stops at
    rel_tol, which needs on the order of 1.4*N iterations at resolution
    N, so the cap is sized to keep the linear solves non-limiting through
    N ~ 250.
    """

    max_outer: int = 9
    rel_tol: float = 0.01
    abs_tol: float = 0.0
    max_inner: int = 400
    delta_reg: float = 1e-5
    early_exit: float = 1e-10
    divergence_ratio: float = 10.0


@dataclass(frozen=True)
class NewtonRecord:
    initial_residual: float
    inner_iterations: int
    constant: float
    gamma: float


@dataclass
class NewtonTrace:
    records: list

    @property
    def initial_residuals(self):
        return [r.initial_residual for r in self.records]

    @property
    def inner_iterations(self):
        return [r.inner_iterations for r in self.records]

    def __len__(self):
        return len(self.records)


def newton_step(phi, m3, dx, params: NewtonParams = NewtonParams()):
    """One Newton update of the mesh potential.

    Returns (phi_new, NewtonRecord).  The linear solve is deliberately
    loose (relative 0.01, few iterations); under-solving early steps is
    part of the method.
    """
    phi = np.asarray(phi, dtype=float)
    m3 = np.asarray(m3, dtype=float)
    det = hessian_determinant(phi, dx)
    c = float(det.sum() / (1.0 / m3).sum())
    rhs = c / m3 - det
    rhs = rhs - rhs.mean()
    cof = cofactor(phi, dx, params.delta_reg)
    problem = assemble(cof.q_xx, cof.q_xy, cof.q_yy, rhs, dx)
    eta, info = solve(
        problem,
        rel_tol=params.rel_tol,
        abs_tol=params.abs_tol,
        max_iter=params.max_inner,
    )
    phi_new = phi + eta
    phi_new = phi_new - phi_new.mean()
    record = NewtonRecord(
        initial_residual=info.initial_residual,
        inner_iterations=info.iterations,
        constant=c,
        gamma=cof.gamma,
    )
    return phi_new, record


def displaced_cell_centres(phi, half_length):
    """Cell-centre positions under the mesh map, centre + grad(phi).

    Companion to mesh_from_potential for sampling analytic fields at the
    positions the current potential assigns to each cell; the gradient is
    taken directly on the cell-centre grid.
    """
    phi = np.asarray(phi, dtype=float)
    n = phi.shape[0]
    dx = 2.0 * half_length / n
    gx, gy = np.gradient(phi, dx)
    c = -half_length + dx * (np.arange(n) + 0.5)
    return np.stack([c[:, None] + gx, c[None, :] + gy], axis=-1)


def solve_monge_ampere(monitor, dx, phi0=None, params: NewtonParams = NewtonParams()):
    """Newton iteration for the mesh potential.

    monitor is either a fixed cell field m3 (the tracer-driven case,
    where density values exist only at the cells of the mesh being
    replaced) or a callable phi -> m3, re-evaluated before every
    iteration (the analytic case; monitor and mesh then converge to
    their coupled fixed point, which is what makes the generated mesh
    consistent with fields later sampled on it).

    Starts from phi0 (zeros when omitted; the previous step's potential
    when warm-starting).  Stops early when the residual entering an
    iteration falls below params.early_exit, or when a solve makes no
    progress.  A residual growing more than params.divergence_ratio-fold
    across consecutive iterations raises MongeAmpereDivergenceError.
    """
    if callable(monitor):
        get_m3 = monitor
        if phi0 is None:
            raise ValueError("a callable monitor needs phi0 to fix the grid shape")
    else:
        fixed = np.asarray(monitor, dtype=float)
        get_m3 = lambda _phi: fixed
        if phi0 is None:
            phi0 = np.zeros_like(fixed)
    phi = np.asarray(phi0, dtype=float).copy()
    phi -= phi.mean()
    records = []
    prev = None
    for _ in range(params.max_outer):
        m3 = np.asarray(get_m3(phi), dtype=float)
        phi, rec = newton_step(phi, m3, dx, params)
        records.append(rec)
        if prev is not None and rec.initial_residual > params.divergence_ratio * prev:
            raise MongeAmpereDivergenceError(
                f"Newton residual grew from {prev:.3e} to {rec.initial_residual:.3e}"
            )
        prev = rec.initial_residual
        if rec.initial_residual < params.early_exit or rec.inner_iterations == 0:
            break
    return phi, NewtonTrace(records)


def mesh_from_potential(phi, half_length):
    """Vertex positions xi + grad(phi) on [-half_length, half_length]^2.

    phi lives on cell centres; it is averaged to vertices (4 adjacent
    cells inside, 2 on edges, 1 at corners) and differentiated there,
    centred inside and one-sided on the boundary.  Boundary vertices keep
    only the tangential displacement component, which pins the domain
    rectangle exactly and fixes the corners.  Raises MeshTanglingError
    if any displaced quad inverts.
    """
    phi = np.asarray(phi, dtype=float)
    n = phi.shape[0]
    if phi.shape != (n, n):
        raise ValueError("potential must be square (n, n)")
    dx = 2.0 * half_length / n

    acc = np.zeros((n + 1, n + 1))
    cnt = np.zeros((n + 1, n + 1))
    for di in (0, 1):
        for dj in (0, 1):
            acc[di : di + n, dj : dj + n] += phi
            cnt[di : di + n, dj : dj + n] += 1.0
    phi_v = acc / cnt

    gx, gy = np.gradient(phi_v, dx)
    lin = np.linspace(-half_length, half_length, n + 1)
    x = lin[:, None] + gx
    y = lin[None, :] + gy
    x[0, :] = -half_length
    x[-1, :] = half_length
    y[:, 0] = -half_length
    y[:, -1] = half_length

    pos = np.stack([x, y], axis=-1)
    v00 = pos[:-1, :-1]
    v10 = pos[1:, :-1]
    v11 = pos[1:, 1:]
    v01 = pos[:-1, 1:]

    def turn(a, b, c):
        # cross product of (b - a) and (c - a)
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
            b[..., 1] - a[..., 1]
        ) * (c[..., 0] - a[..., 0])

    ok = (
        (turn(v00, v10, v01) > 0.0)
        & (turn(v10, v11, v00) > 0.0)
        & (turn(v11, v01, v10) > 0.0)
        & (turn(v01, v00, v11) > 0.0)
    )
    if not np.all(ok):
        bad = int(np.count_nonzero(~ok))
        raise MeshTanglingError(f"potential displacement inverts {bad} cell(s)")
    return pos
