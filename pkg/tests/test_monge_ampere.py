"""Tests for optimal-transport mesh generation.

Covers the finite-difference Hessian against polynomial fields, the exact
discrete linearisation identity of the determinant, the monitor pipeline
(with a dense direct solve as the smoothing oracle), and the Newton solver:
an identity monitor must produce zero displacement, a focused monitor must
equidistribute, and growing residuals must raise.
"""

import numpy as np
import pytest

from oromesh.geometry import MeshTanglingError
from oromesh.monge_ampere import (
    MongeAmpereDivergenceError,
    NewtonParams,
    NewtonTrace,
    cofactor,
    displaced_cell_centres,
    equidistribution_constant,
    hessian_components,
    hessian_determinant,
    mesh_from_potential,
    monitor_normalise,
    monitor_raw,
    monitor_smooth,
    newton_step,
    solve_monge_ampere,
)
from oromesh.scenarios import init_tracer

L = 5000.0


def centred_grid(n, half_length=L):
    dx = 2 * half_length / n
    c = -half_length + dx * (np.arange(n) + 0.5)
    X, Y = np.meshgrid(c, c, indexing="ij")
    return X, Y, dx


def bubble_monitor(n, r_max=4.0, smoothing=20.0):
    X, Y, dx = centred_grid(n)
    field = init_tracer(np.stack([X, Y], axis=-1), "cosine_bubble", (0.0, 2500.0), 1000.0)
    return monitor_smooth(monitor_normalise(monitor_raw(field, dx), r_max), dx, smoothing), dx


# ---------------------------------------------------------------------------
# Hessian
# ---------------------------------------------------------------------------


def test_hessian_exact_on_quadratic():
    X, Y, dx = centred_grid(16)
    f = 0.5 * X * X + 3.0 * X * Y + 2.0 * Y * Y
    fxx, fxy, fyy = hessian_components(f, dx)
    inner = np.s_[1:-1, 1:-1]
    assert fxx[inner] == pytest.approx(1.0, rel=1e-9)
    assert fxy[inner] == pytest.approx(3.0, rel=1e-9)
    assert fyy[inner] == pytest.approx(4.0, rel=1e-9)


def test_hessian_of_constant_is_zero():
    fxx, fxy, fyy = hessian_components(np.full((10, 10), 7.0), dx=3.0)
    assert np.all(fxx == 0.0) and np.all(fxy == 0.0) and np.all(fyy == 0.0)


def test_hessian_determinant_identity_map():
    det = hessian_determinant(np.zeros((8, 8)), dx=1.0)
    assert np.all(det == 1.0)


def test_hessian_determinant_isotropic_stretch():
    X, Y, dx = centred_grid(20)
    a = 1e-8  # keep the quadratic small against the domain scale
    det = hessian_determinant(0.5 * a * (X * X + Y * Y), dx)
    assert det[2:-2, 2:-2] == pytest.approx((1.0 + a) ** 2, rel=1e-8)


# ---------------------------------------------------------------------------
# cofactor and the linearisation identity
# ---------------------------------------------------------------------------


def rough_potential(n, seed, amplitude):
    rng = np.random.default_rng(seed)
    X, Y, dx = centred_grid(n)
    k = np.pi / L
    phi = np.zeros((n, n))
    for _ in range(4):
        ax, ay = rng.uniform(0.5, 2.0, 2)
        px, py = rng.uniform(0, 2 * np.pi, 2)
        phi += amplitude * np.sin(ax * k * X + px) * np.sin(ay * k * Y + py)
    return phi, dx


def test_cofactor_structure_and_shift():
    phi, dx = rough_potential(24, seed=0, amplitude=2e6)
    pxx, pxy, pyy = hessian_components(phi, dx)
    cof = cofactor(phi, dx, delta_reg=1e-5)
    assert np.all(cof.p_xx == 1.0 + pyy)
    assert np.all(cof.p_yy == 1.0 + pxx)
    assert np.all(cof.p_xy == -pxy)
    # the shift makes the smallest eigenvalue of Q exactly delta_reg
    mats = np.empty(phi.shape + (2, 2))
    mats[..., 0, 0] = cof.q_xx
    mats[..., 1, 1] = cof.q_yy
    mats[..., 0, 1] = mats[..., 1, 0] = cof.q_xy
    eig_min = np.linalg.eigvalsh(mats)[..., 0].min()
    assert cof.gamma > 0.0
    assert eig_min == pytest.approx(1e-5, rel=1e-6)


def test_cofactor_no_shift_when_elliptic():
    phi, dx = rough_potential(24, seed=1, amplitude=1e3)
    assert cofactor(phi, dx).gamma == 0.0


def test_determinant_linearisation_identity():
    # the Hessian is linear in the potential, so the determinant expansion
    # det(I + H(phi + eta)) = det(I + H(phi)) + P(phi) : H(eta) + det(H(eta))
    # holds exactly; check it to 1e-12 on random fields
    phi, dx = rough_potential(30, seed=2, amplitude=2e4)
    eta, _ = rough_potential(30, seed=3, amplitude=2e2)
    det0 = hessian_determinant(phi, dx)
    det1 = hessian_determinant(phi + eta, dx)
    cof = cofactor(phi, dx)
    exx, exy, eyy = hessian_components(eta, dx)
    first_order = cof.p_xx * exx + 2.0 * cof.p_xy * exy + cof.p_yy * eyy
    quadratic = exx * eyy - exy * exy
    residual = det1 - det0 - first_order - quadratic
    assert np.abs(residual).max() <= 1e-12 * np.abs(det1).max()


# ---------------------------------------------------------------------------
# monitor pipeline
# ---------------------------------------------------------------------------


def test_monitor_raw_quadratic():
    X, Y, dx = centred_grid(12)
    m1 = monitor_raw(0.5 * (X * X + Y * Y), dx)
    # Frobenius norm of diag(1, 1) is sqrt(2)
    assert m1[1:-1, 1:-1] == pytest.approx(np.sqrt(2.0), rel=1e-9)
    assert np.all(monitor_raw(np.full((12, 12), 4.0), dx) == 0.0)


def test_monitor_normalise_examples():
    flat = np.zeros((6, 6))
    assert np.all(monitor_normalise(flat) == 1.0)
    uniform = np.full((6, 6), 3.7)
    assert monitor_normalise(uniform) == pytest.approx(2.0)
    spiky = np.zeros((6, 6))
    spiky[2, 2] = 1.0
    m2 = monitor_normalise(spiky, r_max=4.0)
    assert m2[2, 2] == 4.0  # capped at the area ratio
    assert m2[0, 0] == 1.0
    with pytest.raises(ValueError, match="non-negative"):
        monitor_normalise(-uniform)


def test_monitor_smooth_identity_cases():
    m2 = 1.0 + np.random.default_rng(4).random((10, 10))
    out = monitor_smooth(m2, dx=1.0, smoothing=0.0)
    assert np.all(out == m2) and out is not m2
    const = np.full((10, 10), 2.5)
    assert monitor_smooth(const, dx=1.0, smoothing=20.0) == pytest.approx(2.5, rel=1e-12)


def dense_smoothing_oracle(m2, dx, smoothing):
    """Direct dense solve of (I - (smoothing dx^2/4) lap) m3 = m2, no-flux."""
    n = m2.shape[0]
    k = smoothing * dx * dx / 4.0
    a = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            r = i * n + j
            a[r, r] += 1.0
            for ni, nj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if 0 <= ni < n and 0 <= nj < n:
                    a[r, ni * n + nj] -= k / dx ** 2
                    a[r, r] += k / dx ** 2
    return np.linalg.solve(a, m2.ravel()).reshape(n, n)


def test_monitor_smooth_matches_dense_oracle():
    rng = np.random.default_rng(11)
    m2 = 1.0 + 3.0 * rng.random((16, 16))
    dx = 2 * L / 16
    ours = monitor_smooth(m2, dx, 20.0)
    ref = dense_smoothing_oracle(m2, dx, 20.0)
    assert ours == pytest.approx(ref, rel=1e-10)


def test_monitor_smooth_preserves_mean_and_flattens():
    n = 20
    m2 = np.ones((n, n))
    m2[9:11, 9:11] = 4.0
    dx = 2 * L / n
    m3 = monitor_smooth(m2, dx, 20.0)
    assert m3.mean() == pytest.approx(m2.mean(), rel=1e-10)
    assert m3.max() < m2.max()
    assert m3.min() > m2.min()


def test_equidistribution_constant_examples():
    n = 8
    assert equidistribution_constant(np.zeros((n, n)), np.ones((n, n)), 1.0) == 1.0
    assert equidistribution_constant(np.zeros((n, n)), np.full((n, n), 2.0), 1.0) == pytest.approx(2.0)
    m3 = np.ones((n, n))
    m3[0, 0] = 0.5  # sum(1/m3) = 63 + 2
    assert equidistribution_constant(np.zeros((n, n)), m3, 1.0) == pytest.approx(64.0 / 65.0)


# ---------------------------------------------------------------------------
# potential-to-mesh map
# ---------------------------------------------------------------------------


def test_zero_potential_gives_uniform_vertices():
    pos = mesh_from_potential(np.zeros((10, 10)), L)
    lin = np.linspace(-L, L, 11)
    assert np.all(pos[..., 0] == lin[:, None])
    assert np.all(pos[..., 1] == lin[None, :])


def test_linear_potential_shifts_interior_only():
    n = 10
    X, Y, dx = centred_grid(n)
    shift = 0.2 * dx
    pos = mesh_from_potential(shift * X / 1.0, L)
    lin = np.linspace(-L, L, n + 1)
    # vertices away from the rim move by the gradient; the rows next to a
    # wall see 3/4 of it because the wall vertex carries the edge-cell value
    expected_x = np.broadcast_to(lin[2:-2, None] + shift, (n - 3, n + 1))
    assert pos[2:-2, :, 0] == pytest.approx(expected_x, rel=1e-12)
    assert pos[1, :, 0] == pytest.approx(lin[1] + 0.75 * shift, rel=1e-12)
    assert np.all(pos[0, :, 0] == -L)
    assert np.all(pos[-1, :, 0] == L)
    expected_y = np.broadcast_to(lin[None, 1:-1], (n + 1, n - 1))
    assert pos[:, 1:-1, 1] == pytest.approx(expected_y, abs=1e-9)


def test_mesh_from_potential_rejects_tangling():
    rng = np.random.default_rng(12)
    phi = 1e6 * rng.standard_normal((12, 12))
    with pytest.raises(MeshTanglingError, match="invert"):
        mesh_from_potential(phi, L)


def test_mesh_from_potential_rejects_non_square():
    with pytest.raises(ValueError, match="square"):
        mesh_from_potential(np.zeros((4, 5)), L)


def test_displaced_cell_centres_identity_and_shift():
    n = 8
    X, Y, dx = centred_grid(n)
    pos = displaced_cell_centres(np.zeros((n, n)), L)
    assert np.all(pos[..., 0] == X)
    assert np.all(pos[..., 1] == Y)
    shifted = displaced_cell_centres(100.0 * X / 1.0, L)
    assert shifted[..., 0] == pytest.approx(X + 100.0, rel=1e-12)


# ---------------------------------------------------------------------------
# Newton solver
# ---------------------------------------------------------------------------


def test_identity_monitor_gives_zero_displacement():
    n = 16
    dx = 2 * L / n
    phi, trace = solve_monge_ampere(np.ones((n, n)), dx)
    assert np.all(phi == 0.0)
    assert len(trace) == 1
    assert trace.records[0].inner_iterations == 0
    pos = mesh_from_potential(phi, L)
    lin = np.linspace(-L, L, n + 1)
    assert np.all(pos[..., 0] == lin[:, None])


def test_newton_converges_on_focused_monitor():
    m3, dx = bubble_monitor(40)
    phi, trace = solve_monge_ampere(m3, dx, params=NewtonParams())
    res = trace.initial_residuals
    assert res[-1] < 1e-9
    # exponential decay: monotone and a large overall drop
    assert all(res[k + 1] < res[k] for k in range(len(res) - 1))
    assert res[-1] <= res[0] / 1e6
    # converged mesh is elliptic without regularisation
    assert trace.records[-1].gamma == 0.0


def test_newton_equidistributes_cell_areas():
    # a monitor with ratio r_max concentrates resolution; the product of
    # monitor and cell area becomes nearly constant
    m3, dx = bubble_monitor(40)
    phi, _ = solve_monge_ampere(m3, dx, params=NewtonParams())
    pos = mesh_from_potential(phi, L)
    x, y = pos[..., 0], pos[..., 1]
    x00, x10, x11, x01 = x[:-1, :-1], x[1:, :-1], x[1:, 1:], x[:-1, 1:]
    y00, y10, y11, y01 = y[:-1, :-1], y[1:, :-1], y[1:, 1:], y[:-1, 1:]
    area = 0.5 * (
        (x00 * y10 - x10 * y00)
        + (x10 * y11 - x11 * y10)
        + (x11 * y01 - x01 * y11)
        + (x01 * y00 - x00 * y01)
    )
    assert np.all(area > 0.0)
    assert 2.5 < area.max() / area.min() < 4.5
    before = np.std(m3) / np.mean(m3)  # uniform mesh: areas constant
    weighted = m3 * area
    after = np.std(weighted) / np.mean(weighted)
    assert after < 0.1 * before


def test_newton_step_centres_potential():
    m3, dx = bubble_monitor(20)
    phi, rec = newton_step(np.zeros((20, 20)), m3, dx)
    assert abs(phi.mean()) <= 1e-12 * np.abs(phi).max()
    assert rec.inner_iterations > 0
    assert rec.constant == pytest.approx(equidistribution_constant(np.zeros((20, 20)), m3, dx))


def test_callable_monitor_requires_initial_potential():
    with pytest.raises(ValueError, match="phi0"):
        solve_monge_ampere(lambda phi: np.ones((8, 8)), dx=1.0)


def test_callable_monitor_reaches_fixed_point():
    # monitor sampled at the displaced centres: once converged, the mesh
    # reproduces its own monitor
    n = 24
    dx = 2 * L / n

    def monitor(phi_k):
        pos = displaced_cell_centres(phi_k, L)
        field = init_tracer(pos, "cosine_bubble", (0.0, 2500.0), 1000.0)
        return monitor_smooth(monitor_normalise(monitor_raw(field, dx), 4.0), dx, 20.0)

    phi, trace = solve_monge_ampere(monitor, dx, phi0=np.zeros((n, n)), params=NewtonParams())
    assert trace.initial_residuals[-1] < 1e-4
    again, rec = newton_step(phi, monitor(phi), dx)
    assert rec.initial_residual == pytest.approx(trace.initial_residuals[-1], rel=0.6)


def test_diverging_residual_raises():
    n = 24
    dx = 2 * L / n
    X, Y, _ = centred_grid(n)
    calls = []

    def monitor(phi_k):
        calls.append(len(calls))
        if len(calls) == 1:
            return 1.0 + 0.01 * np.exp(-((X / L) ** 2 + (Y / L) ** 2))
        bad = np.ones((n, n))
        bad[::2, ::2] = 100.0
        bad[1::2, 1::2] = 0.01
        return bad

    with pytest.raises(MongeAmpereDivergenceError, match="grew"):
        solve_monge_ampere(monitor, dx, phi0=np.zeros((n, n)), params=NewtonParams())


def test_trace_accessors():
    m3, dx = bubble_monitor(16)
    _, trace = solve_monge_ampere(m3, dx, params=NewtonParams(max_outer=3))
    assert isinstance(trace, NewtonTrace)
    assert len(trace) == 3
    assert trace.initial_residuals == [r.initial_residual for r in trace.records]
    assert trace.inner_iterations == [r.inner_iterations for r in trace.records]
