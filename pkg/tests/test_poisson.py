"""Tests for the variable-coefficient elliptic solver.

The assembled operator is compared against hand-written stencils for
isotropic and anisotropic tensors, against the exact action on polynomial
fields for the mixed terms, and solved problems are checked against
manufactured discrete solutions.  Exactness of the constant null space is
a design guarantee and is asserted bitwise.
"""

import numpy as np
import pytest

from oromesh.poisson import assemble, rms, solve


def mirror_laplacian(u, dx):
    """Five-point Laplacian with zero-flux boundaries (no boundary-face flux)."""
    n = u.shape[0]
    out = np.zeros_like(u)
    out[:-1] += u[1:] - u[:-1]
    out[1:] += u[:-1] - u[1:]
    out[:, :-1] += u[:, 1:] - u[:, :-1]
    out[:, 1:] += u[:, :-1] - u[:, 1:]
    return out / (dx * dx)


def test_rms():
    assert rms(np.ones(10)) == 1.0
    assert rms([3.0, 4.0]) == pytest.approx(np.sqrt(12.5))


# ---------------------------------------------------------------------------
# operator assembly
# ---------------------------------------------------------------------------


def test_identity_tensor_is_five_point_laplacian():
    rng = np.random.default_rng(0)
    u = rng.standard_normal((12, 12))
    problem = assemble(1.0, 0.0, 1.0, np.zeros((12, 12)), dx=0.5)
    expected = mirror_laplacian(u, 0.5)
    assert problem.matvec(u) == pytest.approx(expected, rel=1e-13, abs=1e-13)


def test_scaled_tensor_scales_operator():
    rng = np.random.default_rng(1)
    u = rng.standard_normal((9, 9))
    p1 = assemble(1.0, 0.0, 1.0, np.zeros((9, 9)), dx=2.0)
    p2 = assemble(2.0, 0.0, 2.0, np.zeros((9, 9)), dx=2.0)
    assert p2.matvec(u) == pytest.approx(2.0 * p1.matvec(u), rel=1e-13)


def test_anisotropic_diagonal_tensor():
    # div(diag(1, 4) grad u) = u_xx + 4 u_yy with the same mirror closure
    rng = np.random.default_rng(2)
    u = rng.standard_normal((10, 10))
    problem = assemble(1.0, 0.0, 4.0, np.zeros((10, 10)), dx=1.0)
    ux = np.zeros_like(u)
    ux[:-1] += u[1:] - u[:-1]
    ux[1:] += u[:-1] - u[1:]
    uy = np.zeros_like(u)
    uy[:, :-1] += u[:, 1:] - u[:, :-1]
    uy[:, 1:] += u[:, :-1] - u[:, 1:]
    assert problem.matvec(u) == pytest.approx(ux + 4.0 * uy, rel=1e-13, abs=1e-13)


def test_mixed_term_exact_on_bilinear_field():
    # with Q = [[1, b], [b, 1]] and u = x y the operator equals 2 b away
    # from the mirrored rim
    n = 12
    dx = 1.0
    c = (np.arange(n) - (n - 1) / 2) * dx
    u = np.outer(c, c)
    b = 0.3
    problem = assemble(1.0, b, 1.0, np.zeros((n, n)), dx=dx)
    result = problem.matvec(u)
    assert result[2:-2, 2:-2] == pytest.approx(2.0 * b, rel=1e-12)


def test_constant_nullspace_is_bitwise_exact():
    rng = np.random.default_rng(3)
    qxx = 1.0 + 0.5 * rng.random((15, 15))
    qyy = 1.0 + 0.5 * rng.random((15, 15))
    qxy = 0.2 * rng.standard_normal((15, 15))
    problem = assemble(qxx, qxy, qyy, np.zeros((15, 15)), dx=0.7)
    assert np.all(problem.matvec(np.ones((15, 15))) == 0.0)


def test_operator_is_symmetric():
    rng = np.random.default_rng(4)
    qxx = 2.0 + rng.random((11, 11))
    qyy = 2.0 + rng.random((11, 11))
    qxy = 0.3 * rng.standard_normal((11, 11))
    problem = assemble(qxx, qxy, qyy, np.zeros((11, 11)), dx=1.3)
    u = rng.standard_normal((11, 11))
    v = rng.standard_normal((11, 11))
    left = float((v * problem.matvec(u)).sum())
    right = float((u * problem.matvec(v)).sum())
    assert left == pytest.approx(right, rel=1e-12)


def test_identity_coefficient_shifts_diagonal():
    rng = np.random.default_rng(5)
    u = rng.standard_normal((8, 8))
    p0 = assemble(1.0, 0.0, 1.0, np.zeros((8, 8)), dx=1.0)
    p1 = assemble(1.0, 0.0, 1.0, np.zeros((8, 8)), dx=1.0, identity_coeff=2.5)
    assert p1.matvec(u) == pytest.approx(p0.matvec(u) - 2.5 * u, rel=1e-13)
    assert p0.singular and not p1.singular


def test_rejects_indefinite_face_tensor():
    qxx = np.ones((6, 6))
    qxx[3, 3] = -3.0
    with pytest.raises(ValueError, match="face"):
        assemble(qxx, 0.0, 1.0, np.zeros((6, 6)), dx=1.0)
    with pytest.raises(ValueError, match="face"):
        assemble(1.0, 1.5, 1.0, np.zeros((6, 6)), dx=1.0)  # det < 0


def test_rejects_non_square_rhs():
    with pytest.raises(ValueError, match="square"):
        assemble(1.0, 0.0, 1.0, np.zeros((4, 5)), dx=1.0)


# ---------------------------------------------------------------------------
# linear solves
# ---------------------------------------------------------------------------


def manufactured_problem(n, seed, identity_coeff=0.0):
    rng = np.random.default_rng(seed)
    qxx = 1.5 + 0.5 * np.sin(np.linspace(0, 3, n))[:, None] * np.ones((1, n))
    qyy = 1.5 + 0.5 * np.cos(np.linspace(0, 2, n))[None, :] * np.ones((n, 1))
    qxy = 0.2 * rng.random((n, n))
    u_exact = rng.standard_normal((n, n))
    u_exact -= u_exact.mean()
    problem = assemble(qxx, qxy, qyy, np.zeros((n, n)), dx=0.8, identity_coeff=identity_coeff)
    rhs = problem.matvec(u_exact)
    return assemble(qxx, qxy, qyy, rhs, dx=0.8, identity_coeff=identity_coeff), u_exact


def test_solve_recovers_manufactured_solution():
    problem, u_exact = manufactured_problem(20, seed=6)
    u, info = solve(problem, rel_tol=1e-13, max_iter=2000)
    assert info.converged
    assert u == pytest.approx(u_exact, abs=1e-9)


def test_solve_nonsingular_with_identity_coefficient():
    problem, u_exact = manufactured_problem(16, seed=7, identity_coeff=1.0)
    u, info = solve(problem, rel_tol=1e-13, max_iter=2000)
    assert info.converged
    assert u == pytest.approx(u_exact, abs=1e-9)


def test_solve_reports_monotone_progress():
    problem, _ = manufactured_problem(16, seed=8)
    _, info = solve(problem, rel_tol=1e-10, max_iter=2000)
    res = info.residuals
    assert res[0] == info.initial_residual
    assert res[-1] <= 1e-10 * res[0]
    assert info.iterations == len(res) - 1


def test_solve_zero_rhs_returns_immediately():
    problem = assemble(1.0, 0.0, 1.0, np.zeros((10, 10)), dx=1.0)
    u, info = solve(problem)
    assert info.iterations == 0
    assert info.converged
    assert np.all(u == 0.0)


def test_solve_with_warm_start():
    # an accurate first guess drops the initial residual below abs_tol and
    # the solver returns it untouched; the relative test alone would chase
    # an unreachable fraction of an already tiny residual
    problem, u_exact = manufactured_problem(14, seed=9)
    u1, info_cold = solve(problem, rel_tol=1e-12, max_iter=2000)
    u2, info_warm = solve(problem, abs_tol=1e-9 * info_cold.initial_residual, x0=u1)
    assert info_warm.iterations == 0
    assert info_warm.converged
    assert u2 == pytest.approx(u_exact, abs=1e-8)


def test_solve_singular_solution_is_zero_mean():
    problem, _ = manufactured_problem(12, seed=10)
    u, _ = solve(problem, rel_tol=1e-12, max_iter=2000)
    assert abs(u.mean()) <= 1e-12 * np.abs(u).max()


def test_loose_tolerance_stops_early():
    problem, _ = manufactured_problem(20, seed=11)
    _, tight = solve(problem, rel_tol=1e-12, max_iter=2000)
    _, loose = solve(problem, rel_tol=0.01, max_iter=2000)
    assert loose.iterations < tight.iterations
    assert loose.converged
