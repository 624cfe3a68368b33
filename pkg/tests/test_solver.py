"""Linear solver contract: exactness, scaling, fallbacks, failure modes."""

import numpy as np
import pytest

import fracafem.solver as solver_mod
from fracafem.assembly import EnergyMatrix
from fracafem.errors import InputError, NumericalError
from fracafem.solver import DEFAULT_TOL, solve_spd


def _em(M, uid=1):
    M = np.asarray(M, dtype=float)
    return EnergyMatrix(matrix=M, mesh_uid=uid, s=0.5, quad_order=7)


def test_identity_system():
    b = np.array([3.0, -1.0, 0.5])
    u = solve_spd(_em(np.eye(3)), b)
    assert np.allclose(u.coefficients, b, rtol=1e-14)


def test_hand_solved_2x2():
    A = [[2.0, 1.0], [1.0, 2.0]]
    u = solve_spd(_em(A), np.array([1.0, 1.0]))
    assert np.allclose(u.coefficients, [1.0 / 3.0, 1.0 / 3.0], rtol=1e-12)


def test_zero_rhs_and_empty_system():
    u = solve_spd(_em(np.eye(4)), np.zeros(4))
    assert np.all(u.coefficients == 0.0)
    u0 = solve_spd(_em(np.zeros((0, 0))), np.zeros(0))
    assert u0.coefficients.shape == (0,)


def test_scaling_invariance():
    rng = np.random.default_rng(7)
    G = rng.standard_normal((12, 12))
    A = G @ G.T + 12 * np.eye(12)
    b = rng.standard_normal(12)
    u1 = solve_spd(_em(A), b)
    u2 = solve_spd(_em(1e6 * A), 1e6 * b)
    assert np.allclose(u1.coefficients, u2.coefficients, rtol=1e-10)


def test_residual_contract():
    rng = np.random.default_rng(42)
    G = rng.standard_normal((60, 60))
    A = G @ G.T + 60 * np.eye(60)
    b = rng.standard_normal(60)
    u = solve_spd(_em(A), b, tol=1e-12)
    res = np.linalg.norm(A @ u.coefficients - b)
    assert res <= 1e-12 * np.linalg.norm(b)


def test_indefinite_matrix_rejected():
    A = [[1.0, 2.0], [2.0, 1.0]]       # eigenvalues 3 and -1
    with pytest.raises(NumericalError):
        solve_spd(_em(A), np.array([1.0, 0.0]))


def test_dimension_mismatch():
    with pytest.raises(InputError):
        solve_spd(_em(np.eye(3)), np.zeros(4))


def test_iterative_path(monkeypatch):
    monkeypatch.setattr(solver_mod, "DENSE_LIMIT", 10)
    rng = np.random.default_rng(3)
    G = rng.standard_normal((40, 40))
    A = G @ G.T + 40 * np.eye(40)
    b = rng.standard_normal(40)
    u = solve_spd(_em(A), b)
    res = np.linalg.norm(A @ u.coefficients - b)
    assert res <= DEFAULT_TOL * np.linalg.norm(b)
