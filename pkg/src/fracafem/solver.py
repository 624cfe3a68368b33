"""Direct and iterative solution of the SPD Galerkin system."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .assembly import EnergyMatrix, FemFunction
from .errors import InputError, NumericalError

# Dense Cholesky up to this many unknowns, conjugate gradients beyond.
# The matrix is fully populated, so sparse factorizations buy nothing.
DENSE_LIMIT = 20000

DEFAULT_TOL = 1e-10


def solve_spd(A: EnergyMatrix, b: np.ndarray,
              tol: float = DEFAULT_TOL) -> FemFunction:
    """Solve A u = b to a relative residual of ``tol``."""
    b = np.asarray(b, dtype=float)
    n = A.n_dofs
    if b.shape != (n,):
        raise InputError("right-hand side does not match the matrix")
    if n == 0:
        return FemFunction(A.mesh_uid, np.zeros(0))
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return FemFunction(A.mesh_uid, np.zeros(n))

    if n <= DENSE_LIMIT:
        u, res = _dense_solve(A.matrix, b, norm_b, tol)
    else:
        u, res = _cg_solve(A.matrix, b, norm_b, tol)
    if res > tol * norm_b:
        raise NumericalError(
            f"solver reached residual {res / norm_b:.3e} relative, "
            f"needed {tol:.1e}"
        )
    return FemFunction(A.mesh_uid, u)


def _dense_solve(mat, b, norm_b, tol):
    try:
        c, low = sla.cho_factor(mat, lower=True, check_finite=False)
    except sla.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization failed: {exc}") from exc
    u = sla.cho_solve((c, low), b, check_finite=False)
    # iterative refinement until the residual contract holds
    res = np.linalg.norm(b - mat @ u)
    for _ in range(2):
        if res <= tol * norm_b:
            break
        r = b - mat @ u
        u = u + sla.cho_solve((c, low), r, check_finite=False)
        res = np.linalg.norm(b - mat @ u)
    return u, res


def _cg_solve(mat, b, norm_b, tol):
    from scipy.sparse.linalg import LinearOperator, cg

    n = b.size
    d = np.diag(mat).copy()
    if np.any(d <= 0):
        raise NumericalError("matrix diagonal is not positive")
    M = LinearOperator((n, n), matvec=lambda x: x / d)
    u, info = cg(mat, b, rtol=0.1 * tol, atol=0.0, maxiter=20 * n, M=M)
    res = np.linalg.norm(b - mat @ u)
    if info != 0:
        raise NumericalError(
            f"conjugate gradients stalled at relative residual "
            f"{res / norm_b:.3e}"
        )
    return u, res
