"""Small dense linear algebra helpers: Newton solver, finite differences, kernels."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import NonConvergence, RankDeficient, SingularJacobian

PIVOT_RTOL = 1e-14

_getrf, _getrs = scipy.linalg.lapack.get_lapack_funcs(("getrf", "getrs"), dtype=np.float64)


def as_vector(x, name="vector"):
    """Return ``x`` as a 1-D float array, rejecting NaN/Inf."""
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        v = v.ravel()
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def as_matrix(a, name="matrix"):
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


@dataclass(frozen=True)
class NewtonConfig:
    """Settings for :func:`newton_solve`.

    ``damping`` is either ``None`` (full Newton steps) or ``"halving"``,
    which backtracks only when a full step increases the residual norm.
    """

    residual_tolerance: float = 1e-12
    max_iterations: int = 50
    fd_epsilon: float = 1e-7
    damping: Optional[str] = None

    def __post_init__(self):
        if not self.residual_tolerance > 0:
            raise ValueError("residual_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.fd_epsilon > 0:
            raise ValueError("fd_epsilon must be positive")
        if self.damping not in (None, "halving"):
            raise ValueError("damping must be None or 'halving'")


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual_norm: float


def finite_diff_jacobian(f: Callable, x, eps: float = 1e-7) -> np.ndarray:
    """Central-difference Jacobian; column j is (f(x+eps e_j) - f(x-eps e_j)) / 2eps.

    The divisor is the step actually representable in floating point, so
    affine maps with exactly representable coefficients are differentiated
    without rounding error in the step.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=float)
    n = x.size
    cols = []
    for j in range(n):
        xp = x.copy()
        xp[j] += eps
        xm = x.copy()
        xm[j] -= eps
        step = xp[j] - xm[j]
        fp = np.atleast_1d(np.array(f(xp), dtype=float))
        fm = np.atleast_1d(np.array(f(xm), dtype=float))
        cols.append((fp - fm) / step)
    if not cols:
        return np.zeros((np.atleast_1d(f(x)).size, 0))
    return np.column_stack(cols)


def lu_solve_checked(J, b, rtol=PIVOT_RTOL):
    """Solve ``J x = b`` by LU, raising SingularJacobian on a pivot below ``rtol * max|J|``."""
    J = np.asarray(J, dtype=float)
    if J.shape[0] != J.shape[1]:
        raise SingularJacobian(f"Jacobian is not square: {J.shape}")
    if J.size == 0:
        return np.zeros(0)
    scale = np.abs(J).max()
    if not np.isfinite(scale):
        raise SingularJacobian("Jacobian has non-finite entries")
    if scale == 0.0:
        raise SingularJacobian("Jacobian is identically zero")
    lu, piv, _ = _getrf(J)
    pivot = np.abs(lu.diagonal()).min()
    if pivot < rtol * scale:
        raise SingularJacobian(f"pivot {pivot:.3e} below {rtol:g} * {scale:.3e}")
    return _getrs(lu, piv, b)[0]


def newton_solve(residual: Callable, x0, cfg: NewtonConfig = NewtonConfig(),
                 jacobian: Optional[Callable] = None) -> NewtonResult:
    """Solve ``residual(x) = 0`` by Newton's method.

    Parameters
    ----------
    residual : callable
        Maps an n-vector to an n-vector.
    x0 : array_like
        Starting iterate.
    cfg : NewtonConfig
        Tolerance (infinity norm), iteration cap, finite-difference step
        used when ``jacobian`` is None, and damping mode.
    jacobian : callable, optional
        Analytic Jacobian ``x -> (n, n)`` array.

    Returns
    -------
    NewtonResult
        Converged iterate with ``max|residual(x)| <= cfg.residual_tolerance``.

    Raises
    ------
    NonConvergence
        If the tolerance is not met within ``cfg.max_iterations`` updates.
    SingularJacobian
        If the LU factorization meets a pivot below ``1e-14 * max|J|``.
    """
    x = np.array(x0, dtype=float, copy=True).ravel()
    r = np.asarray(residual(x), dtype=float)
    if r.shape != x.shape:
        raise ValueError(f"residual has shape {r.shape}, expected {x.shape}")
    norm = np.abs(r).max() if r.size else 0.0
    tol = cfg.residual_tolerance
    it = 0
    while True:
        if norm <= tol:
            return NewtonResult(x, it, float(norm))
        if it >= cfg.max_iterations or not np.isfinite(norm):
            raise NonConvergence(
                f"Newton did not converge in {it} iterations (residual {norm:.3e})",
                residual_norm=float(norm), iterations=it)
        J = jacobian(x) if jacobian is not None else finite_diff_jacobian(residual, x, cfg.fd_epsilon)
        dx = lu_solve_checked(J, -r)
        x_new = x + dx
        r_new = np.asarray(residual(x_new), dtype=float)
        norm_new = np.abs(r_new).max() if r_new.size else 0.0
        if cfg.damping == "halving":
            t = 1.0
            while not norm_new < norm and t > 2.0**-20:
                t *= 0.5
                x_new = x + t * dx
                r_new = np.asarray(residual(x_new), dtype=float)
                norm_new = np.abs(r_new).max()
        x, r, norm = x_new, r_new, norm_new
        it += 1


def nullspace_basis(A, rank_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ker(A) for a full-row-rank ``k x m`` matrix.

    Uses a column-pivoted QR of ``A.T``; the trailing ``m - k`` columns of
    the orthogonal factor span the kernel. Each column is signed so that
    its first entry of non-negligible magnitude is positive.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    k, m = A.shape
    if k == 0:
        return np.eye(m)
    if k >= m:
        raise RankDeficient(f"{k} constraints leave no kernel in dimension {m}")
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] < rank_tol * sv[0] or sv[0] == 0.0:
        raise RankDeficient(f"singular value {sv[-1]:.3e} below {rank_tol:g} * {sv[0]:.3e}")
    Q, _, _ = scipy.linalg.qr(A.T, mode="full", pivoting=True, check_finite=False)
    B = Q[:, k:]
    for j in range(B.shape[1]):
        col = B[:, j]
        lead = np.flatnonzero(np.abs(col) > 1e-12)
        if lead.size and col[lead[0]] < 0:
            B[:, j] = -col
    return B
