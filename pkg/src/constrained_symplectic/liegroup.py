"""Integrators on matrix Lie groups built from retraction maps.

Conventions
-----------
The Lie algebra of every group is identified with R^n and its dual with
R^n through the Euclidean pairing. For SO(3) the hat map sends
``xi`` to the skew matrix with ``hat(xi) @ y = cross(xi, y)``; then
``Ad_R xi = R xi``, ``Ad*_R alpha = R.T alpha``, ``ad_xi eta = xi x eta`` and
``ad*_xi alpha = alpha x xi``. Momenta ``alpha`` are left-trivialized (body
frame); ``Ad*_{g^-1} alpha`` is the conserved spatial momentum of a
left-invariant system.

A retraction ``tau`` maps the algebra to the group with ``tau(0) = e`` and
``tau(xi) tau(-xi) = e``. Its left-trivialized tangent map ``dLtau_xi`` is
defined by ``T_xi tau (eta) = tau(xi) . dLtau_xi(eta)``, i.e.
``dLtau_xi(eta) = d/de tau(xi)^-1 tau(xi + e eta)`` at ``e = 0``.

Discrete equations
------------------
With ``g1 = g0 tau(h xi)`` the Hamiltonian step solves::

    xi = dH/dalpha(g0, mu0)
    mu0 = dLtau_{h xi}^T alpha1
    -alpha0 + Ad*_{tau(-h xi)} alpha1 = -h dH/dg(g0, mu0)

and the Lagrangian step::

    dLtau_{h xi}^T alpha1 = dL/dxi(g0, xi)
    -alpha0 + Ad*_{tau(-h xi)} alpha1 = h dL/dg(g0, xi)

where ``dH/dg`` and ``dL/dg`` are left-trivialized. On a vector space with
``tau(xi) = xi`` these reduce to symplectic Euler-A.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import InfeasibleState, NonConvergence, OutOfChart, RankDeficient
from .numerics import NewtonConfig, finite_diff_jacobian, lu_solve_checked, newton_solve

EXP_CHART_MARGIN = 0.1


# -- SO(3) closed forms ------------------------------------------------------

def hat(xi):
    x, y, z = xi
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(X):
    return np.array([X[2, 1], X[0, 2], X[1, 0]])


def so3_exp(xi):
    """Rodrigues formula ``I + sin(t)/t X + (1 - cos t)/t^2 X^2`` with ``t = |xi|``."""
    xi = np.asarray(xi, dtype=float)
    t2 = xi @ xi
    X = hat(xi)
    if t2 < 1e-12:
        a, b = 1.0 - t2 / 6.0, 0.5 - t2 / 24.0
    else:
        t = np.sqrt(t2)
        a, b = np.sin(t) / t, (1.0 - np.cos(t)) / t2
    return np.eye(3) + a * X + b * (X @ X)


def so3_log(R, margin=EXP_CHART_MARGIN):
    """Principal logarithm; raises OutOfChart when the angle is within ``margin`` of pi."""
    R = np.asarray(R, dtype=float)
    c = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    t = np.arccos(c)
    if t >= np.pi - margin:
        raise OutOfChart(f"rotation angle {t:.4f} is outside the logarithm chart")
    w = vee(R - R.T)
    if t < 1e-6:
        return 0.5 * w * (1.0 + t * t / 6.0)
    return 0.5 * t / np.sin(t) * w


def so3_cayley(xi):
    """``(I - hat(xi)/2)^-1 (I + hat(xi)/2)``."""
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise OutOfChart("Cayley map of a non-finite vector")
    X = 0.5 * hat(xi)
    I = np.eye(3)
    return np.linalg.solve(I - X, I + X)


def so3_cayley_inverse(R, margin=EXP_CHART_MARGIN):
    """``vee(2 (R - I)(R + I)^-1)``; raises OutOfChart near half turns."""
    R = np.asarray(R, dtype=float)
    c = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    if np.arccos(c) >= np.pi - margin:
        raise OutOfChart("rotation is too close to the Cayley pole")
    I = np.eye(3)
    return vee(2.0 * np.linalg.solve((R + I).T, (R - I).T).T)


def _exp_coefficients(t2):
    if t2 < 1e-8:
        return 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    t = np.sqrt(t2)
    return (1.0 - np.cos(t)) / t2, (t - np.sin(t)) / (t2 * t)


def so3_dexp(xi):
    """Left-trivialized tangent of exp: ``I - (1-cos t)/t^2 X + (t - sin t)/t^3 X^2``."""
    xi = np.asarray(xi, dtype=float)
    X = hat(xi)
    a, b = _exp_coefficients(xi @ xi)
    return np.eye(3) - a * X + b * (X @ X)


def so3_dexp_inv(xi):
    """Inverse of :func:`so3_dexp`: ``I + X/2 + (1/t^2 - (1 + cos t)/(2 t sin t)) X^2``."""
    xi = np.asarray(xi, dtype=float)
    X = hat(xi)
    t2 = xi @ xi
    if t2 < 1e-8:
        c = 1.0 / 12.0 + t2 / 720.0
    else:
        t = np.sqrt(t2)
        c = 1.0 / t2 - (1.0 + np.cos(t)) / (2.0 * t * np.sin(t))
    return np.eye(3) + 0.5 * X + c * (X @ X)


def so3_dcay(xi):
    """Left-trivialized tangent of Cayley: ``2/(4 + |xi|^2) (2I - X)``."""
    xi = np.asarray(xi, dtype=float)
    return 2.0 / (4.0 + xi @ xi) * (2.0 * np.eye(3) - hat(xi))


def so3_dcay_inv(xi):
    """Inverse of :func:`so3_dcay`: ``I + X/2 + xi xi^T/4``."""
    xi = np.asarray(xi, dtype=float)
    return np.eye(3) + 0.5 * hat(xi) + 0.25 * np.outer(xi, xi)


# -- groups ------------------------------------------------------------------

class GroupOps:
    """Operations of a matrix Lie group with algebra identified with R^dim."""

    dim: int

    def identity(self):
        raise NotImplementedError

    def compose(self, g, k):
        raise NotImplementedError

    def inverse(self, g):
        raise NotImplementedError

    def Ad_matrix(self, g):
        raise NotImplementedError

    def ad_matrix(self, xi):
        raise NotImplementedError

    def exp(self, xi):
        raise NotImplementedError

    def Ad(self, g, xi):
        return self.Ad_matrix(g) @ xi

    def Ad_star(self, g, alpha):
        return self.Ad_matrix(g).T @ alpha

    def ad(self, xi, eta):
        return self.ad_matrix(xi) @ eta

    def ad_star(self, xi, alpha):
        return self.ad_matrix(xi).T @ alpha

    def distance(self, g, k):
        """Max-norm difference of two elements (used only in checks)."""
        raise NotImplementedError

    def left_trivialized_gradient(self, f, g, eps=1e-6):
        """Central-difference gradient of ``eta -> f(g exp(eta))`` at ``eta = 0``.

        ``f`` may be vector valued; rows of the result are the covectors.
        """
        def along(eta):
            return np.atleast_1d(f(self.compose(g, self.exp(eta))))

        return finite_diff_jacobian(along, np.zeros(self.dim), eps)


class SO3(GroupOps):
    dim = 3

    def identity(self):
        return np.eye(3)

    def compose(self, g, k):
        return g @ k

    def inverse(self, g):
        return g.T

    def Ad_matrix(self, g):
        return np.asarray(g)

    def ad_matrix(self, xi):
        return hat(xi)

    def Ad(self, g, xi):
        return g @ xi

    def Ad_star(self, g, alpha):
        return g.T @ alpha

    def ad(self, xi, eta):
        return np.cross(xi, eta)

    def ad_star(self, xi, alpha):
        return np.cross(alpha, xi)

    def exp(self, xi):
        return so3_exp(xi)

    def distance(self, g, k):
        return float(np.max(np.abs(g - k)))


class VectorSpace(GroupOps):
    """``(R^n, +)``: all adjoint actions are trivial."""

    def __init__(self, n):
        self.dim = int(n)

    def identity(self):
        return np.zeros(self.dim)

    def compose(self, g, k):
        return g + k

    def inverse(self, g):
        return -g

    def Ad_matrix(self, g):
        return np.eye(self.dim)

    def ad_matrix(self, xi):
        return np.zeros((self.dim, self.dim))

    def exp(self, xi):
        return np.asarray(xi, dtype=float)

    def distance(self, g, k):
        return float(np.max(np.abs(g - k))) if self.dim else 0.0


class ProductGroup(GroupOps):
    """Direct product; elements are tuples, algebra vectors are concatenated."""

    def __init__(self, *factors: GroupOps):
        self.factors = factors
        dims = [f.dim for f in factors]
        self.dim = sum(dims)
        offs = np.cumsum([0] + dims)
        self.slices = [slice(a, b) for a, b in zip(offs[:-1], offs[1:])]

    def split(self, v):
        return [v[s] for s in self.slices]

    def identity(self):
        return tuple(f.identity() for f in self.factors)

    def compose(self, g, k):
        return tuple(f.compose(a, b) for f, a, b in zip(self.factors, g, k))

    def inverse(self, g):
        return tuple(f.inverse(a) for f, a in zip(self.factors, g))

    def Ad_matrix(self, g):
        return scipy.linalg.block_diag(*[f.Ad_matrix(a) for f, a in zip(self.factors, g)])

    def ad_matrix(self, xi):
        return scipy.linalg.block_diag(*[f.ad_matrix(x) for f, x in zip(self.factors, self.split(xi))])

    def exp(self, xi):
        return tuple(f.exp(x) for f, x in zip(self.factors, self.split(xi)))

    def distance(self, g, k):
        return max(f.distance(a, b) for f, a, b in zip(self.factors, g, k))


# -- retractions ---------------------------------------------------------------

class Retraction:
    """A retraction ``tau`` with its left-trivialized tangent calculus.

    Subclasses provide closed forms; the base class computes
    ``dLtau_xi`` by central differences of
    ``eta -> tau_inverse(tau(xi)^-1 tau(xi + e eta))``, which only needs
    ``tau`` and a local inverse.
    """

    def __init__(self, group: GroupOps, tau: Optional[Callable] = None,
                 tau_inverse: Optional[Callable] = None, fd_epsilon: float = 1e-6,
                 name: str = "custom"):
        self.group = group
        self._tau = tau
        self._tau_inverse = tau_inverse
        self.fd_epsilon = fd_epsilon
        self.name = name

    def tau(self, xi):
        return self._tau(np.asarray(xi, dtype=float))

    def tau_inverse(self, g):
        return self._tau_inverse(g)

    def check_chart(self, xi):
        """Raise OutOfChart when ``xi`` is outside the domain where tau is a diffeomorphism."""

    def dLtau_matrix(self, xi):
        xi = np.asarray(xi, dtype=float)
        G = self.group
        base_inv = G.inverse(self.tau(xi))

        def local(eta):
            return np.asarray(self.tau_inverse(G.compose(base_inv, self.tau(xi + eta))), dtype=float)

        return finite_diff_jacobian(local, np.zeros(G.dim), self.fd_epsilon)

    def dLtau_inv_matrix(self, xi):
        return np.linalg.inv(self.dLtau_matrix(xi))

    def dLtau(self, xi, eta):
        return self.dLtau_matrix(xi) @ eta

    def dLtau_inv(self, xi, eta):
        return self.dLtau_inv_matrix(xi) @ eta

    def dLtau_star(self, xi, alpha):
        return self.dLtau_matrix(xi).T @ alpha

    def dLtau_inv_star(self, xi, alpha):
        return self.dLtau_inv_matrix(xi).T @ alpha


class SO3Exp(Retraction):
    def __init__(self, margin=EXP_CHART_MARGIN):
        super().__init__(SO3(), so3_exp, lambda R: so3_log(R, margin), name="exp")
        self.margin = margin

    def check_chart(self, xi):
        if np.linalg.norm(xi) >= np.pi - self.margin:
            raise OutOfChart(f"|xi| = {np.linalg.norm(xi):.4f} leaves the exponential chart")

    def dLtau_matrix(self, xi):
        return so3_dexp(xi)

    def dLtau_inv_matrix(self, xi):
        return so3_dexp_inv(xi)


class SO3Cayley(Retraction):
    def __init__(self, margin=EXP_CHART_MARGIN):
        super().__init__(SO3(), so3_cayley, lambda R: so3_cayley_inverse(R, margin), name="cayley")

    def dLtau_matrix(self, xi):
        return so3_dcay(xi)

    def dLtau_inv_matrix(self, xi):
        return so3_dcay_inv(xi)


class VectorRetraction(Retraction):
    def __init__(self, n):
        super().__init__(VectorSpace(n), lambda x: x, lambda x: np.asarray(x, dtype=float),
                         name="identity")

    def dLtau_matrix(self, xi):
        return np.eye(self.group.dim)

    def dLtau_inv_matrix(self, xi):
        return np.eye(self.group.dim)


class ProductRetraction(Retraction):
    def __init__(self, *factors: Retraction):
        group = ProductGroup(*[r.group for r in factors])
        super().__init__(group, name="x".join(r.name for r in factors))
        self.factors = factors

    def tau(self, xi):
        return tuple(r.tau(x) for r, x in zip(self.factors, self.group.split(np.asarray(xi, float))))

    def tau_inverse(self, g):
        return np.concatenate([np.atleast_1d(r.tau_inverse(a)) for r, a in zip(self.factors, g)])

    def check_chart(self, xi):
        for r, x in zip(self.factors, self.group.split(xi)):
            r.check_chart(x)

    def dLtau_matrix(self, xi):
        return scipy.linalg.block_diag(*[r.dLtau_matrix(x)
                                         for r, x in zip(self.factors, self.group.split(xi))])

    def dLtau_inv_matrix(self, xi):
        return scipy.linalg.block_diag(*[r.dLtau_inv_matrix(x)
                                         for r, x in zip(self.factors, self.group.split(xi))])


def dLtau_eval(r: Retraction, xi, eta, kind="direct"):
    """Evaluate ``dLtau_xi`` (``kind='direct'``), its inverse, or either dual.

    ``kind`` is one of ``'direct'``, ``'inverse'``, ``'star'``, ``'inverse_star'``.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    r.check_chart(xi)
    if kind == "direct":
        return r.dLtau(xi, eta)
    if kind == "inverse":
        return r.dLtau_inv(xi, eta)
    if kind == "star":
        return r.dLtau_star(xi, eta)
    if kind == "inverse_star":
        return r.dLtau_inv_star(xi, eta)
    raise ValueError(f"unknown kind {kind!r}")


def dLtau_finite_difference(r: Retraction, xi, eta, eps=1e-6):
    """``vee(tau(-xi) (tau(xi + e eta) - tau(xi - e eta)) / 2e)`` for SO(3) retractions."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    T = (r.tau(xi + eps * eta) - r.tau(xi - eps * eta)) / (2.0 * eps)
    return vee(r.tau(-xi) @ T)


def spatial_momentum(ops: GroupOps, g, alpha):
    """``Ad*_{g^-1} alpha``."""
    return ops.Ad_star(ops.inverse(g), np.asarray(alpha, dtype=float))


# -- mechanics on the group ----------------------------------------------------

@dataclass
class TrivializedHamiltonian:
    """Partial derivatives of a left-trivialized Hamiltonian ``H(g, alpha)``.

    ``dH_dg`` returns the left-trivialized group derivative; leave it None
    for a left-invariant Hamiltonian.
    """

    dH_dalpha: Callable
    dH_dg: Optional[Callable] = None


@dataclass
class TrivializedLagrangian:
    """Partial derivatives of a left-trivialized Lagrangian ``L(g, xi)``.

    ``velocity(g, alpha)`` inverts ``alpha = dL_dxi(g, xi)``; when omitted
    it is solved by Newton's method.
    """

    dL_dxi: Callable
    dL_dg: Optional[Callable] = None
    velocity: Optional[Callable] = None

    def xi_of(self, g, alpha, cfg=NewtonConfig()):
        if self.velocity is not None:
            return np.asarray(self.velocity(g, alpha), dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        return newton_solve(lambda x: np.asarray(self.dL_dxi(g, x)) - alpha,
                            np.zeros(alpha.size), cfg).x


@dataclass
class GroupConstraintSet:
    """Constraints ``phi(g) = 0`` with left-trivialized gradients (``k x dim``)."""

    phi: Callable
    grad: Callable
    count: int

    def check_gradient(self, ops: GroupOps, points, eps=1e-6, tol=1e-5):
        worst = 0.0
        for g in points:
            fd = ops.left_trivialized_gradient(self.phi, g, eps)
            worst = max(worst, float(np.max(np.abs(fd - np.reshape(self.grad(g), fd.shape)))))
        if worst > tol:
            raise ValueError(f"trivialized gradient disagrees with finite differences by {worst:.3e}")
        return worst


def _zero_cov(n):
    return np.zeros(n)


def step_lie_hamiltonian(ops: GroupOps, r: Retraction, H: TrivializedHamiltonian, g0, alpha0, h,
                         cfg: NewtonConfig = NewtonConfig(), xi_guess=None):
    """One step of the discrete Hamilton equations on G.

    Returns
    -------
    g1, alpha1, xi, mu0
    """
    alpha0 = np.asarray(alpha0, dtype=float)
    if not np.all(np.isfinite(alpha0)):
        raise ValueError("alpha0 has non-finite entries")
    n = ops.dim
    Adst = ops.Ad_star

    def alpha1_of(xi, mu0):
        force = alpha0 if H.dH_dg is None else alpha0 - h * np.asarray(H.dH_dg(g0, mu0))
        return Adst(r.tau(h * xi), force)

    xi0 = np.asarray(H.dH_dalpha(g0, alpha0), dtype=float) if xi_guess is None else xi_guess

    if H.dH_dg is None:
        # mu0 depends on xi only, so Newton runs on xi alone
        def mu_of(xi):
            r.check_chart(h * xi)
            return r.dLtau_star(h * xi, Adst(r.tau(h * xi), alpha0))

        sol = newton_solve(lambda xi: xi - np.asarray(H.dH_dalpha(g0, mu_of(xi))), xi0, cfg)
        xi = sol.x
        mu0 = mu_of(xi)
    else:
        def residual(x):
            xi, mu0 = x[:n], x[n:]
            r.check_chart(h * xi)
            return np.concatenate([xi - np.asarray(H.dH_dalpha(g0, mu0)),
                                   mu0 - r.dLtau_star(h * xi, alpha1_of(xi, mu0))])

        sol = newton_solve(residual, np.concatenate([xi0, alpha0]), cfg)
        xi, mu0 = sol.x[:n], sol.x[n:]
    alpha1 = alpha1_of(xi, mu0)
    g1 = ops.compose(g0, r.tau(h * xi))
    return g1, alpha1, xi, mu0


def step_lie_lagrangian(ops: GroupOps, r: Retraction, L: TrivializedLagrangian, g0, xi_guess,
                        alpha0, h, cfg: NewtonConfig = NewtonConfig()):
    """One step of the discrete Lagrangian equations on G; returns ``(g1, alpha1, xi)``."""
    alpha0 = np.asarray(alpha0, dtype=float)
    Adst = ops.Ad_star

    def alpha1_of(xi):
        force = alpha0 if L.dL_dg is None else alpha0 + h * np.asarray(L.dL_dg(g0, xi))
        return Adst(r.tau(h * xi), force)

    def residual(xi):
        r.check_chart(h * xi)
        return r.dLtau_star(h * xi, alpha1_of(xi)) - np.asarray(L.dL_dxi(g0, xi))

    xi0 = np.zeros(ops.dim) if xi_guess is None else np.asarray(xi_guess, dtype=float)
    xi = newton_solve(residual, xi0, cfg).x
    return ops.compose(g0, r.tau(h * xi)), alpha1_of(xi), xi


def group_legendre_residual(L: TrivializedLagrangian, gcs: GroupConstraintSet, g, alpha,
                            cfg: NewtonConfig = NewtonConfig()):
    """``(phi(g), grad phi(g) . xi(g, alpha))`` with ``xi`` the velocity of ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    G = np.reshape(gcs.grad(g), (gcs.count, alpha.size))
    return np.concatenate([np.atleast_1d(gcs.phi(g)).astype(float), G @ L.xi_of(g, alpha, cfg)])


def step_lie_constrained(ops: GroupOps, r: Retraction, L: TrivializedLagrangian,
                         gcs: GroupConstraintSet, g0, alpha0, h, cfg: NewtonConfig = NewtonConfig()):
    """One step of the discrete constrained equations on G.

    Unknowns ``(xi, alpha1, lam, lamt)`` solve, with ``g1 = g0 tau(h xi)``
    and ``T = dLtau_{h xi}``::

        T^T alpha1 = dL/dxi(g0, xi) + h lamt . T^T grad phi(g1)
        -alpha0 + Ad*_{tau(-h xi)} alpha1
            = h dL/dg(g0, xi) + h lam . grad phi(g0) + h lamt . Ad*_{tau(-h xi)} grad phi(g1)
        phi(g1) = 0
        grad phi(g1) . xi(g1, alpha1) = 0

    The pullback ``T^T grad phi(g1)`` is the derivative of
    ``eta -> phi(g0 tau(h xi + eta))`` at ``eta = 0``.

    Returns
    -------
    g1, alpha1, xi, lam, lamt
    """
    alpha0 = np.asarray(alpha0, dtype=float)
    n, k = ops.dim, gcs.count
    res0 = group_legendre_residual(L, gcs, g0, alpha0, cfg)
    if res0.size and np.max(np.abs(res0)) > 1e-8:
        raise InfeasibleState(f"(g0, alpha0) violates the constraints by {np.max(np.abs(res0)):.2e}")
    G0 = np.reshape(gcs.grad(g0), (k, n))
    if k:
        sv = np.linalg.svd(G0, compute_uv=False)
        if sv[-1] < 1e-10 * max(sv[0], 1e-300):
            raise RankDeficient("trivialized constraint gradient is rank deficient at g0")
    Adst = ops.Ad_star

    def residual(x):
        xi, a1 = x[:n], x[n:2 * n]
        lam, lamt = x[2 * n:2 * n + k], x[2 * n + k:]
        r.check_chart(h * xi)
        step = r.tau(h * xi)
        back = r.tau(-h * xi)
        g1 = ops.compose(g0, step)
        T = r.dLtau_matrix(h * xi)
        G1 = np.reshape(gcs.grad(g1), (k, n))
        e1 = T.T @ a1 - np.asarray(L.dL_dxi(g0, xi)) - h * (T.T @ (G1.T @ lamt))
        force = np.zeros(n) if L.dL_dg is None else np.asarray(L.dL_dg(g0, xi))
        e2 = (-alpha0 + Adst(back, a1) - h * force - h * (G0.T @ lam)
              - h * Adst(back, G1.T @ lamt))
        e3 = np.atleast_1d(gcs.phi(g1)).astype(float)
        e4 = G1 @ L.xi_of(g1, a1, cfg)
        return np.concatenate([e1, e2, e3, e4])

    xi0 = L.xi_of(g0, alpha0, cfg)
    x0 = np.concatenate([xi0, alpha0, np.zeros(2 * k)])
    sol = newton_solve(residual, x0, cfg)
    x = sol.x
    xi, a1 = x[:n], x[n:2 * n]
    return ops.compose(g0, r.tau(h * xi)), a1, xi, x[2 * n:2 * n + k], x[2 * n + k:]


# -- rigid body as an ambient constrained system -------------------------------

def _symmetric_basis():
    basis = []
    for i in range(3):
        for j in range(i, 3):
            E = np.zeros((3, 3))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    return np.array(basis)


SYM_BASIS = _symmetric_basis()
_UPPER = np.triu_indices(3)
SO3_BASIS = np.array([hat(e) for e in np.eye(3)])


def sym_coords(S):
    """Upper-triangle coordinates of a symmetric matrix in :data:`SYM_BASIS`."""
    return S[_UPPER]


def pair(A, B):
    """Matrix pairing ``A . B = tr(A B^T)/2``."""
    return 0.5 * float(np.sum(A * B))


@dataclass
class RigidBodyParams:
    """Rigid body ``L = tr(Rdot J Rdot^T)/2 + m |xdot|^2/2 - V(R, x)``.

    ``J`` is the symmetric positive definite mass tensor. ``grad_R`` and
    ``grad_x`` are the Euclidean gradients of ``V`` with respect to the
    matrix and vector arguments; all three default to zero.
    """

    J: np.ndarray
    mass: float = 1.0
    potential: Optional[Callable] = None
    grad_R: Optional[Callable] = None
    grad_x: Optional[Callable] = None

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        if J.shape != (3, 3) or np.max(np.abs(J - J.T)) > 1e-12:
            raise ValueError("J must be a symmetric 3x3 matrix")
        try:
            np.linalg.cholesky(J)
        except np.linalg.LinAlgError as exc:
            raise ValueError("J must be positive definite") from exc
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        self.J = J
        self.J_inv = np.linalg.inv(J)

    def V(self, R, x):
        return 0.0 if self.potential is None else float(self.potential(R, x))

    def dV_dR(self, R, x):
        return np.zeros((3, 3)) if self.grad_R is None else np.asarray(self.grad_R(R, x), dtype=float)

    def dV_dx(self, R, x):
        return np.zeros(3) if self.grad_x is None else np.asarray(self.grad_x(R, x), dtype=float)

    def energy(self, R, x, P, p):
        return 0.5 * float(np.sum((P @ self.J_inv) * P)) + 0.5 * p @ p / self.mass + self.V(R, x)

    def body_momentum(self, R, P):
        """Body angular momentum ``Pi_i = tr(P^T R hat(e_i))``.

        For ``P = R hat(omega) J`` this is ``(tr(J) I - J) omega``.
        """
        return np.array([2.0 * pair(P, R @ E) for E in SO3_BASIS])


@dataclass
class RigidBodyStep:
    R1: np.ndarray
    x1: np.ndarray
    P1: np.ndarray
    p1: np.ndarray
    Lam: np.ndarray
    Lam_t: np.ndarray
    iterations: int = 0
    residual_norm: float = 0.0


def rigid_body_legendre(params: RigidBodyParams, R, P):
    """``(R^T R - I, sym(R^T P J^-1))`` as two symmetric 3x3 matrices."""
    A = R.T @ P @ params.J_inv
    return R.T @ R - np.eye(3), A + A.T


def rigid_body_tangent_momentum(params: RigidBodyParams, R, omega):
    """Ambient momentum ``P = R hat(omega) J`` of the body angular velocity ``omega``."""
    return R @ hat(omega) @ params.J


def _check_rigid_state(params, R0, P0):
    orth, leg = rigid_body_legendre(params, R0, P0)
    worst = max(np.max(np.abs(orth)), np.max(np.abs(leg)))
    if worst > 1e-8:
        raise InfeasibleState(f"rigid-body state violates orthogonality or tangency by {worst:.2e}")


def rigid_body_residual(params: RigidBodyParams, state0, step: RigidBodyStep, h):
    """Stacked residual of the 36 equations (momentum equations multiplied by ``h``)."""
    R0, x0, P0, p0 = state0
    R1, x1, P1, p1 = step.R1, step.x1, step.P1, step.p1
    J, m = params.J, params.mass
    hh = 0.5 * h * h
    e1 = (R1 - R0) @ J + hh * params.dV_dR(R0, x0) - hh * R0 @ step.Lam - h * P0
    e2 = m * (x1 - x0) + hh * params.dV_dx(R0, x0) - h * p0
    e3 = (R1 - R0) @ J - hh * params.dV_dR(R1, x1) + hh * R1 @ step.Lam_t - h * P1
    e4 = m * (x1 - x0) - hh * params.dV_dx(R1, x1) - h * p1
    o0, l0 = rigid_body_legendre(params, R0, P0)
    o1, l1 = rigid_body_legendre(params, R1, P1)
    return np.concatenate([e1.ravel(), e2, e3.ravel(), e4, sym_coords(o0), sym_coords(o1),
                           sym_coords(l0), sym_coords(l1)])


def rigid_body_constrained_step(params: RigidBodyParams, state0, h,
                                cfg: NewtonConfig = NewtonConfig()) -> RigidBodyStep:
    """RATTLE step for the rigid body on R^{3x3} x R^3 with Lagrange multipliers.

    ``state0 = (R0, x0, P0, p0)``. The symmetric multiplier ``Lam`` is
    found by Newton's method on the six orthogonality conditions of ``R1``
    (``R1`` is affine in ``Lam``); ``Lam_t`` then follows from the linear
    tangency condition ``sym(R1^T P1 J^-1) = 0``.
    """
    R0, x0, P0, p0 = (np.asarray(a, dtype=float) for a in state0)
    _check_rigid_state(params, R0, P0)
    J_inv, m = params.J_inv, params.mass
    hh = 0.5 * h * h
    base = R0 + (h * P0 - hh * params.dV_dR(R0, x0)) @ J_inv
    # dR1/dLam_j for each symmetric basis element
    dR = np.array([hh * R0 @ E @ J_inv for E in SYM_BASIS])

    def R1_of(c):
        return base + np.tensordot(c, dR, axes=1)

    def residual(c):
        R1 = R1_of(c)
        return sym_coords(R1.T @ R1 - np.eye(3))

    def jacobian(c):
        R1 = R1_of(c)
        return np.column_stack([sym_coords(D.T @ R1 + R1.T @ D) for D in dR])

    sol = newton_solve(residual, np.zeros(6), cfg, jacobian)
    R1 = R1_of(sol.x)
    Lam = np.tensordot(sol.x, SYM_BASIS, axes=1)
    x1 = x0 + (h * p0 - hh * params.dV_dx(R0, x0)) / m
    # P1 = Q + (h/2) R1 Lam_t, with Lam_t fixed by the tangency condition
    Q = (R1 - R0) @ params.J / h - 0.5 * h * params.dV_dR(R1, x1)

    def leg(P):
        A = R1.T @ P @ J_inv
        return sym_coords(A + A.T)

    A = np.column_stack([leg(0.5 * h * R1 @ E) for E in SYM_BASIS])
    ct = lu_solve_checked(A, -leg(Q))
    Lam_t = np.tensordot(ct, SYM_BASIS, axes=1)
    P1 = Q + 0.5 * h * R1 @ Lam_t
    p1 = m * (x1 - x0) / h - 0.5 * h * params.dV_dx(R1, x1)
    out = RigidBodyStep(R1, x1, P1, p1, Lam, Lam_t, sol.iterations)
    res = rigid_body_residual(params, (R0, x0, P0, p0), out, h)
    out.residual_norm = float(np.max(np.abs(res)))
    if out.residual_norm > 10 * cfg.residual_tolerance:
        raise NonConvergence(f"rigid-body step residual {out.residual_norm:.3e} above tolerance",
                             residual_norm=out.residual_norm, iterations=sol.iterations)
    return out


def rigid_body_nullspace_step(params: RigidBodyParams, state0, h,
                              cfg: NewtonConfig = NewtonConfig()) -> RigidBodyStep:
    """Multiplier-free RATTLE step for the rigid body.

    The matrix momentum equations are paired with the tangent basis
    ``R e_i`` through ``A . B = tr(A B^T)/2``, which removes the normal
    multiplier terms. ``R1`` (nine unknowns) solves the three paired
    equations at ``R0`` plus orthogonality; ``P1`` (nine unknowns) solves
    the three paired equations at ``R1`` plus tangency, a linear system.
    Multipliers are recovered afterwards by least squares.
    """
    R0, x0, P0, p0 = (np.asarray(a, dtype=float) for a in state0)
    _check_rigid_state(params, R0, P0)
    J, J_inv, m = params.J, params.J_inv, params.mass
    hh = 0.5 * h * h
    T0 = [R0 @ E for E in SO3_BASIS]
    F0 = hh * params.dV_dR(R0, x0) - h * P0

    def residual(z):
        R1 = z.reshape(3, 3)
        E = (R1 - R0) @ J + F0
        return np.concatenate([[pair(E, T) for T in T0], sym_coords(R1.T @ R1 - np.eye(3))])

    sol = newton_solve(residual, (R0 + h * P0 @ J_inv).ravel(), cfg)
    R1 = sol.x.reshape(3, 3)
    x1 = x0 + (h * p0 - hh * params.dV_dx(R0, x0)) / m
    Q = (R1 - R0) @ J / h - 0.5 * h * params.dV_dR(R1, x1)
    T1 = [R1 @ E for E in SO3_BASIS]
    rows, rhs = [], []
    for T in T1:
        rows.append((0.5 * T).ravel())
        rhs.append(pair(Q, T))
    for i, j in zip(*_UPPER):
        # entry (i, j) of R1^T P J^-1 + J^-1 P^T R1 is linear in P
        row = np.outer(R1[:, i], J_inv[:, j]) + np.outer(R1[:, j], J_inv[:, i])
        rows.append(row.ravel())
        rhs.append(0.0)
    P1 = lu_solve_checked(np.array(rows), np.array(rhs)).reshape(3, 3)
    p1 = m * (x1 - x0) / h - 0.5 * h * params.dV_dx(R1, x1)
    # multipliers from the normal components: (h^2/2) R Lam = residual of the unconstrained part
    N0 = (R1 - R0) @ J + F0
    N1 = (R1 - R0) @ J - hh * params.dV_dR(R1, x1) - h * P1
    Lam = _normal_multiplier(R0, N0 / hh)
    Lam_t = _normal_multiplier(R1, -N1 / hh)
    out = RigidBodyStep(R1, x1, P1, p1, Lam, Lam_t, sol.iterations)
    out.residual_norm = float(np.max(np.abs(rigid_body_residual(params, (R0, x0, P0, p0), out, h))))
    return out


def _normal_multiplier(R, N):
    """Least-squares symmetric ``S`` with ``R S = N``."""
    A = np.column_stack([(R @ E).ravel() for E in SYM_BASIS])
    c = np.linalg.lstsq(A, N.ravel(), rcond=None)[0]
    return np.tensordot(c, SYM_BASIS, axes=1)


# -- convenience models --------------------------------------------------------

def free_rigid_body_hamiltonian(J):
    """``H = alpha . J^-1 alpha / 2`` on SO(3) (left-invariant)."""
    J_inv = np.linalg.inv(np.asarray(J, dtype=float))
    return TrivializedHamiltonian(lambda g, a: J_inv @ a)


def free_rigid_body_lagrangian(J):
    """``L = xi . J xi / 2`` on SO(3)."""
    J = np.asarray(J, dtype=float)
    J_inv = np.linalg.inv(J)
    return TrivializedLagrangian(lambda g, xi: J @ xi, None, lambda g, a: J_inv @ a)


def pinned_body_on_sphere(J, mass=1.0, g=0.0, radius=1.0):
    """SO(3) x R^3 with the translation part constrained to ``|x| = radius``.

    ``L = omega . J omega / 2 + m |v|^2 / 2 - m g x_3`` with algebra
    coordinates ``(omega, v)``; gradients are left-trivialized, which on
    the translation factor is the ordinary gradient.
    """
    J = np.asarray(J, dtype=float)
    J_inv = np.linalg.inv(J)
    ops = ProductGroup(SO3(), VectorSpace(3))
    e3 = np.array([0.0, 0.0, 1.0])

    def dL_dxi(gr, xi):
        return np.concatenate([J @ xi[:3], mass * xi[3:]])

    def dL_dg(gr, xi):
        return np.concatenate([np.zeros(3), -mass * g * e3])

    def velocity(gr, a):
        return np.concatenate([J_inv @ a[:3], a[3:] / mass])

    L = TrivializedLagrangian(dL_dxi, dL_dg, velocity)
    r2 = radius * radius
    gcs = GroupConstraintSet(lambda gr: np.array([gr[1] @ gr[1] - r2]),
                             lambda gr: np.concatenate([np.zeros(3), 2.0 * gr[1]])[None, :], 1)
    return ops, L, gcs
