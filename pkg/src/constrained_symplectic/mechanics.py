"""Mechanical systems on R^m, holonomic constraints and their modified versions."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .discretization import DiscretizationMap
from .errors import NonConvergence, RankDeficient
from .numerics import (NewtonConfig, as_matrix, as_vector, finite_diff_jacobian,
                       nullspace_basis)

FEASIBILITY_TOLERANCE = 1e-8


class MechanicalSystem:
    """Lagrangian ``L(q, v) = v.T M v / 2 - V(q)`` on R^m.

    Parameters
    ----------
    mass : (m, m) array_like
        Symmetric positive definite mass matrix.
    potential : callable
        ``V(q) -> float``.
    grad_potential : callable
        ``grad V(q) -> (m,)``.
    hess_potential : callable, optional
        ``Hess V(q) -> (m, m)``; enables analytic Jacobians in the closed-form
        steppers.
    """

    def __init__(self, mass, potential: Callable, grad_potential: Callable,
                 hess_potential: Optional[Callable] = None):
        M = as_matrix(mass, "mass")
        if M.shape[0] != M.shape[1]:
            raise ValueError("mass matrix must be square")
        if np.max(np.abs(M - M.T)) > 1e-12 * max(1.0, np.max(np.abs(M))):
            raise ValueError("mass matrix is not symmetric")
        try:
            cho = scipy.linalg.cho_factor(M)
        except np.linalg.LinAlgError as exc:
            raise ValueError("mass matrix is not positive definite") from exc
        self.mass = M
        self.mass_inverse = scipy.linalg.cho_solve(cho, np.eye(M.shape[0]))
        self.potential = potential
        self.grad_potential = grad_potential
        self.hess_potential = hess_potential

    @property
    def dim(self):
        return self.mass.shape[0]

    def energy(self, q, p):
        p = np.asarray(p, dtype=float)
        return 0.5 * p @ self.mass_inverse @ p + float(self.potential(np.asarray(q, dtype=float)))

    def check_gradient(self, points, eps=1e-6, tol=1e-5):
        """Largest deviation between ``grad_potential`` and central differences of ``potential``."""
        worst = 0.0
        for q in points:
            q = as_vector(q)
            fd = finite_diff_jacobian(lambda z: np.array([self.potential(z)]), q, eps)[0]
            worst = max(worst, np.max(np.abs(fd - self.grad_potential(q))))
        if worst > tol:
            raise ValueError(f"grad_potential disagrees with finite differences by {worst:.3e}")
        return worst


@dataclass
class ExtendedLagrangian:
    """Partial derivatives of an extension of L to all of TQ."""

    D_v_L: Callable
    D_q_L: Callable

    @classmethod
    def mechanical(cls, sys: MechanicalSystem):
        M = sys.mass
        return cls(lambda q, v: M @ v, lambda q, v: -np.asarray(sys.grad_potential(q)))


class ConstraintSet:
    """Holonomic constraints ``phi(q) = 0`` with Jacobian and optional Hessians.

    ``hess_phi(q)`` must return a ``(k, m, m)`` array when given.
    """

    def __init__(self, phi: Callable, jac_phi: Callable, count: int,
                 hess_phi: Optional[Callable] = None):
        self.phi = phi
        self.jac_phi = jac_phi
        self.count = int(count)
        self.hess_phi = hess_phi

    @classmethod
    def empty(cls, m):
        return cls(lambda q: np.zeros(0), lambda q: np.zeros((0, m)), 0,
                   lambda q: np.zeros((0, m, m)))

    def check_jacobian(self, points, eps=1e-6, tol=1e-5):
        worst = 0.0
        for q in points:
            q = as_vector(q)
            if self.count >= q.size:
                raise ValueError("need fewer constraints than coordinates")
            fd = finite_diff_jacobian(self.phi, q, eps)
            worst = max(worst, np.max(np.abs(fd - self.jac_phi(q))) if fd.size else 0.0)
        if worst > tol:
            raise ValueError(f"jac_phi disagrees with finite differences by {worst:.3e}")
        return worst


@dataclass
class ModifiedConstraints:
    """Constraints pulled back through a discretization map at step ``h``."""

    map: DiscretizationMap
    constraints: ConstraintSet
    h: float


def eval_modified_constraints(mc: ModifiedConstraints, q, v):
    """``(phi(q0), phi(q1))`` where ``(q0, q1) = forward(q, v, h)``."""
    q0, q1 = mc.map.forward(q, v, mc.h)
    phi = mc.constraints.phi
    return np.asarray(phi(q0), dtype=float), np.asarray(phi(q1), dtype=float)


def modified_constraint_partials(mc: ModifiedConstraints, q, v):
    """Chain-rule partials ``(Dq_phi1, Dv_phi1, Dq_phi2, Dv_phi2)``, each ``k x m``."""
    q = np.asarray(q, dtype=float)
    m = q.size
    q0, q1 = mc.map.forward(q, v, mc.h)
    J = mc.map.jacobian(q, v, mc.h)
    G0 = np.asarray(mc.constraints.jac_phi(q0), dtype=float).reshape(-1, m)
    G1 = np.asarray(mc.constraints.jac_phi(q1), dtype=float).reshape(-1, m)
    return G0 @ J[:m, :m], G0 @ J[:m, m:], G1 @ J[m:, :m], G1 @ J[m:, m:]


def legendre_residual(sys: MechanicalSystem, cs: ConstraintSet, q, p):
    """``(phi(q), grad phi(q) M^-1 p)``; zero exactly on the Legendre image of TN."""
    q = np.asarray(q, dtype=float)
    G = np.asarray(cs.jac_phi(q), dtype=float).reshape(-1, q.size)
    return np.concatenate([np.asarray(cs.phi(q), dtype=float).ravel(),
                           G @ (sys.mass_inverse @ np.asarray(p, dtype=float))])


def _constraint_jacobian(cs, q, rank_tol=1e-10):
    G = np.asarray(cs.jac_phi(q), dtype=float).reshape(-1, q.size)
    if G.shape[0]:
        sv = np.linalg.svd(G, compute_uv=False)
        if sv[-1] < rank_tol * max(sv[0], 1e-300):
            raise RankDeficient(f"constraint Jacobian is rank deficient at q={q}")
    return G


def project_momentum(sys: MechanicalSystem, cs: ConstraintSet, q, p):
    """Remove the component of ``p`` that makes ``M^-1 p`` leave the tangent space."""
    q = as_vector(q)
    p = as_vector(p)
    G = _constraint_jacobian(cs, q)
    if not G.shape[0]:
        return p
    Minv = sys.mass_inverse
    C = G @ Minv @ G.T
    return p - G.T @ np.linalg.solve(C, G @ Minv @ p)


def project_initial_condition(sys: MechanicalSystem, cs: ConstraintSet, q_guess, p_guess,
                              cfg: NewtonConfig = NewtonConfig()):
    """Move ``(q_guess, p_guess)`` onto the constraint manifold and its tangent momenta.

    Positions are corrected by minimum-norm Gauss-Newton updates along the
    rows of the constraint Jacobian; momenta by the projector
    ``I - G.T (G M^-1 G.T)^-1 G M^-1``.
    """
    q = as_vector(q_guess, "q_guess").copy()
    it = 0
    while True:
        phi = np.asarray(cs.phi(q), dtype=float).ravel()
        res = np.max(np.abs(phi)) if phi.size else 0.0
        if res <= cfg.residual_tolerance:
            break
        if it >= cfg.max_iterations:
            raise NonConvergence(f"position projection stalled at |phi| = {res:.3e}",
                                 residual_norm=res, iterations=it)
        G = _constraint_jacobian(cs, q)
        q = q - G.T @ np.linalg.solve(G @ G.T, phi)
        it += 1
    return q, project_momentum(sys, cs, q, p_guess)


def project_momentum_to_N(cs: ConstraintSet, q, pQ, rank_tol: float = 1e-10):
    """Coordinates of the restriction of ``pQ`` to the tangent space of N at ``q``.

    The tangent basis is the orthonormal kernel basis of the constraint
    Jacobian, so any normal shift ``pQ + G.T @ eta`` gives the same result.
    """
    q = as_vector(q, "q")
    phi = np.asarray(cs.phi(q), dtype=float).ravel()
    if phi.size and np.max(np.abs(phi)) > FEASIBILITY_TOLERANCE:
        raise ValueError(f"q is not on the constraint manifold (|phi| = {np.max(np.abs(phi)):.2e})")
    G = np.asarray(cs.jac_phi(q), dtype=float).reshape(-1, q.size)
    B = nullspace_basis(G, rank_tol)
    return B.T @ as_vector(pQ, "pQ")
