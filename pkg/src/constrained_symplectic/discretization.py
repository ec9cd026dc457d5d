"""Discretization maps on Q = R^m and the inverse of their cotangent lift.

A discretization map sends a tangent vector ``(q, v)`` and a step ``h`` to a
pair of configurations ``(q0, q1)``. It must send the zero section to the
diagonal, and the difference of the derivatives of its two components with
respect to ``v`` at ``v = 0`` must be ``h`` times the identity.

Cotangent-lift convention
-------------------------
The lift used by every stepper acts on ``(q, p, h*qdot, h*pdot)``. Writing
the Jacobian of ``forward`` in blocks ``A = dq0/dq``, ``B = dq1/dq``,
``C = dq0/dv``, ``D = dq1/dv``, the continuous-side sample of a pair of
phase points is::

    (q, v)  = inverse(q0, q1, h),   qdot = v
    h*pdot  = -A.T @ p0 + B.T @ p1
    h*p     = -C.T @ p0 + D.T @ p1

For the theta family this gives ``p = theta*p0 + (1-theta)*p1`` and
``pdot = (p1 - p0)/h``, which are the familiar inverses of the symplectic
Euler and midpoint schemes. The forward lift is obtained by solving these
linear relations for ``(p0, p1)``.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import AxiomViolation, OutOfChart, SingularJacobian, SingularLift
from .numerics import as_vector, finite_diff_jacobian, lu_solve_checked

AXIOM_TOLERANCE = 1e-6


class DiscretizationMap:
    """A discretization map ``(q, v, h) -> (q0, q1)`` with inverse and Jacobian.

    Parameters
    ----------
    forward : callable
        ``forward(q, v, h) -> (q0, q1)``.
    inverse : callable
        ``inverse(q0, q1, h) -> (q, v)``.
    jacobian : callable, optional
        ``jacobian(q, v, h) -> (2m, 2m)`` array with blocks
        ``[[dq0/dq, dq0/dv], [dq1/dq, dq1/dv]]``. Central differences with
        step ``fd_epsilon`` are used when omitted.
    name : str
    params : dict
    """

    def __init__(self, forward: Callable, inverse: Callable,
                 jacobian: Optional[Callable] = None, name: str = "custom",
                 params: Optional[dict] = None, fd_epsilon: float = 1e-7):
        self._forward = forward
        self._inverse = inverse
        self._jacobian = jacobian
        self.name = name
        self.params = dict(params or {})
        self.fd_epsilon = fd_epsilon

    def forward(self, q, v, h):
        q0, q1 = self._forward(q, v, h)
        return np.asarray(q0, dtype=float), np.asarray(q1, dtype=float)

    def inverse(self, q0, q1, h):
        try:
            q, v = self._inverse(q0, q1, h)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise OutOfChart(f"{self.name}: inverse failed ({exc})") from exc
        q, v = np.asarray(q, dtype=float), np.asarray(v, dtype=float)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise OutOfChart(f"{self.name}: inverse returned non-finite values")
        return q, v

    def jacobian(self, q, v, h):
        if self._jacobian is not None:
            return np.asarray(self._jacobian(q, v, h), dtype=float)
        q = np.asarray(q, dtype=float)
        m = q.size

        def stacked(z):
            q0, q1 = self.forward(z[:m], z[m:], h)
            return np.concatenate([q0, q1])

        return finite_diff_jacobian(stacked, np.concatenate([q, np.asarray(v, dtype=float)]),
                                    self.fd_epsilon)

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})" if args else f"DiscretizationMap({self.name!r})"


def theta_forward(theta, q, v, h):
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    return q - theta * h * v, q + (1.0 - theta) * h * v


def theta_inverse(theta, q0, q1, h):
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    return (1.0 - theta) * q0 + theta * q1, (q1 - q0) / h


class ThetaMethod(DiscretizationMap):
    """``(q, v, h) -> (q - theta h v, q + (1 - theta) h v)``.

    ``theta = 0`` is explicit Euler, ``theta = 1/2`` the midpoint rule and
    ``theta = 1`` the backward variant used by symplectic Euler-B.
    """

    def __init__(self, theta: float):
        theta = float(theta)
        if not 0.0 <= theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {theta}")
        self.theta = theta
        super().__init__(
            lambda q, v, h: theta_forward(theta, q, v, h),
            lambda q0, q1, h: theta_inverse(theta, q0, q1, h),
            self._theta_jacobian,
            name=f"theta:{theta:g}",
            params={"theta": theta},
        )

    def _theta_jacobian(self, q, v, h):
        m = np.asarray(q).size
        I = np.eye(m)
        return np.block([[I, -self.theta * h * I], [I, (1.0 - self.theta) * h * I]])


@dataclass
class CotangentSample:
    """A point ``(q, p, qdot, pdot)`` on the continuous side of the lift."""

    q: np.ndarray
    p: np.ndarray
    qdot: np.ndarray
    pdot: np.ndarray

    def __post_init__(self):
        self.q = as_vector(self.q, "q")
        self.p = as_vector(self.p, "p")
        self.qdot = as_vector(self.qdot, "qdot")
        self.pdot = as_vector(self.pdot, "pdot")
        m = self.q.size
        if not (self.p.size == self.qdot.size == self.pdot.size == m):
            raise ValueError("CotangentSample components must share one dimension")

    def as_tuple(self):
        return self.q, self.p, self.qdot, self.pdot


@dataclass
class AxiomReport:
    zero_section_defect: float
    derivative_defect: float
    tolerance: float = AXIOM_TOLERANCE
    samples: int = 0

    @property
    def passed(self):
        return self.zero_section_defect <= self.tolerance and self.derivative_defect <= self.tolerance


def check_discretization_axioms(rd: DiscretizationMap, sample_points, h: float,
                                fd_eps: float = 1e-6, raise_on_failure: bool = True) -> AxiomReport:
    """Measure how far ``rd`` is from sending 0 to the diagonal with unit derivative gap.

    For each ``(q, v)`` sample only ``q`` matters: the zero-section defect is
    ``|forward(q, 0, h) - (q, q)|`` and the derivative defect is
    ``|(d q1/dv - d q0/dv)(q, 0) / h - I|``, both as infinity norms, with the
    derivative taken by central differences.
    """
    samples = list(sample_points)
    if not samples:
        raise ValueError("check_discretization_axioms needs at least one sample")
    zero_def = 0.0
    deriv_def = 0.0
    for q, _v in samples:
        q = as_vector(q, "q")
        m = q.size
        zero = np.zeros(m)
        q0, q1 = rd.forward(q, zero, h)
        zero_def = max(zero_def, np.max(np.abs(q0 - q)), np.max(np.abs(q1 - q)))

        def gap(v):
            a, b = rd.forward(q, v, h)
            return b - a

        D = finite_diff_jacobian(gap, zero, fd_eps) / h
        deriv_def = max(deriv_def, np.max(np.abs(D - np.eye(m))))
    report = AxiomReport(float(zero_def), float(deriv_def), samples=len(samples))
    if raise_on_failure and not report.passed:
        raise AxiomViolation(
            f"{rd.name}: zero-section defect {zero_def:.3e}, derivative defect {deriv_def:.3e}",
            report=report)
    return report


def _blocks(J, m):
    return J[:m, :m], J[m:, :m], J[:m, m:], J[m:, m:]


def scaled_lift_inverse(rd: DiscretizationMap, q0, p0, q1, p1, h):
    """Return ``(q, v, h*p, h*pdot)`` without dividing by ``h``.

    Steppers use the scaled form so that residuals keep full precision for
    very small steps.
    """
    q, v = rd.inverse(q0, q1, h)
    m = q.size
    A, B, C, D = _blocks(rd.jacobian(q, v, h), m)
    hpdot = -A.T @ p0 + B.T @ p1
    hp = -C.T @ p0 + D.T @ p1
    return q, v, hp, hpdot


def cotangent_lift_inverse(rd: DiscretizationMap, q0, p0, q1, p1, h) -> CotangentSample:
    """Map a pair of phase points to the sample ``(q, p, qdot, pdot)``."""
    q0, p0, q1, p1 = (as_vector(a) for a in (q0, p0, q1, p1))
    if not (q0.size == p0.size == q1.size == p1.size):
        raise ValueError("dimension mismatch between q0, p0, q1, p1")
    if not h > 0:
        raise ValueError("h must be positive")
    q, v, hp, hpdot = scaled_lift_inverse(rd, q0, p0, q1, p1, h)
    return CotangentSample(q, hp / h, v, hpdot / h)


def cotangent_lift_forward(rd: DiscretizationMap, s: CotangentSample, h):
    """Inverse of :func:`cotangent_lift_inverse`.

    ``(q0, q1) = forward(q, qdot, h)`` and ``(p0, p1)`` solve the linear
    block system ``[[-A.T, B.T], [-C.T, D.T]] (p0, p1) = (h pdot, h p)``.
    """
    q, p, qdot, pdot = s.as_tuple()
    m = q.size
    q0, q1 = rd.forward(q, qdot, h)
    A, B, C, D = _blocks(rd.jacobian(q, qdot, h), m)
    K = np.block([[-A.T, B.T], [-C.T, D.T]])
    rhs = np.concatenate([h * pdot, h * p])
    try:
        sol = lu_solve_checked(K, rhs, rtol=1e-12)
    except SingularJacobian as exc:
        raise SingularLift(f"{rd.name}: lifted block system is singular ({exc})") from exc
    return q0, sol[:m], q1, sol[m:]
