"""Verification instruments: symplecticity defect, constraint drift, energy, order."""

from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .mechanics import ConstraintSet, MechanicalSystem, project_initial_condition
from .models import ChartedModel
from .numerics import NewtonConfig, finite_diff_jacobian
from .stepper import StepResult, Trajectory, integrate, resolve_stepper


def canonical_form(n):
    """The ``2n x 2n`` matrix ``[[0, I], [-I, 0]]``."""
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, I], [-I, Z]])


def identity_stepper(sys, cs, q0, p0, h, cfg=NewtonConfig(), guess=None) -> StepResult:
    k = cs.count
    return StepResult(np.array(q0, dtype=float), np.array(p0, dtype=float), np.zeros(k),
                      np.zeros(k), 0, 0.0)


def explicit_euler_step(sys, cs, q0, p0, h, cfg=NewtonConfig(), guess=None) -> StepResult:
    """Unconstrained explicit Euler; ignores the constraints entirely."""
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    k = cs.count
    return StepResult(q0 + h * (sys.mass_inverse @ p0), p0 - h * np.asarray(sys.grad_potential(q0)),
                      np.zeros(k), np.zeros(k), 0, 0.0)


def projected_explicit_euler_step(sys, cs, q0, p0, h, cfg=NewtonConfig(), guess=None) -> StepResult:
    """Explicit Euler followed by projection back onto the constraint manifold.

    Feasible at every step but not symplectic.
    """
    e = explicit_euler_step(sys, cs, q0, p0, h)
    q1, p1 = project_initial_condition(sys, cs, e.q1, e.p1, cfg)
    return StepResult(q1, p1, e.lambda1, e.lambda2, 0, 0.0)


def charted_step(model: ChartedModel, stepper, h, cfg: NewtonConfig = NewtonConfig()):
    """The one-step map written in the chart coordinates of ``model``.

    ``h = 0`` gives the identity map exactly, without a chart round trip.
    """
    step = resolve_stepper(stepper)

    def f(z):
        if h == 0:
            return np.array(z, dtype=float)
        q, p = model.chart(z)
        r = step(model.sys, model.cs, q, p, h, cfg)
        return model.unchart(r.q1, r.p1)

    return f


def symplecticity_defect(model: ChartedModel, stepper, z, h, fd_eps: float = 1e-6,
                         cfg: NewtonConfig = NewtonConfig()) -> float:
    """``|J^T Omega J - Omega|_inf`` for the central-difference Jacobian of the charted step.

    The attainable floor is roughly ``tolerance / fd_eps + fd_eps^2`` times
    problem-dependent constants.
    """
    z = np.asarray(z, dtype=float)
    J = finite_diff_jacobian(charted_step(model, stepper, h, cfg), z, fd_eps)
    W = canonical_form(model.n)
    return float(np.linalg.norm(J.T @ W @ J - W, np.inf))


@dataclass
class ViolationSeries:
    phi: np.ndarray
    tangency: np.ndarray

    @property
    def max_phi(self):
        return float(self.phi.max()) if self.phi.size else 0.0

    @property
    def max_tangency(self):
        return float(self.tangency.max()) if self.tangency.size else 0.0


def constraint_violation_series(cs: ConstraintSet, traj: Trajectory,
                                sys: MechanicalSystem) -> ViolationSeries:
    """Per-state ``|phi(q)|_inf`` and ``|grad phi(q) M^-1 p|_inf``."""
    n = len(traj.q)
    phi = np.zeros(n)
    tan = np.zeros(n)
    if cs.count == 0:
        return ViolationSeries(phi, tan)
    Minv = sys.mass_inverse
    for i, (q, p) in enumerate(zip(traj.q, traj.p)):
        phi[i] = np.max(np.abs(cs.phi(q)))
        G = np.reshape(cs.jac_phi(q), (cs.count, q.size))
        tan[i] = np.max(np.abs(G @ (Minv @ p)))
    return ViolationSeries(phi, tan)


@dataclass
class EnergySeries:
    values: np.ndarray
    drift_slope: float

    @property
    def max_deviation(self):
        return float(np.max(np.abs(self.values - self.values[0]))) if self.values.size else 0.0


def drift_slope(values):
    """Least-squares slope of ``values`` against the step index."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(np.polyfit(np.arange(values.size), values - values[0], 1)[0])


def energy_series(sys: MechanicalSystem, traj: Trajectory) -> EnergySeries:
    """``H(q, p) = p.T M^-1 p / 2 + V(q)`` along the trajectory and its drift slope per step."""
    E = np.array([sys.energy(q, p) for q, p in zip(traj.q, traj.p)])
    return EnergySeries(E, drift_slope(E))


@dataclass
class ConvergenceResult:
    slope: float
    h_list: np.ndarray
    errors: np.ndarray
    reference_h: float


def _steps_for(T, h):
    n = int(round(T / h))
    if n < 1 or abs(n * h - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T_final={T} is not an integer multiple of h={h}")
    return n


def convergence_order(stepper, model, z0, h_list: Sequence[float], T_final: float,
                      cfg: NewtonConfig = NewtonConfig(), reference_ratio: int = 20) -> ConvergenceResult:
    """Observed order from the error at ``T_final`` against a fine-step reference.

    ``model`` supplies ``sys`` and ``cs``; ``z0`` is ``(q0, p0)`` or their
    concatenation. The reference uses the same method at
    ``min(h_list) / reference_ratio``; the order is the least-squares slope
    of ``log(error)`` against ``log(h)``.
    """
    h_list = np.asarray(h_list, dtype=float)
    if h_list.size < 3 or np.any(np.diff(h_list) >= 0):
        raise ValueError("h_list must be strictly descending with at least three entries")
    if isinstance(z0, tuple):
        q0, p0 = (np.asarray(a, dtype=float) for a in z0)
    else:
        z0 = np.asarray(z0, dtype=float)
        q0, p0 = z0[:z0.size // 2], z0[z0.size // 2:]
    sys, cs = model.sys, model.cs
    h_ref = h_list[-1] / reference_ratio
    ref = integrate(stepper, sys, cs, q0, p0, h_ref, _steps_for(T_final, h_ref), cfg)
    zref = np.concatenate([ref.q[-1], ref.p[-1]])
    errors = []
    for h in h_list:
        tr = integrate(stepper, sys, cs, q0, p0, h, _steps_for(T_final, h), cfg)
        errors.append(np.max(np.abs(np.concatenate([tr.q[-1], tr.p[-1]]) - zref)))
    errors = np.array(errors)
    slope = float(np.polyfit(np.log(h_list), np.log(errors), 1)[0])
    return ConvergenceResult(slope, h_list, errors, h_ref)


@dataclass
class DiagnosticsReport:
    """Summary numbers; fields that were not computed are None."""

    max_constraint_violation: Optional[float] = None
    max_tangency_violation: Optional[float] = None
    energy_drift_slope: Optional[float] = None
    symplectic_defect: Optional[float] = None
    order_estimate: Optional[float] = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and not np.isfinite(v):
                raise ValueError(f"{f.name} is not finite")

    def lines(self):
        return [f"{f.name} = {getattr(self, f.name):.6e}" for f in fields(self)
                if getattr(self, f.name) is not None]


def trajectory_report(sys: MechanicalSystem, cs: ConstraintSet, traj: Trajectory) -> DiagnosticsReport:
    v = constraint_violation_series(cs, traj, sys)
    return DiagnosticsReport(v.max_phi, v.max_tangency, energy_series(sys, traj).drift_slope)
