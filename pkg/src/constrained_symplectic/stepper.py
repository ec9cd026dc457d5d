"""One-step maps (q0, p0) -> (q1, p1) for holonomically constrained systems.

Every stepper enforces ``phi(q1) = 0`` and ``grad phi(q1) M^-1 p1 = 0`` as
part of the solved system, so accepted steps stay on the constraint manifold
and on its tangent momenta up to the Newton tolerance.

Momentum equations are assembled multiplied by ``h`` (position level), which
keeps full precision when ``h`` is small. Multipliers keep their usual
scaling.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .discretization import (DiscretizationMap, ThetaMethod, CotangentSample,
                             cotangent_lift_forward, scaled_lift_inverse)
from .errors import InfeasibleState, NonConvergence
from .mechanics import (ConstraintSet, ExtendedLagrangian, MechanicalSystem,
                        ModifiedConstraints, legendre_residual, modified_constraint_partials,
                        project_initial_condition, FEASIBILITY_TOLERANCE)
from .numerics import NewtonConfig, newton_solve, nullspace_basis


@dataclass
class StepUnknowns:
    q1: np.ndarray
    p1: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray

    def pack(self):
        return np.concatenate([self.q1, self.p1, self.lambda1, self.lambda2])

    @classmethod
    def unpack(cls, x, m, k):
        return cls(x[:m], x[m:2 * m], x[2 * m:2 * m + k], x[2 * m + k:2 * m + 2 * k])


@dataclass
class StepResult:
    q1: np.ndarray
    p1: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    newton_iterations: int
    residual_norm: float


def _jac(cs, q):
    return np.asarray(cs.jac_phi(q), dtype=float).reshape(-1, q.size)


def check_feasible(sys, cs, q, p, tol=FEASIBILITY_TOLERANCE):
    res = legendre_residual(sys, cs, q, p)
    if res.size and np.max(np.abs(res)) > tol:
        raise InfeasibleState(
            f"state is off the constraint manifold (Legendre residual {np.max(np.abs(res)):.2e})")


def _initial_unknowns(q0, p0, k, guess=None):
    """Newton start: the zero-section point ``(q0, p0, 0, 0)`` unless a guess is given."""
    if guess is not None:
        x = guess.pack() if isinstance(guess, StepUnknowns) else np.asarray(guess, dtype=float)
        if x.size != 2 * q0.size + 2 * k:
            raise ValueError("initial guess has the wrong number of unknowns")
        return np.array(x, dtype=float)
    return np.concatenate([q0, p0, np.zeros(2 * k)])


def free_flight_guess(sys, q0, p0, h, k, previous: Optional[StepResult] = None) -> StepUnknowns:
    """Predictor ``q1 = q0 + h M^-1 p0``, ``p1 = p0`` with the previous multipliers (or zeros)."""
    q1 = q0 + h * (sys.mass_inverse @ p0)
    if previous is None:
        return StepUnknowns(q1, p0.copy(), np.zeros(k), np.zeros(k))
    return StepUnknowns(q1, p0.copy(), previous.lambda1, previous.lambda2)


# -- generic residual ------------------------------------------------------

def assemble_step_residual(rd: DiscretizationMap, sys: MechanicalSystem, ext: ExtendedLagrangian,
                           cs: ConstraintSet, q0, p0, u: StepUnknowns, h):
    """Residual of the discrete constrained equations for an arbitrary map.

    Blocks, in order (the first two multiplied by ``h``)::

        (a) p    - dL/dv(q, qdot) - Dv_phi1.T lambda1 - Dv_phi2.T lambda2
        (b) pdot - dL/dq(q, qdot) - Dq_phi1.T lambda1 - Dq_phi2.T lambda2
        (c) phi(q1)
        (d) grad phi(q1) M^-1 p1

    where ``(q, p, qdot, pdot)`` is the lifted-inverse sample of
    ``(q0, p0; q1, p1)`` and the partials are those of the modified
    constraints at ``(q, qdot)``.
    """
    q, v, hp, hpdot = scaled_lift_inverse(rd, q0, p0, u.q1, u.p1, h)
    mc = ModifiedConstraints(rd, cs, h)
    Dq1, Dv1, Dq2, Dv2 = modified_constraint_partials(mc, q, v)
    a = hp - h * (np.asarray(ext.D_v_L(q, v)) + Dv1.T @ u.lambda1 + Dv2.T @ u.lambda2)
    b = hpdot - h * (np.asarray(ext.D_q_L(q, v)) + Dq1.T @ u.lambda1 + Dq2.T @ u.lambda2)
    c = np.asarray(cs.phi(u.q1), dtype=float).ravel()
    d = _jac(cs, u.q1) @ (sys.mass_inverse @ u.p1)
    return np.concatenate([a, b, c, d])


def step_generic(rd: DiscretizationMap, sys: MechanicalSystem, ext: Optional[ExtendedLagrangian],
                 cs: ConstraintSet, q0, p0, h, cfg: NewtonConfig = NewtonConfig(),
                 guess=None) -> StepResult:
    """Solve the discrete constrained equations for any discretization map.

    The Jacobian is always taken by central differences.
    """
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    check_feasible(sys, cs, q0, p0)
    ext = ext or ExtendedLagrangian.mechanical(sys)
    m, k = q0.size, cs.count

    def residual(x):
        return assemble_step_residual(rd, sys, ext, cs, q0, p0, StepUnknowns.unpack(x, m, k), h)

    sol = newton_solve(residual, _initial_unknowns(q0, p0, k, guess), cfg)
    u = StepUnknowns.unpack(sol.x, m, k)
    return StepResult(u.q1, u.p1, u.lambda1, u.lambda2, sol.iterations, sol.residual_norm)


# -- closed forms ------------------------------------------------------------

@dataclass(frozen=True)
class _ClosedForm:
    """Coefficients of a scheme written as

        p0 = M (q1 - q0)/h + h a0 grad V(qa) - h c0 lambda . grad phi(q0)
        p1 = M (q1 - q0)/h - h a1 grad V(qb) + h c1 lambda~ . grad phi(q1)

    with ``qa``/``qb`` one of q0, q1 or the midpoint.
    """

    a0: float
    at0: str
    c0: float
    a1: float
    at1: str
    c1: float


EULER_A = _ClosedForm(1.0, "q0", 1.0, 0.0, "q1", 1.0)
EULER_B = _ClosedForm(0.0, "q0", 1.0, 1.0, "q1", 1.0)
MIDPOINT = _ClosedForm(0.5, "mid", 1.0, 0.5, "mid", 1.0)
RATTLE = _ClosedForm(0.5, "q0", 0.5, 0.5, "q1", 0.5)

_WEIGHT = {"q0": 0.0, "q1": 1.0, "mid": 0.5}


def _point(where, q0, q1):
    if where == "q0":
        return q0
    if where == "q1":
        return q1
    return 0.5 * (q0 + q1)


def _closed_form_step(form, sys, cs, q0, p0, h, cfg, guess=None):
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    check_feasible(sys, cs, q0, p0)
    m, k = q0.size, cs.count
    n = 2 * m + 2 * k
    M, Minv = sys.mass, sys.mass_inverse
    gradV, phi, jac_phi = sys.grad_potential, cs.phi, cs.jac_phi
    G0 = _jac(cs, q0)
    h2 = h * h
    sl_q, sl_p = slice(0, m), slice(m, 2 * m)
    sl_l, sl_lt = slice(2 * m, 2 * m + k), slice(2 * m + k, n)
    # the part of r1 that does not depend on the unknowns
    Mq0 = M @ q0
    r1_const = -h * p0 - Mq0
    if form.a0 and form.at0 == "q0":
        r1_const = r1_const + h2 * form.a0 * np.asarray(gradV(q0))
    a0_moving = bool(form.a0) and form.at0 != "q0"
    G0T_scaled = -h2 * form.c0 * G0.T

    def residual(x):
        q1, p1 = x[sl_q], x[sl_p]
        G1 = jac_phi(q1)
        Mq1 = M @ q1
        out = np.empty(n)
        r1 = Mq1 + r1_const + G0T_scaled @ x[sl_l]
        if a0_moving:
            r1 += h2 * form.a0 * gradV(_point(form.at0, q0, q1))
        r2 = Mq1 - Mq0 - h * p1 + (h2 * form.c1) * (G1.T @ x[sl_lt])
        if form.a1:
            r2 -= h2 * form.a1 * gradV(_point(form.at1, q0, q1))
        out[sl_q] = r1
        out[sl_p] = r2
        out[sl_l] = phi(q1)
        out[sl_lt] = G1 @ (Minv @ p1)
        return out

    jacobian = None
    if cs.hess_phi is not None and sys.hess_potential is not None:
        hessV, hess_phi = sys.hess_potential, cs.hess_phi
        w0, w1 = _WEIGHT[form.at0], _WEIGHT[form.at1]
        template = np.zeros((n, n))
        template[sl_q, sl_q] = M
        template[sl_q, sl_l] = G0T_scaled
        template[sl_p, sl_p] = -h * np.eye(m)

        def jacobian(x):
            q1, p1 = x[sl_q], x[sl_p]
            G1 = jac_phi(q1)
            H1 = np.reshape(hess_phi(q1), (k, m * m))
            J = template.copy()
            if form.a0 and w0:
                J[sl_q, sl_q] += h2 * form.a0 * w0 * hessV(_point(form.at0, q0, q1))
            d21 = M + (h2 * form.c1) * (x[sl_lt] @ H1).reshape(m, m)
            if form.a1 and w1:
                d21 -= h2 * form.a1 * w1 * hessV(_point(form.at1, q0, q1))
            J[sl_p, sl_q] = d21
            J[sl_p, sl_lt] = (h2 * form.c1) * G1.T
            J[sl_l, sl_q] = G1
            J[sl_lt, sl_q] = (H1.reshape(k * m, m) @ (Minv @ p1)).reshape(k, m)
            J[sl_lt, sl_p] = G1 @ Minv
            return J

    sol = newton_solve(residual, _initial_unknowns(q0, p0, k, guess), cfg, jacobian)
    x = sol.x
    return StepResult(x[sl_q], x[sl_p], x[sl_l], x[sl_lt], sol.iterations, sol.residual_norm)


def step_euler_a(sys, cs, q0, p0, h, cfg: NewtonConfig = NewtonConfig(), guess=None) -> StepResult:
    """Symplectic Euler-A for constrained systems.

    Solves::

        p0 = M (q1 - q0)/h + h grad V(q0) - h lambda . grad phi(q0)
        p1 = M (q1 - q0)/h + h lambda~ . grad phi(q1)

    together with ``phi(q1) = 0`` and ``grad phi(q1) M^-1 p1 = 0``.
    """
    return _closed_form_step(EULER_A, sys, cs, q0, p0, h, cfg, guess)


def step_euler_b(sys, cs, q0, p0, h, cfg: NewtonConfig = NewtonConfig(), guess=None) -> StepResult:
    """Symplectic Euler-B; eliminating the momenta over two steps gives SHAKE.

    Solves::

        p0 = M (q1 - q0)/h - h lambda . grad phi(q0)
        p1 = M (q1 - q0)/h - h grad V(q1) + h lambda~ . grad phi(q1)
    """
    return _closed_form_step(EULER_B, sys, cs, q0, p0, h, cfg, guess)


def step_midpoint(sys, cs, q0, p0, h, cfg: NewtonConfig = NewtonConfig(), guess=None) -> StepResult:
    """Midpoint scheme with the constraints imposed at both endpoints.

    Solves::

        p0 = M (q1 - q0)/h + (h/2) grad V(qm) - h lambda . grad phi(q0)
        p1 = M (q1 - q0)/h - (h/2) grad V(qm) + h lambda~ . grad phi(q1)

    with ``qm = (q0 + q1)/2``.
    """
    return _closed_form_step(MIDPOINT, sys, cs, q0, p0, h, cfg, guess)


def step_rattle(sys, cs, q0, p0, h, cfg: NewtonConfig = NewtonConfig(), guess=None) -> StepResult:
    """RATTLE, obtained by composing the two symplectic Euler variants.

    Solves::

        p0 = M (q1 - q0)/h + (h/2) grad V(q0) - (h/2) lambda . grad phi(q0)
        p1 = M (q1 - q0)/h - (h/2) grad V(q1) + (h/2) lambda~ . grad phi(q1)
    """
    return _closed_form_step(RATTLE, sys, cs, q0, p0, h, cfg, guess)


# -- null-space form --------------------------------------------------------

def lifted_momenta(rd, ext, q0, q1, h):
    """Momenta ``(P0, P1)`` that the unconstrained scheme assigns to ``(q0, q1)``.

    The constrained solution differs from them only by normal components:
    ``p0 = P0 - h G(q0).T lambda1`` and ``p1 = P1 + h G(q1).T lambda2``.
    """
    q, v = rd.inverse(q0, q1, h)
    s = CotangentSample(q, ext.D_v_L(q, v), v, ext.D_q_L(q, v))
    _, P0, _, P1 = cotangent_lift_forward(rd, s, h)
    return P0, P1


def step_nullspace(rd: DiscretizationMap, sys: MechanicalSystem, ext: Optional[ExtendedLagrangian],
                   cs: ConstraintSet, q0, p0, h, cfg: NewtonConfig = NewtonConfig(),
                   guess=None) -> StepResult:
    """Multiplier-free step: project the momentum equations onto tangent bases.

    With ``B0``, ``B1`` orthonormal kernel bases of the constraint Jacobian at
    ``q0`` and ``q1``, the unknowns ``(q1, p1)`` solve::

        B0.T (p0 - P0(q1)) = 0,   phi(q1) = 0                  (Newton in q1)
        B1.T (p1 - P1(q1)) = 0,   grad phi(q1) M^-1 p1 = 0     (linear in p1)

    Multipliers are recovered afterwards by least squares.
    """
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    check_feasible(sys, cs, q0, p0)
    ext = ext or ExtendedLagrangian.mechanical(sys)
    m, k = q0.size, cs.count
    G0 = _jac(cs, q0)
    B0 = nullspace_basis(G0)

    def residual_q(q1):
        P0, _ = lifted_momenta(rd, ext, q0, q1, h)
        return np.concatenate([h * (B0.T @ (p0 - P0)),
                               np.asarray(cs.phi(q1), dtype=float).ravel()])

    q_guess = q0 if guess is None else (guess.q1 if isinstance(guess, StepUnknowns) else guess[:m])
    sol = newton_solve(residual_q, q_guess, cfg)
    q1 = sol.x
    P0, P1 = lifted_momenta(rd, ext, q0, q1, h)
    G1 = _jac(cs, q1)
    B1 = nullspace_basis(G1)
    A = np.vstack([B1.T, G1 @ sys.mass_inverse])
    rhs = np.concatenate([B1.T @ P1, np.zeros(k)])
    p1 = np.linalg.solve(A, rhs)
    full = np.concatenate([h * (B0.T @ (p0 - P0)), np.asarray(cs.phi(q1), dtype=float).ravel(),
                           h * (B1.T @ (p1 - P1)), G1 @ (sys.mass_inverse @ p1)])
    if k:
        lam1 = np.linalg.lstsq(-h * G0.T, p0 - P0, rcond=None)[0]
        lam2 = np.linalg.lstsq(h * G1.T, p1 - P1, rcond=None)[0]
    else:
        lam1 = lam2 = np.zeros(0)
    return StepResult(q1, p1, lam1, lam2, sol.iterations, float(np.max(np.abs(full))))


# -- method registry and trajectories --------------------------------------

CLOSED_FORM_METHODS = {
    "euler_a": step_euler_a,
    "euler_b": step_euler_b,
    "midpoint": step_midpoint,
    "rattle": step_rattle,
}

METHOD_NAMES = ("euler_a", "euler_b", "midpoint", "rattle", "generic_theta:<theta>",
                "nullspace", "nullspace:<theta>")

# order of accuracy and the theta map(s) a named method is built from
METHOD_ORDER = {"euler_a": 1, "euler_b": 1, "midpoint": 2, "rattle": 2}
METHOD_THETAS = {"euler_a": (0.0,), "euler_b": (1.0,), "midpoint": (0.5,), "rattle": (0.0, 1.0)}


def parse_method(name):
    """Split a method name into ``(kind, theta)``; theta is None for closed forms."""
    if name in CLOSED_FORM_METHODS:
        return name, None
    kind, _, arg = name.partition(":")
    if kind == "generic_theta" and arg:
        return kind, float(arg)
    if kind == "nullspace":
        return kind, float(arg) if arg else 1.0
    raise ValueError(f"unknown method {name!r}; valid: {', '.join(METHOD_NAMES)}")


def method_order(name):
    kind, theta = parse_method(name)
    if theta is None:
        return METHOD_ORDER[kind]
    return 2 if theta == 0.5 else 1


def resolve_stepper(method, ext=None) -> Callable:
    """Return ``f(sys, cs, q0, p0, h, cfg, guess) -> StepResult`` for a method name."""
    if callable(method):
        return method
    kind, theta = parse_method(method)
    if theta is None:
        return CLOSED_FORM_METHODS[kind]
    rd = ThetaMethod(theta)
    base = step_generic if kind == "generic_theta" else step_nullspace

    def stepper(sys, cs, q0, p0, h, cfg=NewtonConfig(), guess=None):
        return base(rd, sys, ext, cs, q0, p0, h, cfg, guess)

    return stepper


@dataclass
class Trajectory:
    """Uniform-step trajectory with per-step solver diagnostics."""

    h: float
    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    residual_norms: np.ndarray
    iterations: np.ndarray
    method: str = ""

    def __len__(self):
        return len(self.times)

    @property
    def states(self):
        return list(zip(self.q, self.p))

    @property
    def multipliers(self):
        return list(zip(self.lambda1, self.lambda2))


def _build_trajectory(h, qs, ps, l1, l2, res, its, method, m, k):
    n = len(qs)
    return Trajectory(
        h=h, times=h * np.arange(n), q=np.array(qs).reshape(n, m), p=np.array(ps).reshape(n, m),
        lambda1=np.array(l1).reshape(len(l1), k), lambda2=np.array(l2).reshape(len(l2), k),
        residual_norms=np.array(res, dtype=float), iterations=np.array(its, dtype=int),
        method=method if isinstance(method, str) else getattr(method, "__name__", "custom"))


def integrate(method, sys: MechanicalSystem, cs: ConstraintSet, q0, p0, h: float, steps: int,
              cfg: NewtonConfig = NewtonConfig(), project_initial: bool = False,
              ext: Optional[ExtendedLagrangian] = None, predictor: bool = True,
              warm_start: bool = False) -> Trajectory:
    """Run ``steps`` steps of a named (or callable) stepper with fixed ``h``.

    With ``predictor`` each Newton solve starts from the free-flight point
    ``q1 = q0 + h M^-1 p0`` instead of the zero section; ``warm_start``
    additionally reuses the previous step's multipliers. Neither changes
    the converged step, only the iteration count.

    On a Newton failure the raised :class:`NonConvergence` carries
    ``step_index`` and the partial ``trajectory`` up to the last accepted
    state.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if steps < 0:
        raise ValueError("steps must be non-negative")
    q = np.asarray(q0, dtype=float)
    p = np.asarray(p0, dtype=float)
    if project_initial:
        q, p = project_initial_condition(sys, cs, q, p, cfg)
    step = resolve_stepper(method, ext)
    m, k = q.size, cs.count
    qs, ps, l1, l2, res, its = [q], [p], [], [], [], []
    r = None
    for i in range(steps):
        guess = free_flight_guess(sys, q, p, h, k, r if warm_start else None) if predictor else None
        try:
            r = step(sys, cs, q, p, h, cfg, guess)
        except NonConvergence as exc:
            exc.step_index = i
            exc.trajectory = _build_trajectory(h, qs, ps, l1, l2, res, its, method, m, k)
            raise
        q, p = r.q1, r.p1
        qs.append(q)
        ps.append(p)
        l1.append(r.lambda1)
        l2.append(r.lambda2)
        res.append(r.residual_norm)
        its.append(r.newton_iterations)
    return _build_trajectory(h, qs, ps, l1, l2, res, its, method, m, k)
