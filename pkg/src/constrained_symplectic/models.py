"""Built-in constrained mechanical models and their explicit charts."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import OutOfChart
from .mechanics import ConstraintSet, MechanicalSystem

GRAVITY = 9.81


@dataclass
class ChartedModel:
    """Explicit chart ``z = (x, p_x) <-> (q, p)`` of T*N for a built-in model.

    ``chart`` maps the ``2n`` local coordinates to a point of the Legendre
    image in ambient coordinates; ``unchart`` is its inverse. Momenta are
    pulled back by the tangent map of the embedding, so the local
    coordinates are canonical.
    """

    name: str
    n: int
    sys: MechanicalSystem
    cs: ConstraintSet
    chart: Callable
    unchart: Callable


@dataclass
class Model:
    """A mechanical system with constraints and a default feasible initial state."""

    name: str
    sys: MechanicalSystem
    cs: ConstraintSet
    q0: np.ndarray
    p0: np.ndarray
    charted: Optional[ChartedModel] = None


def sphere_constraint(m, radius=1.0):
    """``phi(q) = |q|^2 - radius^2`` in R^m with Jacobian and Hessian."""
    r2 = float(radius) ** 2
    H = 2.0 * np.eye(m)[None]
    return ConstraintSet(lambda q: np.array([q @ q - r2]),
                         lambda q: 2.0 * np.asarray(q)[None, :], 1,
                         lambda q: H)


def uniform_gravity(mass, g, axis):
    """Potential ``g * sum_i m_i q_axis_i`` for point masses and its derivatives."""
    c = np.zeros(mass.shape[0])
    c[axis] = g * np.diag(mass)[axis]
    zero = np.zeros((c.size, c.size))
    return (lambda q: float(c @ q)), (lambda q: c.copy()), (lambda q: zero)


def _embedded_chart(embed, embed_jac, local):
    """Chart of T*N from a parametrization ``x -> q`` of N.

    Local momenta are ``p_x = J.T p``; a local covector is lifted to the
    ambient momentum ``p = M J (J.T M J)^-1 p_x``, which satisfies the
    tangency condition.
    """

    def make(sys, n):
        M = sys.mass

        def chart(z):
            z = np.asarray(z, dtype=float)
            x, px = z[:n], z[n:]
            J = embed_jac(x)
            return embed(x), M @ J @ np.linalg.solve(J.T @ M @ J, px)

        def unchart(q, p):
            x = local(np.asarray(q, dtype=float))
            return np.concatenate([x, embed_jac(x).T @ np.asarray(p, dtype=float)])

        return chart, unchart

    return make


def _pendulum_embed(x):
    return np.array([np.sin(x[0]), -np.cos(x[0])])


def _pendulum_jac(x):
    return np.array([[np.cos(x[0])], [np.sin(x[0])]])


def _pendulum_local(q):
    return np.array([np.arctan2(q[0], -q[1])])


def pendulum(g=GRAVITY, mass=1.0, theta0=0.5, ptheta0=0.0):
    """Planar pendulum of unit length: ``M = mass I``, ``V = mass g q_2``, ``|q|^2 = 1``.

    The chart is the angle from the downward vertical and its conjugate
    momentum.
    """
    M = float(mass) * np.eye(2)
    sys = MechanicalSystem(M, *uniform_gravity(M, g, [1]))
    cs = sphere_constraint(2)
    chart, unchart = _embedded_chart(_pendulum_embed, _pendulum_jac, _pendulum_local)(sys, 1)
    ch = ChartedModel("pendulum", 1, sys, cs, chart, unchart)
    q0, p0 = chart([theta0, ptheta0])
    return Model("pendulum", sys, cs, q0, p0, ch)


def _stereo_embed(u):
    s = u @ u
    return np.array([2 * u[0], 2 * u[1], s - 1.0]) / (s + 1.0)


def _stereo_jac(u):
    s = u @ u
    d = (s + 1.0) ** 2
    a, b = u
    return np.array([[2 * (s + 1) - 4 * a * a, -4 * a * b],
                     [-4 * a * b, 2 * (s + 1) - 4 * b * b],
                     [4 * a, 4 * b]]) / d


def _stereo_local(q):
    if 1.0 - q[2] < 1e-6:
        raise OutOfChart("stereographic chart is singular at the north pole")
    return q[:2] / (1.0 - q[2])


def spherical_pendulum(g=GRAVITY, mass=1.0, u0=(0.3, -0.2), pu0=(0.4, 0.7)):
    """Unit spherical pendulum in R^3 with gravity along ``-e3``.

    The chart is stereographic projection from the north pole, valid away
    from the top of the sphere.
    """
    M = float(mass) * np.eye(3)
    sys = MechanicalSystem(M, *uniform_gravity(M, g, [2]))
    cs = sphere_constraint(3)
    chart, unchart = _embedded_chart(_stereo_embed, _stereo_jac, _stereo_local)(sys, 2)
    ch = ChartedModel("spherical_pendulum", 2, sys, cs, chart, unchart)
    q0, p0 = chart(np.concatenate([u0, pu0]))
    return Model("spherical_pendulum", sys, cs, q0, p0, ch)


def double_pendulum_constrained(g=GRAVITY, masses=(1.0, 1.0), lengths=(1.0, 1.0),
                                angles=(0.4, -0.3), rates=(0.0, 0.5)):
    """Planar double pendulum in Cartesian coordinates ``q = (x1, y1, x2, y2)``.

    Constraints ``|q_a|^2 - l1^2 = 0`` and ``|q_b - q_a|^2 - l2^2 = 0``.
    """
    m1, m2 = masses
    l1, l2 = lengths
    M = np.diag([m1, m1, m2, m2]).astype(float)
    sys = MechanicalSystem(M, *uniform_gravity(M, g, [1, 3]))
    E = np.array([[-1.0, 0, 1, 0], [0, -1, 0, 1]])
    P = np.array([[1.0, 0, 0, 0], [0, 1, 0, 0]])
    H = np.stack([2 * P.T @ P, 2 * E.T @ E])

    def phi(q):
        a, d = q[:2], E @ q
        return np.array([a @ a - l1 * l1, d @ d - l2 * l2])

    def jac(q):
        return np.stack([2 * q[:2] @ P, 2 * (E @ q) @ E])

    cs = ConstraintSet(phi, jac, 2, lambda q: H)
    t1, t2 = angles
    w1, w2 = rates
    q0 = np.array([l1 * np.sin(t1), -l1 * np.cos(t1), 0.0, 0.0])
    q0[2:] = q0[:2] + [l2 * np.sin(t2), -l2 * np.cos(t2)]
    v1 = l1 * w1 * np.array([np.cos(t1), np.sin(t1)])
    v0 = np.concatenate([v1, v1 + l2 * w2 * np.array([np.cos(t2), np.sin(t2)])])
    return Model("double_pendulum_constrained", sys, cs, q0, M @ v0)


def quadratic_model(mass, stiffness=None, linear=None, sphere_radius=None, q0=None, p0=None):
    """``V = q.T K q / 2 + b.T q`` with optional constraint ``|q|^2 = radius^2``."""
    M = np.atleast_2d(np.asarray(mass, dtype=float))
    m = M.shape[0]
    K = np.zeros((m, m)) if stiffness is None else np.atleast_2d(np.asarray(stiffness, dtype=float))
    b = np.zeros(m) if linear is None else np.asarray(linear, dtype=float)
    if K.shape != (m, m) or b.shape != (m,):
        raise ValueError("stiffness and linear term must match the mass matrix dimension")
    Ks = 0.5 * (K + K.T)
    sys = MechanicalSystem(M, lambda q: 0.5 * q @ Ks @ q + b @ q, lambda q: Ks @ q + b,
                           lambda q: Ks)
    cs = ConstraintSet.empty(m) if sphere_radius is None else sphere_constraint(m, sphere_radius)
    q0 = np.zeros(m) if q0 is None else np.asarray(q0, dtype=float)
    p0 = np.zeros(m) if p0 is None else np.asarray(p0, dtype=float)
    return Model("custom", sys, cs, q0, p0)
