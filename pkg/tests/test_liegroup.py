import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_ivp
from scipy.optimize import fsolve

from constrained_symplectic.errors import InfeasibleState, OutOfChart
from constrained_symplectic.liegroup import (SO3, GroupConstraintSet, ProductGroup, ProductRetraction,
                                             Retraction, RigidBodyParams, SO3Cayley, SO3Exp,
                                             TrivializedHamiltonian, TrivializedLagrangian,
                                             VectorRetraction, VectorSpace, dLtau_eval,
                                             dLtau_finite_difference, free_rigid_body_hamiltonian,
                                             free_rigid_body_lagrangian, group_legendre_residual, hat,
                                             pinned_body_on_sphere, rigid_body_constrained_step,
                                             rigid_body_legendre, rigid_body_nullspace_step,
                                             rigid_body_tangent_momentum, so3_cayley,
                                             so3_cayley_inverse, so3_exp, so3_log, spatial_momentum,
                                             step_lie_constrained, step_lie_hamiltonian,
                                             step_lie_lagrangian, vee)
from constrained_symplectic.mechanics import MechanicalSystem
from constrained_symplectic.models import sphere_constraint, uniform_gravity
from constrained_symplectic.stepper import step_euler_a

J = np.diag([1.0, 2.0, 3.0])
small = arrays(float, 3, elements=st.floats(-1.2, 1.2))
RETRACTIONS = [SO3Exp(), SO3Cayley()]


def orth_defect(R):
    return np.max(np.abs(R.T @ R - np.eye(3)))


@given(small)
def test_hat_vee_cross(xi):
    y = np.array([0.3, -0.7, 1.1])
    np.testing.assert_allclose(hat(xi) @ y, np.cross(xi, y), atol=1e-15)
    np.testing.assert_array_equal(vee(hat(xi)), xi)


def test_exp_examples():
    np.testing.assert_array_equal(so3_exp(np.zeros(3)), np.eye(3))
    R = so3_exp([np.pi / 2, 0, 0])
    np.testing.assert_allclose(R, [[1, 0, 0], [0, 0, -1], [0, 1, 0]], atol=1e-15)


def test_cayley_examples():
    np.testing.assert_array_equal(so3_cayley(np.zeros(3)), np.eye(3))
    xi = 0.01 * np.array([0.6, 0.0, 0.8])
    assert np.max(np.abs(so3_cayley(xi) - so3_exp(xi))) <= 1e-6


@pytest.mark.parametrize("tau", [so3_exp, so3_cayley])
@given(xi=arrays(float, 3, elements=st.floats(-3, 3)))
def test_retraction_axioms(tau, xi):
    R = tau(xi)
    assert orth_defect(R) <= 1e-12 and abs(np.linalg.det(R) - 1) <= 1e-12
    assert np.max(np.abs(R @ tau(-xi) - np.eye(3))) <= 1e-13


@given(small)
def test_log_and_cayley_inverse_round_trip(xi):
    np.testing.assert_allclose(so3_log(so3_exp(xi)), xi, atol=1e-12)
    np.testing.assert_allclose(so3_cayley_inverse(so3_cayley(xi)), xi, atol=1e-12)


def test_charts_reject_half_turns():
    with pytest.raises(OutOfChart):
        so3_log(so3_exp([np.pi - 0.01, 0, 0]))
    with pytest.raises(OutOfChart):
        so3_cayley_inverse(so3_exp([0, np.pi - 0.05, 0]))
    with pytest.raises(OutOfChart):
        dLtau_eval(SO3Exp(), [3.1, 0, 0], [1.0, 0, 0])
    with pytest.raises(OutOfChart):
        so3_cayley([np.nan, 0, 0])


@pytest.mark.parametrize("r", RETRACTIONS, ids=lambda r: r.name)
def test_dltau_at_zero_is_identity(r):
    np.testing.assert_allclose(r.dLtau_matrix(np.zeros(3)), np.eye(3), atol=1e-12)


@pytest.mark.parametrize("r", RETRACTIONS, ids=lambda r: r.name)
def test_dltau_example_against_finite_differences(r):
    xi, eta = np.array([0.3, -0.2, 0.1]), np.array([0.0, 1.0, 0.0])
    fd = dLtau_finite_difference(r, xi, eta)
    assert np.max(np.abs(dLtau_eval(r, xi, eta) - fd)) <= 1e-6


@pytest.mark.parametrize("r", RETRACTIONS, ids=lambda r: r.name)
@given(xi=small, eta=small)
def test_dltau_closed_forms(r, xi, eta):
    assert np.max(np.abs(dLtau_eval(r, xi, eta) - dLtau_finite_difference(r, xi, eta))) <= 1e-6
    back = dLtau_eval(r, xi, dLtau_eval(r, xi, eta), "inverse")
    assert np.max(np.abs(back - eta)) <= 1e-10
    alpha = eta[::-1]
    assert dLtau_eval(r, xi, alpha, "star") @ eta == pytest.approx(alpha @ dLtau_eval(r, xi, eta), abs=1e-12)
    np.testing.assert_allclose(dLtau_eval(r, xi, dLtau_eval(r, xi, alpha, "star"), "inverse_star"), alpha,
                               atol=1e-10)


def test_generic_retraction_fallback_matches_closed_form():
    fallback = Retraction(SO3(), so3_cayley, so3_cayley_inverse)
    xi = np.array([0.3, -0.2, 0.1])
    np.testing.assert_allclose(fallback.dLtau_matrix(xi), SO3Cayley().dLtau_matrix(xi), atol=1e-8)
    np.testing.assert_allclose(fallback.dLtau_inv_matrix(xi), SO3Cayley().dLtau_inv_matrix(xi), atol=1e-8)
    with pytest.raises(ValueError):
        dLtau_eval(fallback, xi, xi, "sideways")


@given(small, small, small)
def test_group_axioms_so3(a, xi, alpha):
    G = SO3()
    g = so3_exp(a)
    assert G.distance(G.compose(g, G.inverse(g)), G.identity()) <= 1e-12
    np.testing.assert_array_equal(G.Ad(G.identity(), xi), xi)
    assert G.Ad_star(g, alpha) @ xi == pytest.approx(alpha @ G.Ad(g, xi), abs=1e-12)
    assert G.ad_star(xi, alpha) @ a == pytest.approx(alpha @ G.ad(xi, a), abs=1e-12)
    # Ad is a homomorphism of the bracket
    np.testing.assert_allclose(G.Ad(g, G.ad(xi, alpha)), G.ad(G.Ad(g, xi), G.Ad(g, alpha)), atol=1e-12)


def test_product_group_and_retraction():
    G = ProductGroup(SO3(), VectorSpace(3))
    r = ProductRetraction(SO3Exp(), VectorRetraction(3))
    xi = np.array([0.1, 0.2, -0.3, 1.0, 2.0, 3.0])
    g = r.tau(xi)
    np.testing.assert_allclose(g[0], so3_exp(xi[:3]))
    np.testing.assert_array_equal(g[1], xi[3:])
    assert G.distance(G.compose(g, G.inverse(g)), G.identity()) <= 1e-12
    np.testing.assert_allclose(r.tau_inverse(g), xi, atol=1e-12)
    assert r.dLtau_matrix(xi).shape == (6, 6)
    np.testing.assert_allclose(r.dLtau_inv_matrix(xi) @ r.dLtau_matrix(xi), np.eye(6), atol=1e-12)


def test_left_trivialized_gradient():
    G = SO3()
    g = so3_exp([0.4, 0.1, -0.2])
    b = np.array([0.0, 0.0, 1.0])
    f = lambda R: np.array([b @ R @ b])
    grad = G.left_trivialized_gradient(f, g)
    # d/de b.T g exp(e eta) b = b.T g hat(eta) b = eta . (b x g.T b)
    np.testing.assert_allclose(grad[0], np.cross(b, g.T @ b), atol=1e-9)


def test_spatial_momentum_examples():
    G = SO3()
    alpha = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(spatial_momentum(G, np.eye(3), alpha), alpha)
    quarter = so3_exp([0, 0, np.pi / 2])
    np.testing.assert_allclose(spatial_momentum(G, quarter, [1.0, 0, 0]), [0, 1.0, 0], atol=1e-15)


@pytest.mark.parametrize("r", RETRACTIONS, ids=lambda r: r.name)
def test_hamiltonian_step_conserves_spatial_momentum(r):
    G = SO3()
    H = free_rigid_body_hamiltonian(J)
    g0, a0 = np.eye(3), np.array([1.0, 0.1, 0.0])
    g1, a1, xi, mu0 = step_lie_hamiltonian(G, r, H, g0, a0, 0.01)
    assert np.max(np.abs(spatial_momentum(G, g1, a1) - spatial_momentum(G, g0, a0))) <= 1e-11
    assert orth_defect(g1) <= 1e-14
    np.testing.assert_allclose(xi, np.linalg.solve(J, mu0), atol=1e-12)


@pytest.mark.parametrize("r", RETRACTIONS, ids=lambda r: r.name)
def test_trivial_hamiltonian_is_identity(r):
    H = TrivializedHamiltonian(lambda g, a: np.zeros(3))
    g0, a0 = so3_exp([0.2, 0.3, 0.1]), np.array([0.5, -0.5, 1.0])
    g1, a1, xi, _ = step_lie_hamiltonian(SO3(), r, H, g0, a0, 0.1)
    np.testing.assert_allclose(g1, g0, atol=1e-15)
    np.testing.assert_allclose(a1, a0, atol=1e-15)


def euler_arnold(t, y):
    R, a = y[:9].reshape(3, 3), y[9:]
    w = np.linalg.solve(J, a)
    return np.r_[(R @ hat(w)).ravel(), np.cross(a, w)]


@pytest.mark.parametrize("r", RETRACTIONS, ids=lambda r: r.name)
def test_hamiltonian_step_consistency_order(r):
    """Local error per unit time against the Euler-Arnold flow decays like h^2."""
    H = free_rigid_body_hamiltonian(J)
    g0, a0 = so3_exp([0.2, -0.1, 0.4]), np.array([1.0, 0.1, 0.3])
    hs = np.array([0.08, 0.04, 0.02, 0.01])
    errs, vel_errs = [], []
    for h in hs:
        g1, a1, xi, _ = step_lie_hamiltonian(SO3(), r, H, g0, a0, h)
        y = solve_ivp(euler_arnold, (0, h), np.r_[g0.ravel(), a0], method="DOP853",
                      rtol=1e-13, atol=1e-14).y[:, -1]
        errs.append(max(np.max(np.abs(g1.ravel() - y[:9])), np.max(np.abs(a1 - y[9:]))) / h)
        vel_errs.append(np.max(np.abs(r.tau_inverse(g0.T @ g1) / h - np.linalg.solve(J, a0))))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - 2.0) <= 0.2
    assert abs(np.polyfit(np.log(hs), np.log(vel_errs), 1)[0] - 1.0) <= 0.2


def test_hamiltonian_step_with_group_force():
    """A potential on SO(3) exercises the coupled (xi, mu0) Newton system."""
    b = np.array([0.0, 0.0, 1.0])
    # V(R) = b.T R b ; trivialized gradient b x R.T b
    H = TrivializedHamiltonian(lambda g, a: np.linalg.solve(J, a), lambda g, a: np.cross(b, g.T @ b))
    L = TrivializedLagrangian(lambda g, xi: J @ xi, lambda g, xi: -np.cross(b, g.T @ b))
    g0, a0 = so3_exp([0.3, 0.1, 0.0]), np.array([0.2, 0.4, -0.1])
    for r in RETRACTIONS:
        g1, a1, xi, mu0 = step_lie_hamiltonian(SO3(), r, H, g0, a0, 0.02)
        gl, al, xl = step_lie_lagrangian(SO3(), r, L, g0, xi, a0, 0.02)
        np.testing.assert_allclose(xl, xi, atol=1e-12)
        np.testing.assert_allclose(al, a1, atol=1e-12)


@pytest.mark.parametrize("r", RETRACTIONS, ids=lambda r: r.name)
def test_lagrangian_matches_hamiltonian_trajectory(r):
    G = SO3()
    H, L = free_rigid_body_hamiltonian(J), free_rigid_body_lagrangian(J)
    gh = gl = np.eye(3)
    ah = al = np.array([1.0, 0.1, 0.0])
    xi = None
    for _ in range(50):
        gh, ah, _, _ = step_lie_hamiltonian(G, r, H, gh, ah, 0.01)
        gl, al, xi = step_lie_lagrangian(G, r, L, gl, xi, al, 0.01)
    assert np.max(np.abs(gh - gl)) <= 1e-10 and np.max(np.abs(ah - al)) <= 1e-10


def test_lagrangian_left_invariant_momentum_map():
    G, r = SO3(), SO3Cayley()
    L = free_rigid_body_lagrangian(J)
    a0 = np.array([0.4, -0.3, 0.8])
    g1, a1, xi = step_lie_lagrangian(G, r, L, np.eye(3), None, a0, 0.05)
    np.testing.assert_allclose(G.Ad_star(r.tau(-0.05 * xi), a1), a0, atol=1e-13)


def test_lagrangian_rest_state():
    g1, a1, xi = step_lie_lagrangian(SO3(), SO3Exp(), free_rigid_body_lagrangian(J), np.eye(3),
                                     None, np.zeros(3), 0.1)
    np.testing.assert_array_equal(xi, np.zeros(3))
    np.testing.assert_array_equal(g1, np.eye(3))


def test_lagrangian_velocity_by_newton():
    L = TrivializedLagrangian(lambda g, xi: J @ xi + 0.1 * xi**3)
    a = np.array([0.3, 0.2, -0.5])
    xi = L.xi_of(np.eye(3), a)
    np.testing.assert_allclose(J @ xi + 0.1 * xi**3, a, atol=1e-12)


# -- constrained steps on SO(3) x R^3 ------------------------------------------

def pinned_state(ops, L, omega=(0.3, -0.2, 0.5), v=(0.0, 0.8, 0.2)):
    x = np.array([1.0, 0.0, 0.0])
    g = (so3_exp([0.1, 0.2, 0.3]), x)
    a = np.concatenate([J @ np.asarray(omega), np.asarray(v)])
    return g, a


def test_constrained_step_stays_on_sphere():
    ops, L, gcs = pinned_body_on_sphere(J, g=9.81)
    r = ProductRetraction(SO3Cayley(), VectorRetraction(3))
    g, a = pinned_state(ops, L)
    for _ in range(20):
        g, a, xi, lam, lamt = step_lie_constrained(ops, r, L, gcs, g, a, 0.01)
        assert abs(g[1] @ g[1] - 1) <= 1e-10
        assert np.max(np.abs(group_legendre_residual(L, gcs, g, a))) <= 1e-10
        assert orth_defect(g[0]) <= 1e-13


def test_constrained_translation_equals_holonomic_euler_a():
    ops, L, gcs = pinned_body_on_sphere(J, mass=2.0, g=9.81)
    r = ProductRetraction(SO3Exp(), VectorRetraction(3))
    g, a = pinned_state(ops, L)
    g1, a1, xi, lam, lamt = step_lie_constrained(ops, r, L, gcs, g, a, 0.01)
    M = 2.0 * np.eye(3)
    sys = MechanicalSystem(M, *uniform_gravity(M, 9.81, [2]))
    ref = step_euler_a(sys, sphere_constraint(3), g[1], a[3:], 0.01)
    np.testing.assert_allclose(g1[1], ref.q1, atol=1e-12)
    np.testing.assert_allclose(a1[3:], ref.p1, atol=1e-10)
    np.testing.assert_allclose(lam, ref.lambda1, atol=1e-8)
    np.testing.assert_allclose(lamt, ref.lambda2, atol=1e-8)


def test_constrained_step_multiplier_free_oracle():
    """Eliminating both multipliers leaves B0^T(...) = 0 and phi(g1) = 0 for xi alone."""
    ops, L, gcs = pinned_body_on_sphere(J, g=9.81)
    r = ProductRetraction(SO3Exp(), VectorRetraction(3))
    g0, a0 = pinned_state(ops, L)
    h = 0.01
    g1, a1, xi, _, _ = step_lie_constrained(ops, r, L, gcs, g0, a0, h)
    G0 = gcs.grad(g0)
    B0 = np.linalg.svd(G0)[2][1:].T

    def eqs(x):
        T = r.dLtau_matrix(h * x)
        back = r.tau(-h * x)
        mom = -a0 + ops.Ad_star(back, np.linalg.solve(T.T, L.dL_dxi(g0, x))) - h * L.dL_dg(g0, x)
        return np.concatenate([B0.T @ mom, gcs.phi(ops.compose(g0, r.tau(h * x)))])

    x = fsolve(eqs, L.xi_of(g0, a0), xtol=1e-12)
    T = r.dLtau_matrix(h * x)
    base = np.linalg.solve(T.T, L.dL_dxi(g0, x))
    gr1 = ops.compose(g0, r.tau(h * x))
    G1 = gcs.grad(gr1)
    # alpha1 = base + h lamt G1^T with the tangency condition fixing lamt
    vel = lambda a: L.xi_of(gr1, a)
    lamt = -(G1 @ vel(base)) / (G1 @ vel(h * G1[0]))
    alpha1 = base + h * lamt[0] * G1[0]
    np.testing.assert_allclose(x, xi, atol=1e-9)
    np.testing.assert_allclose(alpha1, a1, atol=1e-9)
    assert ops.distance(gr1, g1) <= 1e-9


def test_constrained_step_without_constraints_is_lagrangian_step():
    G = SO3()
    L = free_rigid_body_lagrangian(J)
    empty = GroupConstraintSet(lambda g: np.zeros(0), lambda g: np.zeros((0, 3)), 0)
    a0 = np.array([1.0, 0.1, 0.2])
    for r in RETRACTIONS:
        g1, a1, xi, lam, lamt = step_lie_constrained(G, r, L, empty, np.eye(3), a0, 0.01)
        gl, al, xl = step_lie_lagrangian(G, r, L, np.eye(3), None, a0, 0.01)
        np.testing.assert_allclose(g1, gl, atol=1e-14)
        np.testing.assert_allclose(a1, al, atol=1e-14)
        assert lam.size == 0 and lamt.size == 0


def test_constrained_step_rejects_infeasible_start():
    ops, L, gcs = pinned_body_on_sphere(J)
    r = ProductRetraction(SO3Exp(), VectorRetraction(3))
    g = (np.eye(3), np.array([1.2, 0.0, 0.0]))
    with pytest.raises(InfeasibleState):
        step_lie_constrained(ops, r, L, gcs, g, np.zeros(6), 0.01)
    g = (np.eye(3), np.array([1.0, 0.0, 0.0]))
    with pytest.raises(InfeasibleState):
        step_lie_constrained(ops, r, L, gcs, g, np.r_[np.zeros(3), 1.0, 0, 0], 0.01)


def test_group_constraint_gradient_check():
    ops, L, gcs = pinned_body_on_sphere(J)
    pts = [(so3_exp([0.1, 0.2, 0.3]), np.array([0.6, 0.0, 0.8]))]
    assert gcs.check_gradient(ops, pts) <= 1e-8
    bad = GroupConstraintSet(gcs.phi, lambda g: np.concatenate([np.zeros(3), g[1]])[None], 1)
    with pytest.raises(ValueError):
        bad.check_gradient(ops, pts)


# -- rigid body on R^{3x3} x R^3 ----------------------------------------------

def rigid_state(params, omega=(1.0, 0.1, 0.0)):
    R0 = so3_exp([0.1, -0.4, 0.3])
    return R0, np.zeros(3), rigid_body_tangent_momentum(params, R0, np.asarray(omega)), np.zeros(3)


def test_rigid_body_params_validation():
    with pytest.raises(ValueError):
        RigidBodyParams(np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        RigidBodyParams(np.ones((3, 3)) + np.triu(np.ones((3, 3))))
    with pytest.raises(ValueError):
        RigidBodyParams(J, mass=0.0)


def test_rigid_body_legendre_of_tangent_momentum():
    params = RigidBodyParams(J)
    R0, x0, P0, p0 = rigid_state(params)
    orth, leg = rigid_body_legendre(params, R0, P0)
    assert np.max(np.abs(orth)) <= 1e-15 and np.max(np.abs(leg)) <= 1e-15
    inertia = np.trace(J) * np.eye(3) - J
    np.testing.assert_allclose(params.body_momentum(R0, P0), inertia @ [1.0, 0.1, 0.0], atol=1e-14)


def test_rigid_body_formulations_agree():
    params = RigidBodyParams(J)
    state = rigid_state(params)
    Pi0 = np.linalg.norm(params.body_momentum(state[0], state[2]))
    for _ in range(300):
        a = rigid_body_constrained_step(params, state, 0.01)
        b = rigid_body_nullspace_step(params, state, 0.01)
        assert np.max(np.abs(a.R1 - b.R1)) <= 1e-9 and np.max(np.abs(a.P1 - b.P1)) <= 1e-9
        np.testing.assert_allclose(a.Lam, b.Lam, atol=1e-6)
        np.testing.assert_allclose(a.Lam_t, b.Lam_t, atol=1e-6)
        assert orth_defect(a.R1) <= 1e-10
        state = (a.R1, a.x1, a.P1, a.p1)
    assert abs(np.linalg.norm(params.body_momentum(state[0], state[2])) - Pi0) <= 1e-6


def test_rigid_body_matches_lie_group_rattle_energy():
    """The ambient RATTLE step keeps the kinetic energy bounded near its initial value."""
    params = RigidBodyParams(J)
    state = rigid_state(params)
    E0 = params.energy(*state)
    for _ in range(200):
        s = rigid_body_constrained_step(params, state, 0.01)
        state = (s.R1, s.x1, s.P1, s.p1)
    assert abs(params.energy(*state) - E0) <= 1e-3 * E0


def test_rigid_body_with_potential_and_translation():
    b = np.array([0.0, 0.0, 1.0])
    params = RigidBodyParams(J, mass=2.0, potential=lambda R, x: b @ R @ b + 9.81 * 2 * x[2],
                             grad_R=lambda R, x: np.outer(b, b), grad_x=lambda R, x: np.array([0, 0, 19.62]))
    R0 = so3_exp([0.3, 0.0, 0.0])
    state = (R0, np.zeros(3), rigid_body_tangent_momentum(params, R0, np.array([0.0, 0.5, 0.2])),
             np.array([1.0, 0.0, 0.0]))
    a = rigid_body_constrained_step(params, state, 0.01)
    c = rigid_body_nullspace_step(params, state, 0.01)
    assert np.max(np.abs(a.R1 - c.R1)) <= 1e-9 and np.max(np.abs(a.P1 - c.P1)) <= 1e-9
    np.testing.assert_allclose(a.x1, [0.005, 0.0, -0.5 * 0.01**2 * 9.81], atol=1e-15)
    assert a.residual_norm <= 1e-10 and c.residual_norm <= 1e-10


def test_rigid_body_rejects_infeasible_state():
    params = RigidBodyParams(J)
    R0, x0, P0, p0 = rigid_state(params)
    with pytest.raises(InfeasibleState):
        rigid_body_constrained_step(params, (1.01 * R0, x0, P0, p0), 0.01)
    with pytest.raises(InfeasibleState):
        rigid_body_nullspace_step(params, (R0, x0, P0 + R0, p0), 0.01)
