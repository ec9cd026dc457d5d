import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from constrained_symplectic.discretization import (CotangentSample, DiscretizationMap, ThetaMethod,
                                                   check_discretization_axioms,
                                                   cotangent_lift_forward, cotangent_lift_inverse,
                                                   theta_forward, theta_inverse)
from constrained_symplectic.errors import AxiomViolation, OutOfChart, SingularLift

thetas = st.floats(0.0, 1.0)
vec3 = arrays(float, 3, elements=st.floats(-3, 3))


def sinh_map():
    """Nonlinear map with no analytic Jacobian: q1 = q0 + sinh(h v)."""
    return DiscretizationMap(lambda q, v, h: (np.asarray(q), np.asarray(q) + np.sinh(h * np.asarray(v))),
                             lambda q0, q1, h: (np.asarray(q0), np.arcsinh(np.asarray(q1) - q0) / h),
                             name="sinh")


def test_theta_forward_midpoint():
    q0, q1 = theta_forward(0.5, [1.0, 0.0], [0.0, 2.0], 0.1)
    np.testing.assert_allclose(q0, [1.0, -0.1])
    np.testing.assert_allclose(q1, [1.0, 0.1])


def test_theta_forward_explicit_euler():
    q0, q1 = theta_forward(0.0, [1.0], [2.0], 1.0)
    assert (q0[0], q1[0]) == (1.0, 3.0)


@given(thetas, vec3)
def test_theta_forward_zero_section(theta, q):
    q0, q1 = theta_forward(theta, q, np.zeros(3), 0.3)
    np.testing.assert_array_equal(q0, q)
    np.testing.assert_array_equal(q1, q)


def test_theta_inverse_examples():
    q, v = theta_inverse(0.5, [1.0, 0.0], [1.0, 0.2], 0.1)
    np.testing.assert_allclose(q, [1.0, 0.1])
    np.testing.assert_allclose(v, [0.0, 2.0])
    q, v = theta_inverse(1.0, [0.0], [1.0], 0.5)
    assert (q[0], v[0]) == (1.0, 2.0)
    q, v = theta_inverse(0.3, [2.0], [2.0], 0.5)
    assert v[0] == 0.0 and q[0] == pytest.approx(2.0)


@given(thetas, vec3, vec3, st.sampled_from([1e-3, 1e-2, 1e-1]))
def test_theta_forward_inverse_round_trip(theta, q0, q1, h):
    rd = ThetaMethod(theta)
    a, b = rd.forward(*rd.inverse(q0, q1, h), h)
    np.testing.assert_allclose(a, q0, atol=1e-10)
    np.testing.assert_allclose(b, q1, atol=1e-10)


def test_theta_method_rejects_out_of_range():
    for bad in (-0.1, 1.5):
        with pytest.raises(ValueError):
            ThetaMethod(bad)


def test_theta_jacobian_matches_fd():
    rd = ThetaMethod(0.3)
    plain = DiscretizationMap(rd.forward, rd.inverse)
    q, v = np.array([0.2, -1.0]), np.array([0.5, 0.4])
    np.testing.assert_allclose(rd.jacobian(q, v, 0.1), plain.jacobian(q, v, 0.1), atol=1e-8)


@pytest.mark.parametrize("theta", [0.0, 0.3, 0.5, 1.0])
def test_axioms_hold_for_theta_family(theta, rng):
    samples = [(rng.standard_normal(2), rng.standard_normal(2)) for _ in range(5)]
    rep = check_discretization_axioms(ThetaMethod(theta), samples, 0.01)
    assert rep.passed
    assert rep.zero_section_defect <= 1e-8 and rep.derivative_defect <= 1e-8


def test_axioms_quadratic_term_vanishes_at_zero():
    rd = DiscretizationMap(lambda q, v, h: (q, q + h * v + h * v**2), lambda q0, q1, h: (q0, q1 - q0))
    rep = check_discretization_axioms(rd, [(np.array([0.7]), np.array([1.0]))], 0.1)
    assert rep.passed


def test_axioms_zero_section_violation():
    h = 0.1
    rd = DiscretizationMap(lambda q, v, h: (q + h, q + h * v), lambda q0, q1, h: (q0, q1), name="bad")
    with pytest.raises(AxiomViolation) as info:
        check_discretization_axioms(rd, [(np.array([0.5]), np.array([0.0]))], h)
    assert info.value.report.zero_section_defect == pytest.approx(h)
    rep = check_discretization_axioms(rd, [(np.array([0.5]), np.array([0.0]))], h, raise_on_failure=False)
    assert not rep.passed


def test_axioms_need_samples():
    with pytest.raises(ValueError):
        check_discretization_axioms(ThetaMethod(0.5), [], 0.1)


@pytest.mark.parametrize("theta, expected", [(0.0, (1, 4, 4, 4)), (1.0, (3, 2, 4, 4)),
                                             (0.5, (2, 3, 4, 4))])
def test_lift_inverse_scalar_examples(theta, expected):
    s = cotangent_lift_inverse(ThetaMethod(theta), [1.0], [2.0], [3.0], [4.0], 0.5)
    np.testing.assert_allclose(np.concatenate(s.as_tuple()), expected, atol=1e-15)


@pytest.mark.parametrize("theta, sample", [(1.0, (3, 2, 4, 4)), (0.5, (2, 3, 4, 4)), (0.0, (1, 4, 4, 4))])
def test_lift_forward_scalar_examples(theta, sample):
    s = CotangentSample(*(np.array([float(c)]) for c in sample))
    out = cotangent_lift_forward(ThetaMethod(theta), s, 0.5)
    np.testing.assert_allclose(np.concatenate(out), [1, 2, 3, 4], atol=1e-14)


@given(thetas, vec3, vec3)
def test_lift_forward_zero_tangent_is_diagonal(theta, q, p):
    s = CotangentSample(q, p, np.zeros(3), np.zeros(3))
    q0, p0, q1, p1 = cotangent_lift_forward(ThetaMethod(theta), s, 0.1)
    for a, b in ((q0, q), (q1, q), (p0, p), (p1, p)):
        np.testing.assert_allclose(a, b, atol=1e-14)


@given(vec3, vec3, vec3, vec3, st.sampled_from([1e-3, 1e-2, 1e-1]))
def test_generic_lift_equals_closed_forms(q0, p0, q1, p1, h):
    v = (q1 - q0) / h
    pdot = (p1 - p0) / h
    expected = {0.0: (q0, p1), 1.0: (q1, p0), 0.5: ((q0 + q1) / 2, (p0 + p1) / 2)}
    for theta, (q, p) in expected.items():
        s = cotangent_lift_inverse(ThetaMethod(theta), q0, p0, q1, p1, h)
        scale = 1 + np.max(np.abs(np.concatenate([q0, q1, p0, p1]))) / h
        np.testing.assert_allclose(s.q, q, atol=1e-15 * scale)
        np.testing.assert_allclose(s.p, p, atol=1e-15 * scale)
        np.testing.assert_allclose(s.qdot, v, atol=1e-15 * scale)
        np.testing.assert_allclose(s.pdot, pdot, atol=1e-15 * scale)


@given(thetas, vec3, vec3)
def test_lift_zero_section(theta, q, p):
    s = cotangent_lift_inverse(ThetaMethod(theta), q, p, q, p, 0.01)
    np.testing.assert_allclose(s.q, q, atol=1e-12)
    np.testing.assert_allclose(s.p, p, atol=1e-12)
    assert np.max(np.abs(s.qdot)) <= 1e-12 and np.max(np.abs(s.pdot)) <= 1e-12


@given(thetas, vec3, vec3, vec3, vec3, st.sampled_from([1e-3, 1e-2, 1e-1]))
def test_lift_round_trip_theta(theta, q, p, qd, pd, h):
    rd = ThetaMethod(theta)
    out = cotangent_lift_forward(rd, CotangentSample(q, p, qd, pd), h)
    s = cotangent_lift_inverse(rd, *out, h)
    for a, b in zip(s.as_tuple(), (q, p, qd, pd)):
        np.testing.assert_allclose(a, b, atol=1e-10 * (1 + np.max(np.abs(b))))


@given(arrays(float, 2, elements=st.floats(-1, 1)), arrays(float, 2, elements=st.floats(-1, 1)),
       arrays(float, 2, elements=st.floats(-1, 1)), arrays(float, 2, elements=st.floats(-1, 1)),
       st.sampled_from([1e-3, 1e-2, 1e-1]))
def test_lift_round_trip_nonlinear_fd_map(q, p, qd, pd, h):
    # the finite-difference Jacobian perturbs v by 1e-7, moving q1 by only ~h*1e-7,
    # so round-off caps its relative accuracy near 1e-16 / (h * 1e-7)
    rd = sinh_map()
    out = cotangent_lift_forward(rd, CotangentSample(q, p, qd, pd), h)
    s = cotangent_lift_inverse(rd, *out, h)
    for a, b in zip(s.as_tuple(), (q, p, qd, pd)):
        np.testing.assert_allclose(a, b, atol=1e-15 / (h * 1e-7) * 10)


def test_lift_inverse_out_of_chart():
    rd = DiscretizationMap(lambda q, v, h: (q, q + h * v),
                           lambda q0, q1, h: (q0, np.log(q1 - q0) / h * np.ones_like(q0)))
    with np.errstate(invalid="ignore", divide="ignore"):
        with pytest.raises(OutOfChart):
            cotangent_lift_inverse(rd, [1.0], [0.0], [0.5], [0.0], 0.1)


def test_lift_forward_singular_block_system():
    rd = DiscretizationMap(lambda q, v, h: (q, q + 0 * v), lambda q0, q1, h: (q0, q1 - q0),
                           name="degenerate")
    with pytest.raises(SingularLift):
        cotangent_lift_forward(rd, CotangentSample([1.0], [1.0], [1.0], [1.0]), 0.1)


def test_lift_inverse_dimension_mismatch():
    with pytest.raises(ValueError):
        cotangent_lift_inverse(ThetaMethod(0.5), [1.0, 2.0], [1.0], [1.0, 2.0], [1.0, 2.0], 0.1)


def test_cotangent_sample_validation():
    with pytest.raises(ValueError):
        CotangentSample([1.0], [np.inf], [0.0], [0.0])
    with pytest.raises(ValueError):
        CotangentSample([1.0, 2.0], [1.0], [0.0], [0.0])
