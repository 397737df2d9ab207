"""
Tests for the Jacobian-weighted polynomial approximation of rational integrands
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.domain.bernstein import BernsteinTensor, elevate, evaluate_many, integrate, product
from src.core.domain.element_kernel import geometry_jacobians
from src.core.domain.errors import ConfigurationError, DegenerateGeometryError, DomainError
from src.core.domain.geometry_terms import (
    basis_gradients, build_d_table, cofactors, entry_numerator, jacobian_expansion,
    JacobianExpansion, numerator_degrees,
)
from src.core.domain.polynomial_approx import (
    ApproxDegrees, RefinementPlan, RefinementStrategy, approximate, build_E, build_reusable,
    integrate_entry, refine_approximation,
)
from src.core.domain.quadrature import basis_table, tensor_rule
from src.core.domain.spline_volume import BSplineVolume, KnotVector, extract_bezier


def curved_element(rng, degree=2, amplitude=0.05):
    vol = BSplineVolume.identity(tuple(KnotVector.uniform(degree, 1) for _ in range(3)))
    noise = amplitude * rng.standard_normal(vol.control_points.shape)
    return extract_bezier(vol.with_control_points(vol.control_points + noise))[0]


def default_system(degrees):
    approx = ApproxDegrees.default(degrees)
    return build_reusable(*approx.as_tuple(), *degrees)


@pytest.fixture
def element(rng):
    b = curved_element(rng)
    return b, jacobian_expansion(b, build_d_table(b.degrees))


def test_default_degrees():
    assert ApproxDegrees.default((3, 2, 1)).as_tuple() == (6, 3, 0)
    assert ApproxDegrees.default((2, 2, 2)).elevated(1).as_tuple() == (4, 4, 4)
    assert ApproxDegrees(1, 2, 3).n_unknowns == 24


def test_sigma_is_one_for_nominal_numerator_degree():
    for l in (1, 2, 3):
        system = build_reusable(3 * l - 3, 3 * l - 3, 3 * l - 3, l, l, l, numerator=(6 * l - 4,) * 3)
        assert system.sigma == pytest.approx(1.0, abs=1e-15)


def test_sigma_for_audited_numerator_degree():
    system = default_system((2, 2, 2))
    assert system.numerator_degrees == (10, 10, 10)
    assert system.sigma == pytest.approx((12.0 / 14.0) ** 3)


def test_system_matrix_factors_as_l_times_e(element):
    _, jac = element
    system = default_system((2, 2, 2))
    assert_allclose(system.system_matrix(jac), system.l_dense() @ build_E(jac, system), rtol=1e-12, atol=1e-14)


def test_polynomials_are_reproduced(rng, element):
    _, jac = element
    system = default_system((2, 2, 2))
    alpha = system.approx_degrees.as_tuple()
    p = BernsteinTensor(alpha, rng.standard_normal(tuple(a + 1 for a in alpha)))
    f1 = elevate(product(jac.tensor, p), system.numerator_degrees)
    g = approximate(f1, jac, system)
    assert_allclose(g.G.coeffs, p.coeffs, atol=1e-9)
    assert g.residual_estimate < 1e-9
    assert integrate_entry(g) == pytest.approx(integrate(p), abs=1e-10)


def test_piecewise_approximation_reproduces_polynomials(rng, element):
    _, jac = element
    system = default_system((2, 2, 2))
    alpha = system.approx_degrees.as_tuple()
    p = BernsteinTensor(alpha, rng.standard_normal(tuple(a + 1 for a in alpha)))
    f1 = product(jac.tensor, p)
    prepared = system.prepare(jac, subdivisions=1)
    assert len(prepared.pieces) == 8
    assert prepared.integrate(f1) == pytest.approx(integrate(p), abs=1e-10)


@pytest.mark.parametrize("subdivisions", [0, 1])
def test_adjoint_weights_match_direct_integration(rng, element, subdivisions):
    b, jac = element
    system = default_system(b.degrees)
    prepared = system.prepare(jac, subdivisions)
    num = BernsteinTensor(system.numerator_degrees,
                          rng.standard_normal(tuple(n + 1 for n in system.numerator_degrees)))
    direct = prepared.integrate(num)
    via_weights = float(np.sum(prepared.weights() * num.coeffs))
    assert via_weights == pytest.approx(direct, rel=1e-10, abs=1e-12)
    assert prepared.weights() is prepared.weights()


def test_stiffness_entry_close_to_gauss(rng):
    b = curved_element(rng, amplitude=0.02)
    jac = jacobian_expansion(b, build_d_table(b.degrees))
    system = build_reusable(*ApproxDegrees.default(b.degrees).elevated(2).as_tuple(), *b.degrees)
    grads = basis_gradients(b.degrees)
    num = entry_numerator(cofactors(b), jac, grads.of(0), grads.of(0))
    approx = system.prepare(jac).integrate(num)

    rule = tensor_rule(14)
    jp, det = geometry_jacobians(b, rule.points)
    _, g = basis_table(b.degrees, rule.points)
    phys = np.linalg.solve(jp, g[:, :, 0][..., None])[..., 0]
    reference = float(np.sum(rule.weights * det * np.einsum('ni,ni->n', phys, phys)))
    assert approx == pytest.approx(reference, rel=1e-3)


def test_numerator_of_wrong_degree_is_rejected(element):
    _, jac = element
    system = default_system((2, 2, 2))
    too_high = BernsteinTensor.zeros(tuple(n + 1 for n in numerator_degrees((2, 2, 2))))
    with pytest.raises(DomainError):
        system.prepare(jac).approximate(too_high)


def test_zero_jacobian_is_degenerate():
    system = default_system((1, 1, 1))
    jac = JacobianExpansion(BernsteinTensor.zeros((2, 2, 2)))
    with pytest.raises(DegenerateGeometryError):
        system.prepare(jac, block=0, element=(0, 0, 0))


def test_well_conditioned_element(element):
    _, jac = element
    prepared = default_system((2, 2, 2)).prepare(jac)
    assert not prepared.ill_conditioned
    assert 0.0 < prepared.min_rcond <= 1.0


def test_refinement_strategies():
    plan = RefinementPlan(ApproxDegrees(3, 3, 3))
    assert refine_approximation("piecewise", plan) == RefinementPlan(ApproxDegrees(3, 3, 3), 1)
    assert refine_approximation(RefinementStrategy.DEGREE_ELEVATE, plan).degrees == ApproxDegrees(4, 4, 4)
    combined = refine_approximation("combined", plan, bump=(2, 0, 1))
    assert combined == RefinementPlan(ApproxDegrees(5, 3, 4), 1)
    with pytest.raises(ConfigurationError):
        refine_approximation("bisect", plan)


def test_jacobian_weight_is_exact_for_affine_elements():
    vol = BSplineVolume.identity(tuple(KnotVector.uniform(1, 1) for _ in range(3)))
    b = extract_bezier(vol.with_control_points(vol.control_points * 2.0))[0]
    jac = jacobian_expansion(b, build_d_table((1, 1, 1)))
    system = default_system((1, 1, 1))
    f1 = BernsteinTensor.constant(8.0, system.numerator_degrees)
    g = approximate(f1, jac, system)
    assert_allclose(evaluate_many(g.G, np.array([[0.2, 0.7, 0.5]])), [1.0], atol=1e-12)
