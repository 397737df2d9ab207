"""
Tests for the trivariate Bernstein algebra
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.domain.bernstein import (
    BINOMIALS, BernsteinTensor, ProductSkeleton, bernstein_basis, derivative, dyadic_restriction, elevate,
    evaluate, evaluate_many, integrate, product, product_table, split, sub_box,
)
from src.core.domain.errors import DomainError
from src.core.domain.quadrature import tensor_rule


def random_tensor(rng, degrees):
    return BernsteinTensor(degrees, rng.standard_normal(tuple(d + 1 for d in degrees)))


def sample_points(rng, n=25):
    return rng.uniform(0.0, 1.0, size=(n, 3))


def test_binomial_rows():
    assert_allclose(BINOMIALS.row(4), [1, 4, 6, 4, 1])
    assert BINOMIALS.exact_integer(10, 3) == 120


def test_basis_partition_of_unity():
    t = np.linspace(0.0, 1.0, 7)
    for n in range(6):
        assert_allclose(bernstein_basis(n, t).sum(axis=1), 1.0, atol=1e-14)


def test_evaluate_matches_basis_expansion(rng):
    p = random_tensor(rng, (2, 3, 1))
    pts = sample_points(rng)
    values = evaluate_many(p, pts)
    for u, v in zip(pts[:5], values[:5]):
        assert evaluate(p, u) == pytest.approx(v, abs=1e-12)


def test_evaluate_rejects_points_outside_cube():
    p = BernsteinTensor.constant(1.0, (1, 1, 1))
    with pytest.raises(DomainError):
        evaluate(p, (0.5, 1.2, 0.0))


def test_product_is_pointwise_product(rng):
    p = random_tensor(rng, (2, 1, 3))
    q = random_tensor(rng, (1, 2, 2))
    pq = product(p, q)
    assert pq.degrees == (3, 3, 5)
    pts = sample_points(rng)
    assert_allclose(evaluate_many(pq, pts), evaluate_many(p, pts) * evaluate_many(q, pts), atol=1e-12)


def test_product_is_bitwise_symmetric(rng):
    p = random_tensor(rng, (2, 2, 2))
    q = random_tensor(rng, (3, 1, 2))
    assert np.array_equal(product(p, q).coeffs, product(q, p).coeffs)


def test_integral_matches_gauss_quadrature(rng):
    p = random_tensor(rng, (4, 3, 5))
    rule = tensor_rule(4)
    expected = float(np.dot(rule.weights, evaluate_many(p, rule.points)))
    assert integrate(p) == pytest.approx(expected, rel=1e-12, abs=1e-13)


def test_elevation_preserves_values(rng):
    p = random_tensor(rng, (1, 2, 0))
    q = elevate(p, (3, 2, 4))
    pts = sample_points(rng)
    assert_allclose(evaluate_many(q, pts), evaluate_many(p, pts), atol=1e-12)
    assert integrate(q) == pytest.approx(integrate(p), abs=1e-13)


def test_elevation_below_current_degree_fails(rng):
    with pytest.raises(DomainError):
        elevate(random_tensor(rng, (2, 2, 2)), (1, 2, 2))


def test_derivative_matches_finite_difference(rng):
    p = random_tensor(rng, (3, 2, 2))
    u = np.array([[0.3, 0.6, 0.45]])
    h = 1e-6
    for axis in range(3):
        step = np.zeros(3)
        step[axis] = h
        fd = (evaluate_many(p, u + step) - evaluate_many(p, u - step)) / (2 * h)
        assert_allclose(evaluate_many(derivative(p, axis), u), fd, rtol=1e-6, atol=1e-7)


def test_derivative_of_constant_direction_is_zero():
    p = BernsteinTensor.constant(2.5, (0, 1, 1))
    d = derivative(p, 0)
    assert d.degrees == (0, 1, 1)
    assert np.all(d.coeffs == 0.0)


def test_split_reproduces_both_halves(rng):
    p = random_tensor(rng, (3, 2, 1))
    left, right = split(p, axis=1)
    t = rng.uniform(0.0, 1.0, size=(10, 3))
    on_left = t.copy()
    on_left[:, 1] *= 0.5
    on_right = t.copy()
    on_right[:, 1] = 0.5 + 0.5 * t[:, 1]
    assert_allclose(evaluate_many(left, t), evaluate_many(p, on_left), atol=1e-12)
    assert_allclose(evaluate_many(right, t), evaluate_many(p, on_right), atol=1e-12)


def test_sub_box_matches_affine_restriction(rng):
    p = random_tensor(rng, (2, 3, 2))
    corner = (1, 2, 3)
    levels = 2
    q = sub_box(p, corner, levels)
    t = sample_points(rng, 12)
    mapped = (np.asarray(corner) + t) / 2 ** levels
    assert_allclose(evaluate_many(q, t), evaluate_many(p, mapped), atol=1e-12)


def test_dyadic_pieces_integrate_to_whole(rng):
    p = random_tensor(rng, (3, 3, 3))
    total = 0.0
    for corner in np.ndindex(2, 2, 2):
        total += integrate(sub_box(p, corner, 1)) / 8.0
    assert total == pytest.approx(integrate(p), abs=1e-12)


def test_dyadic_restriction_identity_at_level_zero():
    assert_allclose(dyadic_restriction(3, 0, 0), np.eye(4))


def test_tensor_validates_shape():
    with pytest.raises(DomainError):
        BernsteinTensor((1, 1, 1), np.zeros((2, 2, 3)))


def test_tabulated_product_matches_convolution(rng):
    p, q = random_tensor(rng, (2, 3, 1)), random_tensor(rng, (1, 2, 2))
    skeleton = ProductSkeleton.build([[(1, 2), (2, 1)], [(2, 3), (3, 2)], [(1, 2), (2, 1)]])
    assert_allclose(skeleton.multiply(p, q).coeffs, product(p, q).coeffs, rtol=1e-13, atol=1e-13)
    assert np.array_equal(skeleton.multiply(p, q).coeffs, skeleton.multiply(q, p).coeffs)


def test_tabulated_signed_sum(rng):
    a, b = random_tensor(rng, (1, 1, 2)), random_tensor(rng, (1, 1, 2))
    c, d = random_tensor(rng, (2, 2, 2)), random_tensor(rng, (2, 2, 2))
    skeleton = ProductSkeleton.build([[(1, 2)], [(1, 2)], [(2, 2)]])
    combined = skeleton.dot([a, b], [c, d], (1.0, -1.0))
    expected = product(a, c).coeffs - product(b, d).coeffs
    assert combined.degrees == (3, 3, 4)
    assert_allclose(combined.coeffs, expected, rtol=1e-13, atol=1e-13)


def test_product_table_rows():
    table = product_table(1, 2)
    assert table.shape == (4, 6)
    assert_allclose(table.sum(axis=1), [1.0, 1.0, 1.0, 1.0])
    assert not table.flags.writeable


def test_skeleton_items_round_trip(rng):
    skeleton = ProductSkeleton.build([[(1, 1)], [(0, 2)], [(2, 3)]])
    again = ProductSkeleton.from_items(skeleton.items())
    assert sorted(skeleton.items()) == ["product_u_1_1", "product_v_0_2", "product_w_2_3"]
    p, q = random_tensor(rng, (1, 0, 2)), random_tensor(rng, (1, 2, 3))
    assert np.array_equal(again.dot([p], [q]).coeffs, skeleton.dot([p], [q]).coeffs)


def test_skeleton_without_degree_pair_fails(rng):
    skeleton = ProductSkeleton.build([[(1, 1)], [(1, 1)], [(1, 1)]])
    with pytest.raises(DomainError):
        skeleton.multiply(random_tensor(rng, (1, 1, 2)), random_tensor(rng, (1, 1, 1)))
