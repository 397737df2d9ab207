"""
Tests for knot vectors, Bezier extraction, refinement and multi-block DOF maps
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.domain import model_catalogue
from src.core.domain.bernstein import bernstein_basis
from src.core.domain.errors import ConfigurationError, DomainError, FormatError
from src.core.domain.spline_volume import (
    BSplineVolume, ExtractionOperator, Interface, KnotVector, MultiBlockVolume, element_local_dofs,
    extract_bezier, extraction_operators, greville_points, h_refine,
)


def random_volume(rng, degree=3, elements=2, amplitude=0.1):
    kvs = tuple(KnotVector.uniform(degree, elements) for _ in range(3))
    vol = BSplineVolume.identity(kvs)
    noise = amplitude * rng.standard_normal(vol.control_points.shape)
    return vol.with_control_points(vol.control_points + noise)


def test_knot_vector_validation():
    with pytest.raises(FormatError):
        KnotVector(2, (0.0, 0.0, 0.5, 1.0, 1.0, 1.0))
    with pytest.raises(FormatError):
        KnotVector(1, (0.0, 0.0, 0.7, 0.3, 1.0, 1.0))
    with pytest.raises(FormatError):
        KnotVector(1, (0.0, 0.0, 0.5, 0.5, 1.0, 1.0))


def test_greville_points():
    assert_allclose(greville_points(KnotVector(3, (0, 0, 0, 0, 1, 1, 1, 1))), [0, 1 / 3, 2 / 3, 1])
    assert_allclose(greville_points(KnotVector(1, (0, 0, 0.5, 1, 1))), [0, 0.5, 1])
    assert_allclose(greville_points(KnotVector(3, (0, 0, 0, 0, 0.5, 1, 1, 1, 1))),
                    [0, 1 / 6, 1 / 2, 5 / 6, 1], atol=1e-15)


def test_single_span_extraction_is_identity():
    ops = extraction_operators(KnotVector.uniform(3, 1))
    assert len(ops) == 1
    assert np.array_equal(ops[0], np.eye(4))


@pytest.mark.parametrize("knots,count", [
    ((0, 0, 0, 0, 0.5, 1, 1, 1, 1), 2),
    ((0, 0, 0, 0, 0.25, 0.5, 0.75, 1, 1, 1, 1), 4),
    ((0, 0, 0, 0.3, 0.3, 0.8, 1, 1, 1), 3),
])
def test_extraction_reproduces_bspline_basis(knots, count):
    kv = KnotVector(len([k for k in knots if k == 0]) - 1, knots)
    p = kv.degree
    ops = extraction_operators(kv)
    assert len(ops) == count
    u = kv.array
    for op, s in zip(ops, kv.spans()):
        local = np.linspace(0.0, 1.0, 20)
        t = u[s] + local * (u[s + 1] - u[s])
        # right end of the last span belongs to it; interior span ends belong to the next span
        t = t[:-1] if s != kv.spans()[-1] else t
        local = local[:len(t)]
        expected = kv.basis_matrix(t)[:, s - p:s + 1]
        assert_allclose(bernstein_basis(p, local) @ op.T, expected, atol=1e-12)


def test_extract_bezier_matches_parent_geometry(rng):
    vol = random_volume(rng)
    elements = extract_bezier(vol)
    assert len(elements) == 8
    for b in elements:
        local = rng.uniform(0.0, 1.0, size=(25, 3))
        assert_allclose(b.evaluate(local), vol.evaluate(b.to_block(local)), atol=1e-12)


def test_bezier_only_volume_extracts_to_itself(rng):
    vol = random_volume(rng, degree=2, elements=1)
    (b,) = extract_bezier(vol)
    assert np.array_equal(b.control_points, vol.control_points)


def test_four_elements_for_three_interior_knots():
    kvs = (KnotVector(3, (0, 0, 0, 0, 0.25, 0.5, 0.75, 1, 1, 1, 1)),
           KnotVector.uniform(3, 1), KnotVector.uniform(3, 1))
    assert len(extract_bezier(BSplineVolume.identity(kvs))) == 4


def test_element_local_dofs_are_in_range(rng):
    vol = random_volume(rng, degree=2, elements=3)
    ext = ExtractionOperator.for_volume(vol)
    for element in ext.elements():
        dofs = element_local_dofs(vol, ext, element)
        assert dofs.size == 27
        assert dofs.min() >= 0 and dofs.max() < vol.n_dofs


def test_h_refine_zero_levels_is_identity(rng):
    vol = random_volume(rng)
    same = h_refine(vol, 0)
    assert np.array_equal(same.control_points, vol.control_points)


def test_h_refine_preserves_identity_map(rng):
    vol = BSplineVolume.identity(tuple(KnotVector.uniform(2, 1) for _ in range(3)))
    fine = h_refine(vol, 1)
    pts = rng.uniform(0.0, 1.0, size=(100, 3))
    assert_allclose(fine.evaluate(pts), pts, atol=1e-13)


def test_h_refine_preserves_geometry(rng):
    vol = random_volume(rng, degree=3, elements=1)
    fine = h_refine(vol, 2)
    assert fine.shape == (7, 7, 7)
    assert fine.n_elements() == (4, 4, 4)
    pts = rng.uniform(0.0, 1.0, size=(50, 3))
    assert_allclose(fine.evaluate(pts), vol.evaluate(pts), atol=1e-12)


def test_h_refine_rejects_negative_levels(rng):
    with pytest.raises(DomainError):
        h_refine(random_volume(rng), -1)


def test_evaluate_outside_parameter_domain_fails(rng):
    with pytest.raises(DomainError):
        random_volume(rng).evaluate(np.array([[0.5, 1.5, 0.5]]))


def test_two_block_dof_map_merges_interface():
    model = model_catalogue.curved_two_block(degree=2, elements=1)
    assert model.n_dofs == 27 + 27 - 9
    assert len(model.exterior_faces()) == 10


def test_hollow_sphere_dof_map(hollow_sphere):
    # three 4x4 interfaces, the shared edge of all three blocks counted once
    assert hollow_sphere.n_dofs == 3 * 64 - 36 - 8
    assert len(hollow_sphere.exterior_faces()) == 12


def test_dof_map_is_consistent_with_positions(hollow_sphere):
    seen = {}
    for b, block in enumerate(hollow_sphere.blocks):
        local = np.arange(block.n_dofs)
        glob = hollow_sphere.dof_map.global_index(b, local)
        for g, x in zip(glob, block.control_points.reshape(-1, 3)):
            if g in seen:
                assert_allclose(seen[g], x, atol=1e-8)
            seen[g] = x
    assert len(seen) == hollow_sphere.n_dofs


def test_remapping_is_idempotent(hollow_sphere):
    dm = hollow_sphere.dof_map
    for b in range(3):
        local = np.arange(hollow_sphere.blocks[b].n_dofs)
        assert np.array_equal(dm.remap(b, local), dm.global_index(b, local))


def test_non_conforming_interface_is_rejected():
    model = model_catalogue.curved_two_block(degree=2, elements=1)
    shifted = model.blocks[1].with_control_points(model.blocks[1].control_points + 1e-3)
    with pytest.raises(ConfigurationError):
        MultiBlockVolume((model.blocks[0], shifted), (Interface((0, 1), (1, 0), 0),))


def test_blocks_must_share_degrees():
    a = BSplineVolume.identity(tuple(KnotVector.uniform(1, 1) for _ in range(3)))
    b = BSplineVolume.identity(tuple(KnotVector.uniform(2, 1) for _ in range(3)))
    with pytest.raises(ConfigurationError):
        MultiBlockVolume((a, b))


def test_snap_interfaces_restores_conformity():
    model = model_catalogue.curved_two_block(degree=2, elements=1)
    cp = model.blocks[1].control_points.copy()
    cp[0] += 1e-10
    nudged = MultiBlockVolume((model.blocks[0], model.blocks[1].with_control_points(cp)),
                              model.interfaces, merge_tolerance=1e-8)
    snapped = nudged.snap_interfaces()
    assert_allclose(snapped.blocks[0].control_points[-1], snapped.blocks[1].control_points[0], atol=0.0)
