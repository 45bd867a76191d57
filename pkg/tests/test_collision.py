import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull
from scipy.special import erf

from beliefrisk.collision import (
    CollisionRegion,
    RelativeState,
    build_collision_region,
    collision_probability,
    collision_probability_mc,
    fuse_covariances,
)
from beliefrisk.errors import DegenerateCovariance, InvalidInput
from beliefrisk.geometry import ConvexPolygon, Covariance2, Footprint


def box(x0, x1, y0, y1):
    return CollisionRegion(ConvexPolygon.rectangle(x0, x1, y0, y1))


def interval_mass(lo, hi, mu, sd):
    """P(lo <= X <= hi) for X ~ N(mu, sd^2), via erf."""
    return 0.5 * (erf((hi - mu) / (sd * math.sqrt(2))) - erf((lo - mu) / (sd * math.sqrt(2))))


# --- fusion -----------------------------------------------------------------


def test_fuse_examples():
    assert fuse_covariances(Covariance2(0.04, 0, 0.04), Covariance2(0.01, 0, 0.01)) == pytest.approx(Covariance2(0.05, 0, 0.05))
    opp = Covariance2(0.3, 0.1, 0.2)
    assert fuse_covariances(Covariance2.zero(), opp) == opp
    fused = fuse_covariances(Covariance2(0.1, 0.02, 0.2), Covariance2(0.3, -0.01, 0.1))
    np.testing.assert_allclose(fused.matrix, [[0.4, 0.01], [0.01, 0.3]], atol=1e-15)


# --- region construction ----------------------------------------------------


def test_region_aligned_rectangles():
    region = build_collision_region(Footprint(4, 2), Footprint(4, 2), 0.0)
    assert len(region.polygon.vertices) == 4
    xs, ys = region.polygon.array.T
    assert (xs.min(), xs.max(), ys.min(), ys.max()) == pytest.approx((-4, 4, -2, 2))


def test_region_tiny_opponent():
    region = build_collision_region(Footprint(4, 2), Footprint(1e-6, 1e-6), 0.3)
    xs, ys = region.polygon.array.T
    assert (xs.min(), xs.max(), ys.min(), ys.max()) == pytest.approx((-2, 2, -1, 1), abs=1e-6)


def test_region_perpendicular_bounding_box():
    # at exactly 90 degrees the opponent edges line up with the ego edges, so
    # the hull is a 6 x 6 square rather than an octagon
    region = build_collision_region(Footprint(4, 2), Footprint(4, 2), math.pi / 2)
    xs, ys = region.polygon.array.T
    assert (xs.min(), xs.max(), ys.min(), ys.max()) == pytest.approx((-3, 3, -3, 3))
    assert region.polygon.area() == pytest.approx(36.0)


def test_region_generic_heading_is_octagon():
    assert len(build_collision_region(Footprint(4, 2), Footprint(4.5, 1.8), 0.4).polygon.vertices) == 8


def test_region_matches_bruteforce_hull_for_100_headings():
    rng = np.random.default_rng(11)
    ego, opp = Footprint(4.5, 1.8), Footprint(3.7, 2.2)
    for heading in rng.uniform(-math.pi, math.pi, size=100):
        a = ego.corners(0.0)
        b = opp.corners(heading)
        pts = -(a[:, None, :] + b[None, :, :]).reshape(-1, 2)
        ref = ConvexHull(pts)
        region = build_collision_region(ego, opp, heading)
        assert region.polygon.area() == pytest.approx(ref.volume, rel=1e-12)
        ours = sorted(map(tuple, np.round(region.polygon.array, 9)))
        theirs = sorted(map(tuple, np.round(pts[ref.vertices], 9)))
        assert ours == theirs


def _rect_overlap(offset, heading, ego: Footprint, opp: Footprint) -> bool:
    """Separating-axis test for two rectangles, ego at the origin with heading 0."""
    a = ego.corners(0.0)
    b = opp.corners(heading) + np.asarray(offset)
    axes = [(1.0, 0.0), (0.0, 1.0), (math.cos(heading), math.sin(heading)), (-math.sin(heading), math.cos(heading))]
    for ax in axes:
        pa, pb = a @ ax, b @ ax
        if pa.max() < pb.min() - 1e-12 or pb.max() < pa.min() - 1e-12:
            return False
    return True


@settings(max_examples=300)
@given(st.floats(-8, 8), st.floats(-8, 8), st.floats(-math.pi, math.pi))
def test_region_membership_equals_footprint_overlap(dx, dy, heading):
    ego, opp = Footprint(4.5, 1.8), Footprint(4.0, 2.0)
    region = build_collision_region(ego, opp, heading)
    inside = region.contains((dx, dy))
    # skip points within rounding distance of the boundary
    probe = region.polygon.contains_many(np.array([[dx + 1e-7, dy], [dx - 1e-7, dy], [dx, dy + 1e-7], [dx, dy - 1e-7]]))
    if not (probe == inside).all():
        return
    assert inside == _rect_overlap((dx, dy), heading, ego, opp)


def test_region_contains_origin():
    assert build_collision_region(Footprint(4, 2), Footprint(1, 1), 1.0).contains((0.0, 0.0))


# --- collision probability --------------------------------------------------


def test_unit_square_example():
    p = collision_probability(RelativeState((0, 0), Covariance2(1, 0, 1)), box(-1, 1, -1, 1))
    assert p == pytest.approx(erf(1 / math.sqrt(2)) ** 2, abs=1e-12)
    assert p == pytest.approx(0.46606494267439225, abs=1e-12)


def test_anisotropic_rectangle_example():
    p = collision_probability(RelativeState((0, 0), Covariance2(0.25, 0, 1)), box(-0.5, 0.5, -2, 2))
    ref = erf(1 / math.sqrt(2)) * erf(2 / math.sqrt(2))
    assert p == pytest.approx(ref, abs=1e-12)
    assert p == pytest.approx(0.6516269400855775, abs=1e-12)


def test_far_field_is_zero():
    assert collision_probability(RelativeState((100, 100), Covariance2(1, 0, 1)), box(-1, 1, -1, 1)) < 1e-12


@pytest.mark.parametrize("cov", [Covariance2.zero(), Covariance2(1e-13, 0, 1.0), Covariance2(1.0, 1.0, 1.0)])
def test_degenerate_covariance_raises(cov):
    with pytest.raises(DegenerateCovariance):
        collision_probability(RelativeState((0, 0), cov), box(-1, 1, -1, 1))


def test_small_covariance_limit_is_indicator():
    region = build_collision_region(Footprint(4.5, 1.8), Footprint(4.5, 1.8), 0.7)
    cov = Covariance2(1e-10, 0, 1e-10)
    for inside in [(0.0, 0.0), (2.0, 0.5), (-1.0, -1.0)]:
        assert collision_probability(RelativeState(inside, cov), region) == pytest.approx(1.0, abs=1e-9)
    for outside in [(6.0, 0.0), (0.0, 4.0), (-5.0, -3.0)]:
        assert collision_probability(RelativeState(outside, cov), region) == pytest.approx(0.0, abs=1e-9)


def test_relative_state_rejects_non_finite_mean():
    with pytest.raises(InvalidInput):
        RelativeState((math.nan, 0.0), Covariance2(1, 0, 1))


def _random_cov(rng, scale):
    a = rng.normal(size=(2, 2)) * scale
    return Covariance2.from_matrix(a @ a.T + np.eye(2) * 0.01 * scale**2)


def test_diagonal_rectangles_match_cdf_products():
    rng = np.random.default_rng(3)
    for _ in range(60):
        x0, y0 = rng.uniform(-3, 3, size=2)
        w, h = rng.uniform(0.05, 6, size=2)
        sx, sy = rng.uniform(0.05, 3, size=2)
        mx, my = rng.uniform(-4, 4, size=2)
        p = collision_probability(RelativeState((mx, my), Covariance2(sx * sx, 0, sy * sy)), box(x0, x0 + w, y0, y0 + h))
        ref = interval_mass(x0, x0 + w, mx, sx) * interval_mass(y0, y0 + h, my, sy)
        assert p == pytest.approx(ref, abs=1e-9)


def test_probability_bounds_and_rotation_invariance():
    rng = np.random.default_rng(5)
    for _ in range(50):
        poly = ConvexPolygon.hull(rng.uniform(-3, 3, size=(8, 2)))
        cov = _random_cov(rng, rng.uniform(0.1, 2))
        mean = tuple(rng.uniform(-3, 3, size=2))
        p = collision_probability(RelativeState(mean, cov), CollisionRegion(poly))
        assert 0.0 <= p <= 1.0
        angle = rng.uniform(-math.pi, math.pi)
        c, s = math.cos(angle), math.sin(angle)
        rot_mean = (c * mean[0] - s * mean[1], s * mean[0] + c * mean[1])
        rotated = collision_probability(RelativeState(rot_mean, cov.rotated(angle)), CollisionRegion(poly.transformed(angle)))
        assert rotated == pytest.approx(p, abs=1e-6)


def test_mc_oracle_examples():
    rel = RelativeState((0.3, -0.2), Covariance2(1, 0, 1))
    assert collision_probability_mc(rel, box(-10.3, 10.3, -10.3, 10.3), 10_000, 1) >= 0.9999
    sliver = RelativeState((0, 0), Covariance2(1, 0, 1))
    assert collision_probability_mc(sliver, box(-1e-9, 1e-9, -1, 1), 10_000, 1) <= 1e-3
    assert collision_probability_mc(rel, box(-1, 1, -1, 1), 10_000, 9) == collision_probability_mc(rel, box(-1, 1, -1, 1), 10_000, 9)
    with pytest.raises(InvalidInput):
        collision_probability_mc(rel, box(-1, 1, -1, 1), 0, 1)


# --- fusion properties ------------------------------------------------------


@st.composite
def psd(draw):
    vals = [draw(st.floats(-2, 2)) for _ in range(4)]
    m = np.array(vals).reshape(2, 2)
    return Covariance2.from_matrix(m @ m.T)


@given(psd(), psd(), psd())
def test_fusion_entrywise_commutative_associative_psd(a, b, c):
    ab = fuse_covariances(a, b)
    np.testing.assert_array_equal(ab.matrix, a.matrix + b.matrix)
    assert ab == fuse_covariances(b, a)
    left = fuse_covariances(fuse_covariances(a, b), c)
    right = fuse_covariances(a, fuse_covariances(b, c))
    np.testing.assert_allclose(left.matrix, right.matrix, atol=1e-12)
    assert min(ab.eigenvalues()) >= 0.0
