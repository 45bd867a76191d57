import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from beliefrisk.errors import InvalidInput
from beliefrisk.geometry import (
    ConvexPolygon,
    Covariance2,
    DrivableArea,
    Footprint,
    GaussianBelief2,
    Pose2,
    convex_hull,
    normalize_heading,
    point_in_drivable_area,
    relative_position,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
angles = st.floats(-1e4, 1e4, allow_nan=False)


# --- headings ---------------------------------------------------------------


@pytest.mark.parametrize(
    "angle, expected",
    [(0.0, 0.0), (3 * math.pi, math.pi), (-math.pi, math.pi), (math.pi, math.pi), (1.5 * math.pi, -0.5 * math.pi)],
)
def test_normalize_heading_examples(angle, expected):
    assert normalize_heading(angle) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_normalize_heading_rejects_non_finite(bad):
    with pytest.raises(InvalidInput):
        normalize_heading(bad)


@given(angles)
def test_normalize_heading_range_and_period(a):
    h = normalize_heading(a)
    assert -math.pi < h <= math.pi
    k = (a - h) / (2 * math.pi)
    assert k == pytest.approx(round(k), abs=1e-9)


@given(angles)
def test_normalize_heading_idempotent(a):
    h = normalize_heading(a)
    assert normalize_heading(h) == h


def test_pose_normalizes_heading_and_rejects_nan():
    assert Pose2(1, 2, 3 * math.pi).heading == pytest.approx(math.pi)
    with pytest.raises(InvalidInput):
        Pose2(math.nan, 0.0)


# --- relative position ------------------------------------------------------


@pytest.mark.parametrize(
    "ego, opp, expected",
    [((0, 0), (3, 4), (3, 4)), ((2, 2), (2, 2), (0, 0)), ((1, -2), (-1, 2), (-2, 4))],
)
def test_relative_position_examples(ego, opp, expected):
    assert relative_position(Pose2(*ego), Pose2(*opp)) == expected


@given(finite, finite, finite, finite)
def test_relative_position_antisymmetric(ax, ay, bx, by):
    a, b = Pose2(ax, ay), Pose2(bx, by)
    dx, dy = relative_position(a, b)
    ex, ey = relative_position(b, a)
    assert (dx, dy) == (-ex, -ey)


# --- covariance -------------------------------------------------------------


def test_isotropic_covariance():
    c = Covariance2.isotropic(0.3)
    assert (c.xx, c.xy, c.yy) == (0.3 * 0.3, 0.0, 0.3 * 0.3)
    b = GaussianBelief2.isotropic(Pose2(0, 0), 2.0)
    assert b.position_covariance == Covariance2(4.0, 0.0, 4.0)


def test_covariance_rejects_negative_eigenvalue():
    with pytest.raises(InvalidInput):
        Covariance2(1.0, 2.0, 1.0)
    with pytest.raises(InvalidInput):
        Covariance2(-1e-9, 0.0, 1.0)


def test_covariance_clamps_rounding_negatives():
    c = Covariance2(-5e-13, 0.0, 1.0)
    assert min(c.eigenvalues()) >= 0.0
    assert c.xx == pytest.approx(0.0, abs=1e-12)


def test_covariance_from_matrix_requires_symmetry():
    assert Covariance2.from_matrix([[1.0, 0.2], [0.2, 2.0]]) == Covariance2(1.0, 0.2, 2.0)
    with pytest.raises(InvalidInput):
        Covariance2.from_matrix([[1.0, 0.2], [0.3, 2.0]])
    with pytest.raises(InvalidInput):
        Covariance2.from_matrix([[1.0, 0.2, 0.0], [0.2, 2.0, 0.0]])


@st.composite
def psd(draw):
    a = draw(st.floats(-3, 3))
    b = draw(st.floats(-3, 3))
    c = draw(st.floats(-3, 3))
    d = draw(st.floats(-3, 3))
    m = np.array([[a, b], [c, d]])
    return Covariance2.from_matrix(m @ m.T)


@given(psd(), st.floats(-10, 10))
def test_covariance_eigenvalues_and_rotation(cov, angle):
    lo, hi = cov.eigenvalues()
    ref = np.linalg.eigvalsh(cov.matrix)
    assert lo == pytest.approx(ref[0], abs=1e-9)
    assert hi == pytest.approx(ref[1], abs=1e-9)
    r_lo, r_hi = cov.rotated(angle).eigenvalues()
    assert r_lo == pytest.approx(lo, abs=1e-9)
    assert r_hi == pytest.approx(hi, abs=1e-9)


# --- footprints and polygons ------------------------------------------------


def test_footprint_validation_and_corners():
    with pytest.raises(InvalidInput):
        Footprint(0.0, 1.0)
    with pytest.raises(InvalidInput):
        Footprint(1.0, -1.0)
    poly = ConvexPolygon(tuple(map(tuple, Footprint(4.0, 2.0).corners(0.7))))
    assert poly.area() == pytest.approx(8.0)


@pytest.mark.parametrize(
    "verts",
    [
        ((0, 0), (1, 0)),  # too few
        ((0, 0), (0, 1), (1, 0)),  # clockwise
        ((0, 0), (1, 0), (2, 0), (1, 1)),  # collinear vertex
        ((0, 0), (2, 0), (1, 0.5), (2, 2), (0, 2)),  # reflex vertex
        ((0, 0), (1, 0), (1, 0), (0, 1)),  # repeated vertex
    ],
)
def test_polygon_rejects_invalid(verts):
    with pytest.raises(InvalidInput):
        ConvexPolygon(verts)


def test_polygon_rejects_double_winding():
    pts = [(math.cos(a), math.sin(a)) for a in np.linspace(0, 4 * math.pi, 11)[:-1]]
    with pytest.raises(InvalidInput):
        ConvexPolygon(tuple(pts))


def test_polygon_area_centroid_and_contains():
    sq = ConvexPolygon.rectangle(0, 2, 0, 4)
    assert sq.area() == 8.0
    assert sq.centroid() == (1.0, 2.0)
    assert sq.contains((1, 2))
    assert sq.contains((0, 0))  # vertex is inside
    assert sq.contains((2, 3))  # edge point is inside
    assert not sq.contains((2.001, 3))


@st.composite
def point_clouds(draw):
    n = draw(st.integers(3, 25))
    xs = draw(st.lists(st.floats(-50, 50), min_size=n, max_size=n))
    ys = draw(st.lists(st.floats(-50, 50), min_size=n, max_size=n))
    return np.column_stack([xs, ys])


@settings(max_examples=150)
@given(point_clouds())
def test_convex_hull_matches_scipy(pts):
    try:
        ref = ConvexHull(pts)
    except Exception:
        return  # degenerate cloud; covered by the collinear test below
    if ref.volume < 1e-6:
        return
    hull = ConvexPolygon.hull(pts)
    assert hull.area() == pytest.approx(ref.volume, rel=1e-9)
    ref_verts = {tuple(np.round(pts[i], 9)) for i in ref.vertices}
    ours = {tuple(np.round(v, 9)) for v in hull.vertices}
    assert ours == ref_verts


def test_convex_hull_rejects_collinear():
    with pytest.raises(InvalidInput):
        convex_hull([(0, 0), (1, 1), (2, 2), (3, 3)])


@settings(max_examples=100)
@given(point_clouds(), st.lists(st.tuples(st.floats(-60, 60), st.floats(-60, 60)), min_size=1, max_size=20))
def test_contains_many_matches_scalar(pts, probes):
    try:
        poly = ConvexPolygon.hull(pts)
    except InvalidInput:
        return
    probes = np.asarray(probes)
    assert list(poly.contains_many(probes)) == [poly.contains(p) for p in probes]


# --- drivable area ----------------------------------------------------------


def _area():
    return DrivableArea((ConvexPolygon.rectangle(-10, 10, -2, 2), ConvexPolygon(((0, 2), (3, 2), (1.5, 6)))))


def test_point_in_drivable_area_examples():
    area = _area()
    for poly in area.polygons:
        assert point_in_drivable_area(poly.centroid(), area)
        for v in poly.vertices:
            assert point_in_drivable_area(v, area)
    assert not point_in_drivable_area((1e6, 1e6), area)
    assert point_in_drivable_area((1.5, 5.0), area)  # only in the triangle


@given(st.integers(0, 3), st.floats(-12, 12), st.floats(-4, 8))
def test_point_in_area_invariant_under_vertex_rotation(k, x, y):
    area = _area()
    rotated = DrivableArea(tuple(ConvexPolygon(p.vertices[k % len(p.vertices):] + p.vertices[: k % len(p.vertices)]) for p in area.polygons))
    assert point_in_drivable_area((x, y), area) == point_in_drivable_area((x, y), rotated)


def test_drivable_area_validation_and_bounds():
    with pytest.raises(InvalidInput):
        DrivableArea(())
    assert _area().bounds() == (-10.0, 10.0, -2.0, 6.0)
