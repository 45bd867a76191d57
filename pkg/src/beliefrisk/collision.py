"""Relative-state Gaussian fusion and collision probability over a convex region.

The relative position ``opponent - ego`` of two independent Gaussian position
estimates is Gaussian with the summed covariance.  Its probability mass over the
Minkowski-sum collision region is evaluated exactly:

1. whiten with the Cholesky factor of the covariance so the density becomes a
   standard normal centred at the origin,
2. fan-triangulate the whitened polygon from the origin (signed triangles, so
   the decomposition is valid whether the origin is inside or outside),
3. integrate each triangle in polar coordinates: the radial part is
   ``1 - exp(-r^2/2)`` and the angular part reduces to Owen's T function.

This stays accurate when the region is many standard deviations wide, where
fixed-node cubature on the whitened polygon breaks down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import owens_t

from .errors import DegenerateCovariance, InvalidInput
from .geometry import ConvexPolygon, Covariance2, Footprint, Point, convex_hull

DEGENERATE_EIGENVALUE = 1e-12
# whitened distance beyond which the mass is below exp(-r^2/2) < 3e-18
_FAR_FIELD_RADIUS = 9.0


@dataclass(frozen=True)
class RelativeState:
    mean: Point
    covariance: Covariance2

    def __post_init__(self):
        mx, my = (float(v) for v in self.mean)
        if not (math.isfinite(mx) and math.isfinite(my)):
            raise InvalidInput("relative mean must be finite")
        object.__setattr__(self, "mean", (mx, my))


@dataclass(frozen=True)
class CollisionRegion:
    """Offsets ``opponent - ego`` at which the two footprints overlap."""

    polygon: ConvexPolygon

    def contains(self, offset) -> bool:
        return self.polygon.contains(offset)


def fuse_covariances(ego_cov: Covariance2, opp_cov: Covariance2) -> Covariance2:
    """Covariance of the relative position of two independent estimates."""
    return ego_cov + opp_cov


def build_collision_region(ego_fp: Footprint, opp_fp: Footprint, relative_heading: float) -> CollisionRegion:
    """Minkowski sum of the ego rectangle and the reflected, rotated opponent rectangle.

    The region is expressed in the ego body frame (ego heading 0).
    """
    ego = ego_fp.corners(0.0)
    opp = opp_fp.corners(relative_heading)
    diffs = (ego[:, None, :] - opp[None, :, :]).reshape(-1, 2)
    return CollisionRegion(ConvexPolygon(tuple(convex_hull(diffs))))


def _whitening(cov: Covariance2) -> tuple[float, float, float]:
    """Lower Cholesky factor entries (l11, l21, l22) of a PD 2x2 covariance."""
    lo, _ = cov.eigenvalues()
    if lo < DEGENERATE_EIGENVALUE:
        raise DegenerateCovariance(f"smallest covariance eigenvalue {lo:.3e} < {DEGENERATE_EIGENVALUE}")
    l11 = math.sqrt(cov.xx)
    l21 = cov.xy / l11
    l22 = math.sqrt(max(cov.yy - l21 * l21, 0.0))
    if l22 == 0.0:
        raise DegenerateCovariance("covariance is numerically singular")
    return l11, l21, l22


def _standard_normal_polygon_mass(verts: np.ndarray) -> float:
    """Standard bivariate normal mass of a polygon given as a (N, 2) vertex array."""
    a = verts
    b = np.roll(verts, -1, axis=0)
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    edge = b - a
    length = np.hypot(edge[:, 0], edge[:, 1])
    keep = (np.abs(cross) > 0.0) & (length > 0.0)
    if not keep.any():
        return 0.0
    a, b, cross, edge, length = a[keep], b[keep], cross[keep], edge[keep], length[keep]
    # distance from the origin to each edge's supporting line, and signed
    # positions of the edge endpoints measured from the foot of the perpendicular
    dist = np.abs(cross) / length
    tangent = edge / length[:, None]
    s_a = np.einsum("ij,ij->i", a, tangent)
    s_b = np.einsum("ij,ij->i", b, tangent)
    angle = np.arctan2(s_b, dist) - np.arctan2(s_a, dist)
    with np.errstate(divide="ignore", over="ignore"):
        t_b = owens_t(dist, s_b / dist)
        t_a = owens_t(dist, s_a / dist)
    mass = angle / (2.0 * math.pi) - (t_b - t_a)
    return float(np.sum(np.sign(cross) * mass))


def collision_probability(rel: RelativeState, region: CollisionRegion) -> float:
    """Gaussian probability mass of N(rel.mean, rel.covariance) inside the region.

    Raises DegenerateCovariance when the covariance has an eigenvalue below 1e-12;
    callers fall back to the geometric overlap indicator in that case.
    """
    l11, l21, l22 = _whitening(rel.covariance)
    verts = region.polygon.array - np.asarray(rel.mean)
    # solve L z = v for every vertex
    z0 = verts[:, 0] / l11
    z1 = (verts[:, 1] - l21 * z0) / l22
    white = np.column_stack([z0, z1])

    centre = white.mean(axis=0)
    reach = float(np.max(np.hypot(*(white - centre).T)))
    if float(np.hypot(*centre)) - reach > _FAR_FIELD_RADIUS:
        return 0.0
    p = _standard_normal_polygon_mass(white)
    return min(1.0, max(0.0, p))


def _sqrt_factor(cov: Covariance2) -> np.ndarray:
    """Symmetric square root; tolerates singular PSD matrices."""
    w, v = np.linalg.eigh(cov.matrix)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def collision_probability_mc(rel: RelativeState, region: CollisionRegion, n: int, seed: int) -> float:
    """Fraction of ``n`` seeded Gaussian draws that land inside the region."""
    if n < 1:
        raise InvalidInput(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    root = _sqrt_factor(rel.covariance)
    hits = 0
    chunk = 250_000
    done = 0
    while done < n:
        m = min(chunk, n - done)
        pts = rng.standard_normal((m, 2)) @ root.T + np.asarray(rel.mean)
        hits += int(np.count_nonzero(region.polygon.contains_many(pts)))
        done += m
    return hits / n
