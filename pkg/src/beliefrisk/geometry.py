"""Geometric and Gaussian primitives in the 2D map frame.

Headings follow the (-pi, pi] convention, counter-clockwise positive, 0 along +x.
All types are frozen and validated on construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInput

TWO_PI = 2.0 * math.pi
PSD_TOLERANCE = 1e-12
# sin of the smallest turning angle still accepted as a strict corner
CONVEXITY_TOLERANCE = 1e-12

Point = tuple[float, float]


def normalize_heading(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    if not math.isfinite(angle):
        raise InvalidInput(f"heading must be finite, got {angle!r}")
    wrapped = math.remainder(angle, TWO_PI)
    if wrapped <= -math.pi:
        wrapped = math.pi
    return wrapped


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidInput(f"pose position must be finite, got ({self.x}, {self.y})")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "heading", normalize_heading(float(self.heading)))

    @property
    def position(self) -> Point:
        return (self.x, self.y)

    def moved_to(self, x: float, y: float) -> Pose2:
        return Pose2(x, y, self.heading)


def relative_position(ego: Pose2, opp: Pose2) -> Point:
    """Opponent position minus ego position, in the map frame."""
    return (opp.x - ego.x, opp.y - ego.y)


@dataclass(frozen=True)
class Covariance2:
    """Symmetric positive semi-definite 2x2 position covariance in m^2."""

    xx: float
    xy: float
    yy: float

    def __post_init__(self):
        vals = (self.xx, self.xy, self.yy)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInput(f"covariance entries must be finite, got {vals}")
        lo, hi = self.eigenvalues()
        if lo < -PSD_TOLERANCE:
            raise InvalidInput(f"covariance has negative eigenvalue {lo:.3e}")
        if lo < 0.0:
            # within rounding of PSD: project onto the PSD cone
            w, v = np.linalg.eigh(self.matrix)
            m = (v * np.clip(w, 0.0, None)) @ v.T
            object.__setattr__(self, "xx", float(m[0, 0]))
            object.__setattr__(self, "xy", float(0.5 * (m[0, 1] + m[1, 0])))
            object.__setattr__(self, "yy", float(m[1, 1]))

    @property
    def yx(self) -> float:
        return self.xy

    @classmethod
    def zero(cls) -> Covariance2:
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def isotropic(cls, sigma: float) -> Covariance2:
        if not math.isfinite(sigma) or sigma < 0:
            raise InvalidInput(f"sigma must be finite and >= 0, got {sigma!r}")
        return cls(sigma * sigma, 0.0, sigma * sigma)

    @classmethod
    def from_matrix(cls, m: Sequence[Sequence[float]] | np.ndarray) -> Covariance2:
        a = np.asarray(m, dtype=float)
        if a.shape != (2, 2):
            raise InvalidInput(f"covariance must be 2x2, got shape {a.shape}")
        scale = max(1.0, float(np.max(np.abs(a))))
        if abs(a[0, 1] - a[1, 0]) > PSD_TOLERANCE * scale:
            raise InvalidInput(f"covariance is not symmetric: {a[0, 1]} != {a[1, 0]}")
        return cls(float(a[0, 0]), float(a[0, 1]), float(a[1, 1]))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.xx, self.xy], [self.xy, self.yy]])

    def eigenvalues(self) -> tuple[float, float]:
        """Eigenvalues in ascending order (closed form for the 2x2 case)."""
        mean = 0.5 * (self.xx + self.yy)
        radius = math.hypot(0.5 * (self.xx - self.yy), self.xy)
        return (mean - radius, mean + radius)

    def is_zero(self) -> bool:
        return self.xx == 0.0 and self.xy == 0.0 and self.yy == 0.0

    def rotated(self, angle: float) -> Covariance2:
        r = rotation(angle)
        m = r @ self.matrix @ r.T
        return Covariance2(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1]))

    def __add__(self, other: Covariance2) -> Covariance2:
        if not isinstance(other, Covariance2):
            return NotImplemented
        return Covariance2(self.xx + other.xx, self.xy + other.xy, self.yy + other.yy)


@dataclass(frozen=True)
class GaussianBelief2:
    mean: Pose2
    position_covariance: Covariance2

    @classmethod
    def isotropic(cls, mean: Pose2, sigma: float) -> GaussianBelief2:
        return cls(mean, Covariance2.isotropic(sigma))


@dataclass(frozen=True)
class Footprint:
    """Axis-aligned rectangle in the body frame, centred on the pose."""

    length: float
    width: float

    def __post_init__(self):
        if not (math.isfinite(self.length) and math.isfinite(self.width)):
            raise InvalidInput("footprint dimensions must be finite")
        if self.length <= 0 or self.width <= 0:
            raise InvalidInput(f"footprint must have positive size, got {self.length}x{self.width}")

    def corners(self, heading: float = 0.0) -> np.ndarray:
        """Counter-clockwise corners rotated by heading, shape (4, 2)."""
        hl, hw = 0.5 * self.length, 0.5 * self.width
        pts = np.array([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]])
        if heading == 0.0:
            return pts
        return pts @ rotation(heading).T


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


@dataclass(frozen=True)
class ConvexPolygon:
    """Strictly convex polygon with counter-clockwise vertices."""

    vertices: tuple[Point, ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        n = len(verts)
        if n < 3:
            raise InvalidInput(f"polygon needs at least 3 vertices, got {n}")
        if not all(math.isfinite(c) for v in verts for c in v):
            raise InvalidInput("polygon vertices must be finite")
        if len(set(verts)) != n:
            raise InvalidInput("polygon has repeated vertices")
        turning = 0.0
        for i in range(n):
            a, b, c = verts[i - 1], verts[i], verts[(i + 1) % n]
            e1 = (b[0] - a[0], b[1] - a[1])
            e2 = (c[0] - b[0], c[1] - b[1])
            cr = e1[0] * e2[1] - e1[1] * e2[0]
            norm = math.hypot(*e1) * math.hypot(*e2)
            if cr <= CONVEXITY_TOLERANCE * norm:
                raise InvalidInput(
                    f"polygon is not strictly convex and counter-clockwise at vertex {i}"
                )
            turning += math.atan2(cr, e1[0] * e2[0] + e1[1] * e2[1])
        if abs(turning - TWO_PI) > 1e-6:
            raise InvalidInput("polygon winds more than once")

    @classmethod
    def rectangle(cls, x_min: float, x_max: float, y_min: float, y_max: float) -> ConvexPolygon:
        return cls(((x_min, y_min), (x_max, y_min), (x_max, y_max), (x_min, y_max)))

    @classmethod
    def hull(cls, points: Iterable[Sequence[float]]) -> ConvexPolygon:
        return cls(tuple(convex_hull(points)))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def centroid(self) -> Point:
        """Area centroid."""
        pts = self.array
        x, y = pts[:, 0], pts[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cr = x * yn - xn * y
        area = 0.5 * cr.sum()
        cx = ((x + xn) * cr).sum() / (6.0 * area)
        cy = ((y + yn) * cr).sum() / (6.0 * area)
        return (float(cx), float(cy))

    def area(self) -> float:
        pts = self.array
        return float(0.5 * np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1]))

    def contains(self, p: Sequence[float]) -> bool:
        """Inclusive point test: boundary points count as inside."""
        verts = self.vertices
        n = len(verts)
        for i in range(n):
            a, b = verts[i], verts[(i + 1) % n]
            edge = math.hypot(b[0] - a[0], b[1] - a[1])
            if _cross(a, b, p) < -1e-12 * edge * max(1.0, edge):
                return False
        return True

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        """Vectorised inclusive test for an (N, 2) array."""
        pts = np.asarray(pts, dtype=float)
        inside = np.ones(len(pts), dtype=bool)
        verts = self.array
        for a, b in zip(verts, np.roll(verts, -1, axis=0)):
            edge = float(np.hypot(*(b - a)))
            cr = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
            inside &= cr >= -1e-12 * edge * max(1.0, edge)
        return inside

    def transformed(self, angle: float = 0.0, offset: Sequence[float] = (0.0, 0.0)) -> ConvexPolygon:
        """Rotate about the origin, then translate."""
        pts = self.array @ rotation(angle).T + np.asarray(offset, dtype=float)
        return ConvexPolygon(tuple(map(tuple, pts)))


def convex_hull(points: Iterable[Sequence[float]]) -> list[Point]:
    """Counter-clockwise hull without collinear or duplicate points (monotone chain)."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) < 3:
        raise InvalidInput("convex hull needs at least 3 distinct points")
    scale = max(max(abs(c) for p in pts for c in p), 1e-300)
    # looser than the polygon's own convexity check so every hull is a valid polygon
    tol = 1e-11 * scale * scale

    def half(seq):
        out: list[Point] = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= tol:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    hull = lower[:-1] + upper[:-1]
    # the chain endpoints are never popped above; drop them too if collinear
    changed = True
    while changed and len(hull) > 3:
        changed = False
        for i in range(len(hull)):
            if _cross(hull[i - 1], hull[i], hull[(i + 1) % len(hull)]) <= tol:
                del hull[i]
                changed = True
                break
    if len(hull) < 3:
        raise InvalidInput("points are collinear")
    return hull


@dataclass(frozen=True)
class DrivableArea:
    """Union of convex polygons."""

    polygons: tuple[ConvexPolygon, ...]

    def __post_init__(self):
        polys = tuple(self.polygons)
        if not polys:
            raise InvalidInput("drivable area needs at least one polygon")
        for p in polys:
            if not isinstance(p, ConvexPolygon):
                raise InvalidInput(f"expected ConvexPolygon, got {type(p).__name__}")
        object.__setattr__(self, "polygons", polys)

    def contains(self, p: Sequence[float]) -> bool:
        return any(poly.contains(p) for poly in self.polygons)

    def bounds(self) -> tuple[float, float, float, float]:
        pts = np.vstack([p.array for p in self.polygons])
        return (float(pts[:, 0].min()), float(pts[:, 0].max()), float(pts[:, 1].min()), float(pts[:, 1].max()))


def point_in_drivable_area(p: Sequence[float], area: DrivableArea) -> bool:
    return area.contains(p)
