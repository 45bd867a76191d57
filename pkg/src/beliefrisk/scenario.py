"""Synthetic road scenarios and the JSON scenario config format.

Config layout (all lengths in metres, angles in radians, times in seconds)::

    {
      "meta":          {"name": "...", "opponent_cov": [[xx, xy], [xy, yy]]},
      "drivable_area": [[[x, y], ...], ...],          # convex CCW polygons, union
      "ego":           {"pose": [x, y, heading],
                        "route": [[x, y], ...],
                        "speed": "30 km/h",           # unit suffix m/s or km/h
                        "footprint": {"length": 4.5, "width": 1.8}},
      "opponents":     [{"weight": 0.5,
                         "footprint": {"length": 4.5, "width": 1.8},
                         "samples": [[t, x, y, heading, speed_mps], ...]}],
      "engine":        {"particle_spacing": 0.5, "horizon": 2.0, "v_ref": 13.9,
                        "p_trig": 0.1, "t_react": 1.5, "a_brake": -3.0}
    }

``meta.opponent_cov`` and ``engine`` are optional.  Unknown keys are rejected.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields, replace
from typing import Any, Sequence

import numpy as np

from .engine import EngineParams, Trajectory, TrajectoryDistribution, TrajectorySample
from .errors import InvalidInput, ParseError, ValidationError
from .geometry import ConvexPolygon, Covariance2, DrivableArea, Footprint, Point, Pose2

KMH = 1.0 / 3.6
LANE_WIDTH = 3.5
DEFAULT_FOOTPRINT = Footprint(4.5, 1.8)
DEFAULT_OPPONENT_COV = Covariance2.isotropic(0.3)
EGO_SPEED = 30.0 * KMH
SCENARIO_KINDS = ("straight_road_a", "straight_road_b", "t_section", "complex_intersection")
# opponent trajectories are sampled this long so every horizon up to it is covered
OPPONENT_DURATION = 4.0
OPPONENT_DT = 0.1
MAX_START_JITTER = 0.5


@dataclass(frozen=True)
class EgoSetup:
    nominal_pose: Pose2
    route: tuple[Point, ...]
    setpoint_speed: float
    footprint: Footprint = DEFAULT_FOOTPRINT

    def __post_init__(self):
        object.__setattr__(self, "route", tuple((float(x), float(y)) for x, y in self.route))

    def relocated(self, pose: Pose2) -> EgoSetup:
        """Same manoeuvre executed from ``pose``: the route moves rigidly with the ego."""
        dx, dy = pose.x - self.nominal_pose.x, pose.y - self.nominal_pose.y
        if dx == 0.0 and dy == 0.0 and pose.heading == self.nominal_pose.heading:
            return self
        route = tuple((x + dx, y + dy) for x, y in self.route)
        return replace(self, nominal_pose=pose, route=route)

    def issues(self) -> list[str]:
        out = []
        if len(self.route) < 2:
            out.append("ego route needs at least 2 waypoints")
        elif _distance_to_segment(self.nominal_pose.position, self.route[0], self.route[1]) > 1.0:
            out.append("ego pose is more than 1 m from the first route segment")
        if not (self.setpoint_speed > 0 and math.isfinite(self.setpoint_speed)):
            out.append(f"ego setpoint speed must be > 0, got {self.setpoint_speed}")
        return out


@dataclass(frozen=True)
class Scenario:
    name: str
    drivable_area: DrivableArea
    ego: EgoSetup
    opponents: TrajectoryDistribution
    opponent_belief_cov: Covariance2 = DEFAULT_OPPONENT_COV
    engine: EngineParams = field(default_factory=EngineParams)


def _distance_to_segment(p: Point, a: Point, b: Point) -> float:
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    denom = dx * dx + dy * dy
    u = 0.0 if denom == 0 else min(1.0, max(0.0, ((p[0] - ax) * dx + (p[1] - ay) * dy) / denom))
    return math.hypot(p[0] - ax - u * dx, p[1] - ay - u * dy)


def validate_scenario(s: Scenario) -> list[str]:
    """All invariant violations of a scenario; empty when it is valid."""
    findings = list(s.ego.issues())
    if not s.drivable_area.contains(s.ego.nominal_pose.position):
        findings.append("ego pose outside drivable area")
    findings.extend(s.opponents.issues())
    for i, (traj, _) in enumerate(s.opponents.entries):
        findings.extend(f"opponent[{i}]: {msg}" for msg in traj.issues())
        if traj.samples and not s.drivable_area.contains(traj.start.position):
            findings.append(f"opponent[{i}]: starts outside drivable area")
    findings.extend(f"engine: {msg}" for msg in s.engine.issues())
    return findings


# --------------------------------------------------------------------------
# synthetic scenario generators


def _polyline_trajectory(
    points: Sequence[Point],
    speed: float,
    footprint: Footprint = DEFAULT_FOOTPRINT,
    start_offset: float = 0.0,
    duration: float = OPPONENT_DURATION,
) -> Trajectory:
    """Constant-speed follower of a polyline, starting ``start_offset`` metres along it."""
    pts = np.asarray(points, dtype=float)
    seg = np.diff(pts, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    n = int(round(duration / OPPONENT_DT))
    rows = []
    for k in range(n + 1):
        t = round(k * OPPONENT_DT, 12)
        s = start_offset + speed * t
        i = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lengths) - 1))
        p = pts[i] + (s - cum[i]) / lengths[i] * seg[i]
        heading = math.atan2(seg[i, 1], seg[i, 0])
        rows.append(TrajectorySample(t, Pose2(float(p[0]), float(p[1]), heading), speed))
    return Trajectory(tuple(rows), footprint)


def _arc_length_at(points: Sequence[Point], target: Point) -> float:
    """Arc length of the polyline point closest to ``target``."""
    best, best_s, walked = math.inf, 0.0, 0.0
    for a, b in zip(points, points[1:]):
        dx, dy = b[0] - a[0], b[1] - a[1]
        length = math.hypot(dx, dy)
        u = min(1.0, max(0.0, ((target[0] - a[0]) * dx + (target[1] - a[1]) * dy) / (length * length)))
        d = math.hypot(a[0] + u * dx - target[0], a[1] + u * dy - target[1])
        if d < best - 1e-12:
            best, best_s = d, walked + u * length
        walked += length
    return best_s


def _timed(points: Sequence[Point], speed: float, via: Point, at: float, jitter: float) -> Trajectory:
    """Constant-speed follower that passes ``via`` at time ``at`` (before jitter)."""
    return _polyline_trajectory(points, speed, start_offset=_arc_length_at(points, via) - speed * at + jitter)


def _arc(center: Point, radius: float, start: float, end: float, n: int = 8) -> list[Point]:
    return [
        (center[0] + radius * math.cos(a), center[1] + radius * math.sin(a))
        for a in np.linspace(start, end, n + 1)
    ]


def _jitter(rng: np.random.Generator, count: int) -> list[float]:
    # seed only nudges opponent start positions along their paths
    return list(rng.uniform(-MAX_START_JITTER, MAX_START_JITTER, size=count))


# Lane centres: the ego drives east in the southern lane of a road along x.
# Cross roads run along y; their northbound lane is at x = +1.75.
Y_EGO, Y_WB = -0.5 * LANE_WIDTH, 0.5 * LANE_WIDTH
X_NB, X_SB = 0.5 * LANE_WIDTH, -0.5 * LANE_WIDTH
TURN_RADIUS = LANE_WIDTH
ROAD_END = 50.0

# Times (s) at which opponents pass their conflict points with the ego lane.
TIMING = {
    "straight_road_a": {"swerve": 1.6},
    "straight_road_b": {"lead": 1.8, "oncoming": 1.5},
    "t_section": {"turn_left": 0.7, "turn_right": 2.0},
    "complex_intersection": {"from_south": 1.6, "from_north": 0.6, "oncoming_left": 0.6, "north_left": 1.6},
}


def _main_road() -> ConvexPolygon:
    return ConvexPolygon.rectangle(-ROAD_END, ROAD_END, -LANE_WIDTH, LANE_WIDTH)


def _ego(x: float) -> EgoSetup:
    return EgoSetup(Pose2(x, Y_EGO, 0.0), ((x, Y_EGO), (ROAD_END, Y_EGO)), EGO_SPEED)


def _westbound() -> list[Point]:
    return [(ROAD_END, Y_WB), (-ROAD_END, Y_WB)]


def _west_to_south() -> list[Point]:
    """Westbound, turning left into the southbound lane of the cross road."""
    r = TURN_RADIUS
    return [(ROAD_END, Y_WB)] + _arc((X_SB + r, Y_WB - r), r, math.pi / 2, math.pi) + [(X_SB, -ROAD_END)]


def _north_to_east() -> list[Point]:
    """Northbound on the cross road, turning right into the ego lane."""
    r = TURN_RADIUS
    return [(X_NB, -ROAD_END)] + _arc((X_NB + r, Y_EGO - r), r, math.pi, math.pi / 2) + [(ROAD_END, Y_EGO)]


def _south_to_east() -> list[Point]:
    """Southbound on the cross road, turning left into the ego lane."""
    r = TURN_RADIUS
    return [(X_SB, ROAD_END)] + _arc((X_SB + r, Y_WB), r, math.pi, 1.5 * math.pi) + [(ROAD_END, Y_EGO)]


def _straight_road_a(rng) -> Scenario:
    area = DrivableArea((_main_road(),))
    timing = TIMING["straight_road_a"]
    j = _jitter(rng, 2)
    v = 30.0 * KMH
    # oncoming car keeps its lane, or swerves half into the ego lane around a parked car
    keep = _timed(_westbound(), v, (0.0, Y_WB), 1.0, j[0])
    swerve_path = [(ROAD_END, Y_WB), (6.0, Y_WB), (2.0, Y_EGO + 1.2), (-6.0, Y_EGO + 1.2), (-10.0, Y_WB), (-ROAD_END, Y_WB)]
    swerve = _timed(swerve_path, v, (0.0, Y_EGO + 1.2), timing["swerve"], j[1])
    dist = TrajectoryDistribution(((keep, 0.6), (swerve, 0.4)))
    return Scenario("straight_road_a", area, _ego(-20.0), dist)


def _straight_road_b(rng) -> Scenario:
    area = DrivableArea((_main_road(),))
    timing = TIMING["straight_road_b"]
    j = _jitter(rng, 2)
    # slower lead car ahead in the ego lane, and an oncoming car in its own lane
    lead = _timed([(-ROAD_END, Y_EGO), (ROAD_END, Y_EGO)], 15.0 * KMH, (-4.0, Y_EGO), timing["lead"], j[0])
    oncoming = _timed(_westbound(), 40.0 * KMH, (-12.0, Y_WB), timing["oncoming"], j[1])
    dist = TrajectoryDistribution(((lead, 0.4), (oncoming, 0.6)))
    return Scenario("straight_road_b", area, _ego(-20.0), dist)


def _t_section(rng) -> Scenario:
    # main road along x, stem to the south between x = -3.5 and x = 3.5
    area = DrivableArea((_main_road(), ConvexPolygon.rectangle(-LANE_WIDTH, LANE_WIDTH, -ROAD_END, -LANE_WIDTH)))
    timing = TIMING["t_section"]
    j = _jitter(rng, 3)
    v = 30.0 * KMH
    # oncoming car going straight on, or turning left into the stem across the ego lane
    straight = _timed(_westbound(), v, (0.0, Y_WB), 1.0, j[0])
    turn_left = _timed(_west_to_south(), v, (X_SB, Y_EGO), timing["turn_left"], j[1])
    # car leaving the stem and turning right into the ego lane
    turn_right = _timed(_north_to_east(), 20.0 * KMH, (X_NB + TURN_RADIUS, Y_EGO), timing["turn_right"], j[2])
    dist = TrajectoryDistribution(((straight, 0.2), (turn_left, 0.5), (turn_right, 0.3)))
    return Scenario("t_section", area, _ego(-12.0), dist)


def _complex_intersection(rng) -> Scenario:
    area = DrivableArea((_main_road(), ConvexPolygon.rectangle(-LANE_WIDTH, LANE_WIDTH, -ROAD_END, ROAD_END)))
    timing = TIMING["complex_intersection"]
    j = _jitter(rng, 5)
    v = 30.0 * KMH
    from_south = _timed([(X_NB, -ROAD_END), (X_NB, ROAD_END)], v, (X_NB, Y_EGO), timing["from_south"], j[0])
    from_north = _timed([(X_SB, ROAD_END), (X_SB, -ROAD_END)], v, (X_SB, Y_EGO), timing["from_north"], j[1])
    oncoming_left = _timed(_west_to_south(), v, (X_SB, Y_EGO), timing["oncoming_left"], j[2])
    north_left = _timed(_south_to_east(), v, (X_NB, Y_EGO), timing["north_left"], j[3])
    oncoming_straight = _timed(_westbound(), v, (0.0, Y_WB), 1.0, j[4])
    dist = TrajectoryDistribution(
        (
            (from_south, 0.25),
            (from_north, 0.2),
            (oncoming_left, 0.25),
            (north_left, 0.15),
            (oncoming_straight, 0.15),
        )
    )
    return Scenario("complex_intersection", area, _ego(-12.0), dist)


_GENERATORS = {
    "straight_road_a": _straight_road_a,
    "straight_road_b": _straight_road_b,
    "t_section": _t_section,
    "complex_intersection": _complex_intersection,
}


def generate_scenario(kind: str, seed: int = 0) -> Scenario:
    """Built-in synthetic scenario; geometry is fixed, the seed only jitters opponent starts."""
    try:
        gen = _GENERATORS[kind]
    except KeyError:
        raise InvalidInput(f"unknown scenario kind {kind!r}; expected one of {', '.join(SCENARIO_KINDS)}") from None
    return gen(np.random.default_rng(seed))


# --------------------------------------------------------------------------
# config text


_SECTIONS = {"meta", "drivable_area", "ego", "opponents", "engine"}
_REQUIRED_SECTIONS = {"meta", "drivable_area", "ego", "opponents"}
_SPEED_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(m/s|km/h)\s*$")


def parse_speed(text: Any, where: str = "speed") -> float:
    """``"30 km/h"`` or ``"8.3 m/s"`` to metres per second."""
    if not isinstance(text, str):
        raise ParseError("speed must be a string with unit suffix 'm/s' or 'km/h'", field=where)
    m = _SPEED_RE.match(text)
    if not m:
        raise ParseError(f"cannot parse speed {text!r}; expected '<number> m/s' or '<number> km/h'", field=where)
    value = float(m.group(1))
    return value * KMH if m.group(2) == "km/h" else value


def _expect(obj, kind, where: str):
    if not isinstance(obj, kind) or isinstance(obj, bool) and kind is not bool:
        name = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ParseError(f"expected {name}, got {type(obj).__name__}", field=where)
    return obj


def _number(obj, where: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ParseError(f"expected a number, got {type(obj).__name__}", field=where)
    return float(obj)


def _keys(obj: dict, allowed: set[str], required: set[str], where: str):
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ParseError(f"unknown field(s): {', '.join(unknown)}", field=where)
    missing = sorted(required - set(obj))
    if missing:
        raise ParseError(f"missing field(s): {', '.join(missing)}", field=where)


def _vector(obj, n: int, where: str) -> list[float]:
    _expect(obj, list, where)
    if len(obj) != n:
        raise ParseError(f"expected {n} numbers, got {len(obj)}", field=where)
    return [_number(v, f"{where}[{i}]") for i, v in enumerate(obj)]


def _footprint(obj, where: str, findings: list[str]) -> Footprint | None:
    _expect(obj, dict, where)
    _keys(obj, {"length", "width"}, {"length", "width"}, where)
    try:
        return Footprint(_number(obj["length"], f"{where}.length"), _number(obj["width"], f"{where}.width"))
    except InvalidInput as exc:
        findings.append(f"{where}: {exc}")
        return None


def load_scenario(config_text: str) -> Scenario:
    """Parse and validate a scenario config; see the module docstring for the schema."""
    try:
        doc = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    _expect(doc, dict, "<root>")
    _keys(doc, _SECTIONS, _REQUIRED_SECTIONS, "<root>")
    findings: list[str] = []

    meta = _expect(doc["meta"], dict, "meta")
    _keys(meta, {"name", "opponent_cov"}, {"name"}, "meta")
    name = _expect(meta["name"], str, "meta.name")
    opp_cov = DEFAULT_OPPONENT_COV
    if "opponent_cov" in meta:
        rows = _expect(meta["opponent_cov"], list, "meta.opponent_cov")
        if len(rows) != 2:
            raise ParseError("expected a 2x2 matrix", field="meta.opponent_cov")
        m = [_vector(r, 2, f"meta.opponent_cov[{i}]") for i, r in enumerate(rows)]
        try:
            opp_cov = Covariance2.from_matrix(m)
        except InvalidInput as exc:
            findings.append(f"meta.opponent_cov: {exc}")

    polys = []
    for i, poly in enumerate(_expect(doc["drivable_area"], list, "drivable_area")):
        where = f"drivable_area[{i}]"
        verts = [_vector(v, 2, f"{where}[{k}]") for k, v in enumerate(_expect(poly, list, where))]
        try:
            polys.append(ConvexPolygon(tuple(map(tuple, verts))))
        except InvalidInput as exc:
            findings.append(f"{where}: {exc}")
    if not doc["drivable_area"]:
        findings.append("drivable_area: needs at least one polygon")

    ego_doc = _expect(doc["ego"], dict, "ego")
    _keys(ego_doc, {"pose", "route", "speed", "footprint"}, {"pose", "route", "speed"}, "ego")
    px, py, ph = _vector(ego_doc["pose"], 3, "ego.pose")
    route = [tuple(_vector(w, 2, f"ego.route[{i}]")) for i, w in enumerate(_expect(ego_doc["route"], list, "ego.route"))]
    speed = parse_speed(ego_doc["speed"], "ego.speed")
    ego_fp = _footprint(ego_doc["footprint"], "ego.footprint", findings) if "footprint" in ego_doc else DEFAULT_FOOTPRINT

    entries = []
    for i, opp in enumerate(_expect(doc["opponents"], list, "opponents")):
        where = f"opponents[{i}]"
        _expect(opp, dict, where)
        _keys(opp, {"weight", "footprint", "samples"}, {"weight", "samples"}, where)
        weight = _number(opp["weight"], f"{where}.weight")
        fp = _footprint(opp["footprint"], f"{where}.footprint", findings) if "footprint" in opp else DEFAULT_FOOTPRINT
        rows = [_vector(r, 5, f"{where}.samples[{k}]") for k, r in enumerate(_expect(opp["samples"], list, f"{where}.samples"))]
        if fp is not None:
            entries.append((Trajectory.from_rows(rows, fp), weight))

    engine = EngineParams()
    if "engine" in doc:
        eng = _expect(doc["engine"], dict, "engine")
        names = {f.name for f in fields(EngineParams)}
        _keys(eng, names, set(), "engine")
        engine = EngineParams(**{k: _number(v, f"engine.{k}") for k, v in eng.items()})

    if findings or ego_fp is None:
        raise ValidationError(findings)
    scenario = Scenario(
        name=name,
        drivable_area=DrivableArea(tuple(polys)),
        ego=EgoSetup(Pose2(px, py, ph), tuple(route), speed, ego_fp),
        opponents=TrajectoryDistribution(tuple(entries)),
        opponent_belief_cov=opp_cov,
        engine=engine,
    )
    findings = validate_scenario(scenario)
    if findings:
        raise ValidationError(findings)
    return scenario


def _footprint_doc(fp: Footprint) -> dict:
    return {"length": fp.length, "width": fp.width}


def scenario_to_dict(s: Scenario) -> dict:
    cov = s.opponent_belief_cov
    return {
        "meta": {"name": s.name, "opponent_cov": [[cov.xx, cov.xy], [cov.xy, cov.yy]]},
        "drivable_area": [[list(v) for v in p.vertices] for p in s.drivable_area.polygons],
        "ego": {
            "pose": [s.ego.nominal_pose.x, s.ego.nominal_pose.y, s.ego.nominal_pose.heading],
            "route": [list(w) for w in s.ego.route],
            "speed": f"{s.ego.setpoint_speed!r} m/s",
            "footprint": _footprint_doc(s.ego.footprint),
        },
        "opponents": [
            {"weight": w, "footprint": _footprint_doc(t.footprint), "samples": [list(r) for r in t.rows()]}
            for t, w in s.opponents.entries
        ],
        "engine": {f.name: getattr(s.engine, f.name) for f in fields(EngineParams)},
    }


def dump_scenario(s: Scenario) -> str:
    """Config text that ``load_scenario`` turns back into an equal scenario."""
    return json.dumps(scenario_to_dict(s), indent=1)
