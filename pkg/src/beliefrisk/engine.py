"""Particle-based risk of ego plans and the residual risk between two of them.

Trajectories are discretised into particle trains at fixed arc-length spacing.
For every ego particle the opponent particle nearest in time is paired with it;
each pair contributes ``P_coll * w`` where ``w`` is an impact factor derived from
the relative speed, and per-step contributions combine as ``1 - prod(1 - p_k)``.

Risk of an ego trajectory against a trajectory distribution is the weighted sum
of severities.  Residual risk compares the ego's reactive plan with perfect
perception (``T_1``) against the plan made with latency and opponent errors
(``T_hat_1``), both scored against the true opponents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .collision import (
    CollisionRegion,
    RelativeState,
    build_collision_region,
    collision_probability,
    fuse_covariances,
)
from .errors import DegenerateCovariance, InvalidInput, OffDrivableArea
from .geometry import Covariance2, Footprint, Point, Pose2

if TYPE_CHECKING:
    from .scenario import EgoSetup, Scenario

# time step used when sampling planned ego trajectories
PLAN_DT = 0.1
_EPS = 1e-9
_FAR_FIELD_SIGMAS = 9.0


@dataclass(frozen=True)
class EngineParams:
    particle_spacing: float = 0.5
    horizon: float = 2.0
    v_ref: float = 13.9
    p_trig: float = 0.1
    t_react: float = 1.5
    a_brake: float = -3.0

    def issues(self) -> list[str]:
        out = []
        if not self.particle_spacing > 0:
            out.append(f"particle_spacing must be > 0, got {self.particle_spacing}")
        if not self.horizon > 0:
            out.append(f"horizon must be > 0, got {self.horizon}")
        if not self.v_ref > 0:
            out.append(f"v_ref must be > 0, got {self.v_ref}")
        if not 0 < self.p_trig < 1:
            out.append(f"p_trig must be in (0, 1), got {self.p_trig}")
        if not self.t_react >= 0:
            out.append(f"t_react must be >= 0, got {self.t_react}")
        if not self.a_brake < 0:
            out.append(f"a_brake must be < 0, got {self.a_brake}")
        return out


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    pose: Pose2
    speed: float


@dataclass(frozen=True)
class Trajectory:
    samples: tuple[TrajectorySample, ...]
    footprint: Footprint

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], footprint: Footprint) -> Trajectory:
        """Build from ``(t, x, y, heading, speed)`` rows."""
        return cls(tuple(TrajectorySample(float(t), Pose2(x, y, h), float(v)) for t, x, y, h, v in rows), footprint)

    def rows(self) -> list[tuple[float, float, float, float, float]]:
        return [(s.t, s.pose.x, s.pose.y, s.pose.heading, s.speed) for s in self.samples]

    @property
    def start(self) -> Pose2:
        return self.samples[0].pose

    def issues(self) -> list[str]:
        """Invariant violations, one message per problem."""
        out = []
        if not self.samples:
            return ["empty trajectory"]
        if self.samples[0].t != 0.0:
            out.append(f"trajectory must start at t=0, starts at {self.samples[0].t}")
        for a, b in zip(self.samples, self.samples[1:]):
            if not b.t > a.t:
                out.append(f"non-increasing time at t={b.t}")
                break
        if any(not (s.speed >= 0 and math.isfinite(s.speed)) for s in self.samples):
            out.append("negative or non-finite speed")
        for a, b in zip(self.samples, self.samples[1:]):
            dt = b.t - a.t
            mean_speed = 0.5 * (a.speed + b.speed)
            if dt <= 0 or a.speed == 0.0 or b.speed == 0.0:
                continue
            rate = math.hypot(b.pose.x - a.pose.x, b.pose.y - a.pose.y) / dt
            if not 0.9 * mean_speed <= rate <= 1.1 * mean_speed:
                out.append(f"positions inconsistent with speeds between t={a.t} and t={b.t}")
                break
        return out


@dataclass(frozen=True)
class TrajectoryDistribution:
    entries: tuple[tuple[Trajectory, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((t, float(w)) for t, w in self.entries))

    @property
    def weights(self) -> list[float]:
        return [w for _, w in self.entries]

    def issues(self) -> list[str]:
        if not self.entries:
            return ["opponent distribution is empty"]
        out = []
        if any(not w > 0 for w in self.weights):
            out.append("opponent weights must be > 0")
        total = math.fsum(self.weights)
        if abs(total - 1.0) > 1e-9:
            out.append(f"weights sum to {total:.9g}")
        return out

    def map(self, fn) -> TrajectoryDistribution:
        return TrajectoryDistribution(tuple((fn(t), w) for t, w in self.entries))


@dataclass(frozen=True)
class DegradationParams:
    latency_theta: float = 0.0
    pos_error_eps_x: float = 0.0
    vel_error_eps_v: float = 0.0

    def __post_init__(self):
        vals = (self.latency_theta, self.pos_error_eps_x, self.vel_error_eps_v)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInput("degradation parameters must be finite")
        if self.latency_theta < 0:
            raise InvalidInput(f"latency must be >= 0, got {self.latency_theta}")

    @property
    def perturbs_opponents(self) -> bool:
        return self.pos_error_eps_x != 0.0 or self.vel_error_eps_v != 0.0


@dataclass(frozen=True)
class Particle:
    t: float
    pose: Pose2
    speed: float

    @property
    def velocity(self) -> Point:
        return (self.speed * math.cos(self.pose.heading), self.speed * math.sin(self.pose.heading))


@dataclass(frozen=True)
class ParticleTrain:
    particles: tuple[Particle, ...]
    footprint: Footprint
    times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "particles", tuple(self.particles))
        object.__setattr__(self, "times", np.array([p.t for p in self.particles]))

    def __len__(self) -> int:
        return len(self.particles)

    def match_tolerances(self) -> np.ndarray:
        """Half of each particle's local inter-particle interval."""
        t = self.times
        n = len(t)
        if n == 1:
            return np.zeros(1)
        interval = np.empty(n)
        interval[0] = t[1] - t[0]
        interval[-1] = t[-1] - t[-2]
        if n > 2:
            interval[1:-1] = 0.5 * (t[2:] - t[:-2])
        return 0.5 * interval


def propagate_particles(traj: Trajectory, spacing: float, horizon: float) -> ParticleTrain:
    """Place particles every ``spacing`` metres of arc length, up to ``horizon`` seconds.

    Timing comes from the sample speeds, with the squared speed varying linearly
    in arc length on each segment (constant acceleration).  Zero-length segments
    at rest advance the clock by their timestamps; a positive-length segment with
    zero speed at both ends cannot be traversed and ends the train.
    """
    if spacing <= 0 or horizon <= 0:
        raise InvalidInput("spacing and horizon must be > 0")
    if not traj.samples:
        raise InvalidInput("empty trajectory")
    samples = traj.samples
    first = samples[0]
    particles = [Particle(0.0, first.pose, first.speed)]
    clock = 0.0
    walked = 0.0
    k = 1
    for a, b in zip(samples, samples[1:]):
        dx, dy = b.pose.x - a.pose.x, b.pose.y - a.pose.y
        length = math.hypot(dx, dy)
        va, vb = a.speed, b.speed
        if length == 0.0:
            if va + vb == 0.0:
                clock += b.t - a.t
            if clock > horizon + _EPS:
                break
            continue
        if va + vb == 0.0:
            break
        heading = math.atan2(dy, dx)
        accel = (vb * vb - va * va) / (2.0 * length)
        stop = False
        while True:
            target = k * spacing - walked
            if target > length + _EPS:
                break
            s = min(target, length)
            v = math.sqrt(max(va * va + 2.0 * accel * s, 0.0))
            t = clock + 2.0 * s / (va + v) if va + v > 0 else math.inf
            if t > horizon + _EPS:
                stop = True
                break
            frac = s / length
            particles.append(Particle(t, Pose2(a.pose.x + frac * dx, a.pose.y + frac * dy, heading), v))
            k += 1
        if stop:
            break
        walked += length
        clock += 2.0 * length / (va + vb)
        if clock > horizon + _EPS:
            break
    return ParticleTrain(tuple(particles), traj.footprint)


def _tangents(traj: Trajectory) -> list[Point]:
    pts = [(s.pose.x, s.pose.y) for s in traj.samples]
    n = len(pts)
    out = []
    for i, s in enumerate(traj.samples):
        a = pts[max(i - 1, 0)]
        b = pts[min(i + 1, n - 1)]
        dx, dy = b[0] - a[0], b[1] - a[1]
        norm = math.hypot(dx, dy)
        if norm == 0.0:
            out.append((math.cos(s.pose.heading), math.sin(s.pose.heading)))
        else:
            out.append((dx / norm, dy / norm))
    return out


def perturb_opponent(traj: Trajectory, eps_x: float, eps_v: float) -> Trajectory:
    """Shift positions by ``eps_x`` along the path tangent and speeds by ``eps_v`` (floored at 0)."""
    if eps_x == 0.0 and eps_v == 0.0:
        return traj
    out = []
    for s, (tx, ty) in zip(traj.samples, _tangents(traj)):
        pose = Pose2(s.pose.x + eps_x * tx, s.pose.y + eps_x * ty, s.pose.heading)
        out.append(TrajectorySample(s.t, pose, max(0.0, s.speed + eps_v)))
    return Trajectory(tuple(out), traj.footprint)


# --------------------------------------------------------------------------
# per-step collision evaluation


@lru_cache(maxsize=8192)
def _region(ego_fp: Footprint, opp_fp: Footprint, relative_heading: float) -> CollisionRegion:
    return build_collision_region(ego_fp, opp_fp, relative_heading)


def _circumradius(fp: Footprint) -> float:
    return 0.5 * math.hypot(fp.length, fp.width)


def step_collision_probability(
    ego: Particle, opp: Particle, ego_fp: Footprint, opp_fp: Footprint, rel_cov: Covariance2
) -> float:
    """Collision probability of one matched particle pair under the fused covariance."""
    dx, dy = opp.pose.x - ego.pose.x, opp.pose.y - ego.pose.y
    lam = rel_cov.eigenvalues()[1]
    gap = math.hypot(dx, dy) - _circumradius(ego_fp) - _circumradius(opp_fp)
    if gap > 0 and gap > _FAR_FIELD_SIGMAS * math.sqrt(lam):
        return 0.0
    # express everything in the ego body frame, where the region is built
    h = ego.pose.heading
    c, s = math.cos(h), math.sin(h)
    mean = (c * dx + s * dy, -s * dx + c * dy)
    region = _region(ego_fp, opp_fp, opp.pose.heading - h)
    try:
        return collision_probability(RelativeState(mean, rel_cov.rotated(-h)), region)
    except DegenerateCovariance:
        return 1.0 if region.contains(mean) else 0.0


def match_particles(ego_train: ParticleTrain, opp_train: ParticleTrain) -> list[tuple[int, int]]:
    """Nearest-time pairing; a pair counts only within half the local ego interval."""
    if not len(ego_train) or not len(opp_train):
        return []
    et, ot = ego_train.times, opp_train.times
    idx = np.clip(np.searchsorted(ot, et), 1, len(ot) - 1) if len(ot) > 1 else np.zeros(len(et), dtype=int)
    if len(ot) > 1:
        left = idx - 1
        use_left = np.abs(et - ot[left]) <= np.abs(ot[idx] - et)
        idx = np.where(use_left, left, idx)
    ok = np.abs(ot[idx] - et) <= ego_train.match_tolerances() + 1e-12
    return [(int(i), int(j)) for i, j in zip(np.nonzero(ok)[0], idx[ok])]


def impact_factor(ego: Particle, opp: Particle, v_ref: float) -> float:
    evx, evy = ego.velocity
    ovx, ovy = opp.velocity
    dv = math.hypot(ovx - evx, ovy - evy)
    return min(1.0, (dv / v_ref) ** 2)


def combine_steps(step_risks: Sequence[float]) -> float:
    """``1 - prod(1 - p_k)``, clamped to [0, 1]."""
    survive = 1.0
    for p in step_risks:
        survive *= 1.0 - p
    return min(1.0, max(0.0, 1.0 - survive))


def severity(
    ego_train: ParticleTrain,
    opp_train: ParticleTrain,
    ego_cov: Covariance2,
    opp_cov: Covariance2,
    v_ref: float = EngineParams.v_ref,
) -> float:
    rel_cov = fuse_covariances(ego_cov, opp_cov)
    steps = []
    for i, j in match_particles(ego_train, opp_train):
        e, o = ego_train.particles[i], opp_train.particles[j]
        w = impact_factor(e, o, v_ref)
        if w == 0.0:
            continue
        p = step_collision_probability(e, o, ego_train.footprint, opp_train.footprint, rel_cov)
        steps.append(p * w)
    return combine_steps(steps)


def scenario_risk(
    ego_traj: Trajectory,
    dist: TrajectoryDistribution,
    ego_cov: Covariance2,
    opp_cov: Covariance2,
    params: EngineParams,
) -> float:
    """Weighted sum of severities over the opponent trajectory distribution."""
    ego_train = propagate_particles(ego_traj, params.particle_spacing, params.horizon)
    total = 0.0
    for traj, weight in dist.entries:
        opp_train = propagate_particles(traj, params.particle_spacing, params.horizon)
        total += weight * severity(ego_train, opp_train, ego_cov, opp_cov, params.v_ref)
    return min(1.0, max(0.0, total))


# --------------------------------------------------------------------------
# reactive ego planner


class _Path:
    """Arc-length parameterised polyline."""

    def __init__(self, points: Sequence[Point]):
        pts = [points[0]]
        for p in points[1:]:
            if p != pts[-1]:
                pts.append(p)
        self.points = np.asarray(pts, dtype=float)
        seg = np.diff(self.points, axis=0)
        self.lengths = np.hypot(seg[:, 0], seg[:, 1])
        self.cum = np.concatenate([[0.0], np.cumsum(self.lengths)])
        self.headings = np.arctan2(seg[:, 1], seg[:, 0])

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def at(self, s: float) -> tuple[float, float, float]:
        i = int(np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, len(self.lengths) - 1))
        u = (s - self.cum[i]) / self.lengths[i]
        p = self.points[i] + u * (self.points[i + 1] - self.points[i])
        return float(p[0]), float(p[1]), float(self.headings[i])


def ego_path(ego: EgoSetup, min_length: float) -> _Path:
    """Route polyline passing through the ego pose, extended to ``min_length``.

    The route is translated by the pose's offset from its first segment, so a
    displaced ego drives the same route shape from where it actually is.
    """
    route = np.asarray(ego.route, dtype=float)
    a, b = route[0], route[1]
    d = b - a
    u = float(np.clip(np.dot(np.array(ego.nominal_pose.position) - a, d) / np.dot(d, d), 0.0, 1.0))
    offset = np.array(ego.nominal_pose.position) - (a + u * d)
    pts = [tuple(ego.nominal_pose.position)] + [tuple(p + offset) for p in route[1:]]
    path = _Path(pts)
    if path.length < min_length:
        tail = path.points[-1] - path.points[-2]
        tail = tail / np.hypot(*tail)
        path = _Path(list(map(tuple, path.points)) + [tuple(path.points[-1] + tail * (min_length - path.length + 1.0))])
    return path


def braking_onset(t_star: float, latency_theta: float, t_react: float) -> float:
    return max(0.0, t_star - t_react) + latency_theta


def _speed_profile(v0: float, onset: float | None, a_brake: float, t: float) -> tuple[float, float]:
    """Distance travelled and speed at time t for constant speed then constant braking."""
    if onset is None or t <= onset:
        return v0 * t, v0
    t_stop = onset + v0 / -a_brake
    tau = min(t, t_stop) - onset
    return v0 * onset + v0 * tau + 0.5 * a_brake * tau * tau, max(0.0, v0 + a_brake * tau)


def ego_trajectory(ego: EgoSetup, params: EngineParams, onset: float | None = None) -> Trajectory:
    """Constant setpoint speed along the route, braking from ``onset`` if given."""
    v0 = ego.setpoint_speed
    end = params.horizon
    times = {round(k * PLAN_DT, 12) for k in range(int(math.floor(end / PLAN_DT + 1e-9)) + 1)}
    times.add(end)
    if onset is not None:
        t_stop = onset + v0 / -params.a_brake
        times.update(t for t in (onset, t_stop) if 0 < t < end)
    path = ego_path(ego, v0 * end + 1.0)
    rows = []
    for t in sorted(times):
        s, v = _speed_profile(v0, onset, params.a_brake, t)
        x, y, h = path.at(s)
        rows.append(TrajectorySample(t, Pose2(x, y, h), v))
    return Trajectory(tuple(rows), ego.footprint)


def detect_conflict(
    ego: EgoSetup,
    perceived: TrajectoryDistribution,
    params: EngineParams,
    rel_cov: Covariance2,
) -> float | None:
    """First lookahead time at which the weighted collision probability of the
    constant-speed plan exceeds ``p_trig``; None if it never does."""
    ego_train = propagate_particles(ego_trajectory(ego, params), params.particle_spacing, params.horizon)
    per_step = np.zeros(len(ego_train))
    for traj, weight in perceived.entries:
        opp_train = propagate_particles(traj, params.particle_spacing, params.horizon)
        for i, j in match_particles(ego_train, opp_train):
            per_step[i] += weight * step_collision_probability(
                ego_train.particles[i], opp_train.particles[j], ego_train.footprint, opp_train.footprint, rel_cov
            )
    hits = np.nonzero(per_step > params.p_trig)[0]
    if len(hits) == 0:
        return None
    return float(ego_train.times[hits[0]])


def plan_ego_response(
    ego: EgoSetup,
    perceived: TrajectoryDistribution,
    latency_theta: float,
    params: EngineParams,
    rel_cov: Covariance2,
) -> Trajectory:
    """Reactive plan: keep the setpoint speed, brake if a conflict is predicted."""
    t_star = detect_conflict(ego, perceived, params, rel_cov)
    if t_star is None:
        return ego_trajectory(ego, params)
    return ego_trajectory(ego, params, braking_onset(t_star, latency_theta, params.t_react))


# --------------------------------------------------------------------------
# residual risk


@dataclass(frozen=True)
class RiskPair:
    baseline: float
    degraded: float

    @property
    def residual(self) -> float:
        return max(0.0, self.degraded - self.baseline)


def evaluate_risks(
    scenario: Scenario,
    degradation: DegradationParams,
    ego_pose: Pose2,
    ego_cov: Covariance2,
    params: EngineParams,
) -> RiskPair:
    """Baseline risk of ``T_1`` and degraded risk of ``T_hat_1`` for an ego pose."""
    if not scenario.drivable_area.contains(ego_pose.position):
        raise OffDrivableArea(f"ego pose ({ego_pose.x:.3f}, {ego_pose.y:.3f}) is off the drivable area")
    ego = scenario.ego.relocated(ego_pose)
    truth = scenario.opponents
    rel_cov = fuse_covariances(ego_cov, scenario.opponent_belief_cov)

    t_star = detect_conflict(ego, truth, params, rel_cov)
    if degradation.perturbs_opponents:
        eps_x, eps_v = degradation.pos_error_eps_x, degradation.vel_error_eps_v
        perceived = truth.map(lambda t: perturb_opponent(t, eps_x, eps_v))
        t_star_hat = detect_conflict(ego, perceived, params, rel_cov)
    else:
        t_star_hat = t_star

    def plan(t, latency):
        return ego_trajectory(ego, params, None if t is None else braking_onset(t, latency, params.t_react))

    nominal = plan(t_star, 0.0)
    baseline = scenario_risk(nominal, truth, ego_cov, scenario.opponent_belief_cov, params)
    if t_star_hat == t_star and degradation.latency_theta == 0.0:
        return RiskPair(baseline, baseline)
    degraded_traj = plan(t_star_hat, degradation.latency_theta)
    degraded = scenario_risk(degraded_traj, truth, ego_cov, scenario.opponent_belief_cov, params)
    return RiskPair(baseline, degraded)


def residual_risk(
    scenario: Scenario,
    degradation: DegradationParams,
    ego_pose: Pose2,
    ego_cov: Covariance2,
    params: EngineParams,
) -> float:
    """``max(0, R_hat - R)`` at one (true) ego pose."""
    return evaluate_risks(scenario, degradation, ego_pose, ego_cov, params).residual


__all__ = [
    "DegradationParams",
    "EngineParams",
    "Particle",
    "ParticleTrain",
    "RiskPair",
    "Trajectory",
    "TrajectoryDistribution",
    "TrajectorySample",
    "braking_onset",
    "combine_steps",
    "detect_conflict",
    "ego_trajectory",
    "evaluate_risks",
    "impact_factor",
    "match_particles",
    "perturb_opponent",
    "plan_ego_response",
    "propagate_particles",
    "residual_risk",
    "scenario_risk",
    "severity",
    "step_collision_probability",
]
