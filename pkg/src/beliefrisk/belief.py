"""Monte-Carlo expectation of residual risk over a Gaussian ego-pose belief.

Each sample index owns an independent random stream keyed by
``(master_seed, sample_index, attempt)``, so results do not depend on the order
or the process in which samples are evaluated.  Draws that land off the
drivable area are rejected and redrawn from the next attempt's stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .engine import DegradationParams, EngineParams, residual_risk
from .errors import EstimationFailed, InvalidInput, SamplingExhausted
from .geometry import Covariance2, DrivableArea, GaussianBelief2, Pose2

MapFn = Callable[[Callable, Iterable], Iterable]


@dataclass(frozen=True)
class BeliefMcConfig:
    n_samples: int = 30
    max_attempts_per_sample: int = 1000
    master_seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise InvalidInput(f"n_samples must be >= 1, got {self.n_samples}")
        if self.max_attempts_per_sample < 1:
            raise InvalidInput(f"max_attempts_per_sample must be >= 1, got {self.max_attempts_per_sample}")
        if self.master_seed < 0:
            raise InvalidInput(f"master_seed must be >= 0, got {self.master_seed}")


@dataclass(frozen=True)
class RiskSample:
    pose: Pose2
    residual: float


@dataclass(frozen=True)
class RiskStats:
    """Sample set of residual risks; ``std_dev`` uses the population convention."""

    samples: tuple[RiskSample, ...]
    n_rejected: int = 0
    n_exhausted: int = 0

    @property
    def n_used(self) -> int:
        return len(self.samples)

    @property
    def residuals(self) -> list[float]:
        return [s.residual for s in self.samples]

    @property
    def mean(self) -> float:
        return math.fsum(self.residuals) / self.n_used

    @property
    def std_dev(self) -> float:
        m = self.mean
        return math.sqrt(math.fsum((r - m) ** 2 for r in self.residuals) / self.n_used)


def stream_rng(master_seed: int, sample_index: int, attempt: int) -> np.random.Generator:
    """Counter-based generator for one (sample, attempt) pair."""
    key = np.random.SeedSequence([master_seed, sample_index, attempt])
    return np.random.Generator(np.random.Philox(key))


def _square_root(cov: Covariance2) -> np.ndarray:
    w, v = np.linalg.eigh(cov.matrix)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _draw(belief: GaussianBelief2, area: DrivableArea, sample_index: int, config: BeliefMcConfig) -> tuple[Pose2, int]:
    """Rejection-sample a drivable pose; returns it with the number of rejected draws."""
    mean = belief.mean
    cov = belief.position_covariance
    root = None if cov.is_zero() else _square_root(cov)
    for attempt in range(config.max_attempts_per_sample):
        if root is None:
            x, y = mean.x, mean.y
        else:
            z = stream_rng(config.master_seed, sample_index, attempt).standard_normal(2)
            dx, dy = root @ z
            x, y = mean.x + float(dx), mean.y + float(dy)
        if area.contains((x, y)):
            return Pose2(x, y, mean.heading), attempt
    raise SamplingExhausted(sample_index, config.max_attempts_per_sample)


def sample_ego_pose(belief: GaussianBelief2, area: DrivableArea, sample_index: int, config: BeliefMcConfig) -> Pose2:
    """Drivable ego pose drawn from the belief; heading is the belief mean heading."""
    return _draw(belief, area, sample_index, config)[0]


class _SampleTask:
    """Picklable per-index job so samples can be farmed out to worker processes."""

    def __init__(self, evaluate, belief, area, config):
        self.evaluate = evaluate
        self.belief = belief
        self.area = area
        self.config = config

    def __call__(self, index: int):
        try:
            pose, rejected = _draw(self.belief, self.area, index, self.config)
        except SamplingExhausted:
            return None, self.config.max_attempts_per_sample
        return RiskSample(pose, float(self.evaluate(pose))), rejected


def estimate_expectation(
    evaluate: Callable[[Pose2], float],
    belief: GaussianBelief2,
    area: DrivableArea,
    config: BeliefMcConfig,
    map_fn: MapFn = map,
) -> RiskStats:
    """Sample-based estimate of E[evaluate(pose)] under the drivable-truncated belief."""
    task = _SampleTask(evaluate, belief, area, config)
    samples, rejected, exhausted = [], 0, 0
    for sample, n_rej in map_fn(task, range(config.n_samples)):
        rejected += n_rej
        if sample is None:
            exhausted += 1
        else:
            samples.append(sample)
    if not samples:
        raise EstimationFailed(f"all {config.n_samples} samples exhausted their {config.max_attempts_per_sample} attempts")
    return RiskStats(tuple(samples), rejected, exhausted)


class ResidualAt:
    """``pose -> residual_risk`` with everything except the pose held fixed."""

    def __init__(self, scenario, degradation: DegradationParams, ego_cov: Covariance2, params: EngineParams):
        self.scenario = scenario
        self.degradation = degradation
        self.ego_cov = ego_cov
        self.params = params

    def __call__(self, pose: Pose2) -> float:
        return residual_risk(self.scenario, self.degradation, pose, self.ego_cov, self.params)


def estimate_belief_residual_risk(
    scenario,
    degradation: DegradationParams,
    belief: GaussianBelief2,
    config: BeliefMcConfig,
    params: EngineParams,
    map_fn: MapFn = map,
) -> RiskStats:
    """Expected residual risk over the ego belief.

    With a zero covariance this is one deterministic evaluation at the mean.
    Otherwise each drawn pose is treated as the true ego pose while the belief
    covariance still widens the relative-position covariance.
    """
    evaluate = ResidualAt(scenario, degradation, belief.position_covariance, params)
    if belief.position_covariance.is_zero():
        return RiskStats((RiskSample(belief.mean, evaluate(belief.mean)),))
    return estimate_expectation(evaluate, belief, scenario.drivable_area, config, map_fn)


def exceedance_probability(stats: RiskStats, threshold: float) -> float:
    """Fraction of sampled residuals strictly above ``threshold``."""
    if not stats.samples:
        raise InvalidInput("exceedance needs at least one sample")
    return sum(1 for r in stats.residuals if r > threshold) / stats.n_used
