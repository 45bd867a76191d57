"""Belief-space residual risk of an automated vehicle under Gaussian localization uncertainty."""

from .belief import BeliefMcConfig, RiskStats, estimate_belief_residual_risk, exceedance_probability, sample_ego_pose
from .collision import CollisionRegion, RelativeState, build_collision_region, collision_probability, fuse_covariances
from .engine import DegradationParams, EngineParams, evaluate_risks, residual_risk, scenario_risk
from .errors import (
    BeliefRiskError,
    DegenerateCovariance,
    EstimationFailed,
    InvalidInput,
    OffDrivableArea,
    OutputError,
    ParseError,
    SamplingExhausted,
    ValidationError,
)
from .geometry import ConvexPolygon, Covariance2, DrivableArea, Footprint, GaussianBelief2, Pose2
from .scenario import Scenario, dump_scenario, generate_scenario, load_scenario, validate_scenario

__version__ = "0.1.0"
