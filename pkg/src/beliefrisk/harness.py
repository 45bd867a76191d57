"""Experiment drivers for parameter sweeps and spatial residual-risk fields.

Every table row type knows its CSV header and how to format itself, so
``write_csv`` stays generic.  Floats are written with 9 significant digits,
which makes the files byte-stable across runs and worker counts.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import partial
from typing import Iterator, Sequence

from .belief import BeliefMcConfig, MapFn, estimate_belief_residual_risk, exceedance_probability
from .engine import DegradationParams, EngineParams, residual_risk
from .errors import EstimationFailed, InvalidInput, OutputError
from .geometry import Covariance2, GaussianBelief2, Pose2
from .scenario import Scenario

DEFAULT_SIGMA_LEVELS = (0.0, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0)
DEFAULT_LATENCY_LEVELS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
DEFAULT_LATENCY = 0.3
DEFAULT_R_THR = 0.5


def _check_levels(levels: Sequence[float], name: str, strictly_increasing: bool) -> tuple[float, ...]:
    levels = tuple(float(v) for v in levels)
    if not levels:
        raise InvalidInput(f"{name} must not be empty")
    if any(not (math.isfinite(v) and v >= 0) for v in levels):
        raise InvalidInput(f"{name} must be finite and >= 0")
    if strictly_increasing and any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvalidInput(f"{name} must be strictly increasing")
    return levels


@dataclass(frozen=True)
class SweepSpec:
    sigma_levels: tuple[float, ...] = DEFAULT_SIGMA_LEVELS
    latency_levels: tuple[float, ...] = DEFAULT_LATENCY_LEVELS
    fixed_latency: float = DEFAULT_LATENCY
    r_thr: float = DEFAULT_R_THR
    n_samples: int = 30
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sigma_levels", _check_levels(self.sigma_levels, "sigma_levels", True))
        object.__setattr__(self, "latency_levels", _check_levels(self.latency_levels, "latency_levels", False))
        if not (math.isfinite(self.fixed_latency) and self.fixed_latency >= 0):
            raise InvalidInput(f"fixed_latency must be >= 0, got {self.fixed_latency}")
        if not math.isfinite(self.r_thr):
            raise InvalidInput("r_thr must be finite")
        BeliefMcConfig(self.n_samples, master_seed=self.master_seed)


@dataclass(frozen=True)
class FieldSpec:
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    cell_size: float = 1.0
    fixed_latency: float = DEFAULT_LATENCY

    def __post_init__(self):
        for name in ("x_range", "y_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
                raise InvalidInput(f"{name} must satisfy min < max, got ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))
        if not (math.isfinite(self.cell_size) and self.cell_size > 0):
            raise InvalidInput(f"cell_size must be > 0, got {self.cell_size}")
        if not (math.isfinite(self.fixed_latency) and self.fixed_latency >= 0):
            raise InvalidInput(f"fixed_latency must be >= 0, got {self.fixed_latency}")

    @classmethod
    def around(cls, pose: Pose2, half_x: float = 20.0, half_y: float = 10.0, cell_size: float = 1.0, fixed_latency: float = DEFAULT_LATENCY) -> FieldSpec:
        """Window whose cell centres include ``pose`` itself."""
        if not (math.isfinite(cell_size) and cell_size > 0):
            raise InvalidInput(f"cell_size must be > 0, got {cell_size}")
        nx = math.floor(half_x / cell_size)
        ny = math.floor(half_y / cell_size)
        return cls(
            (pose.x - (nx + 0.5) * cell_size, pose.x + (nx + 0.5) * cell_size),
            (pose.y - (ny + 0.5) * cell_size, pose.y + (ny + 0.5) * cell_size),
            cell_size,
            fixed_latency,
        )

    def centres(self) -> list[tuple[float, float]]:
        """Cell centres, row-major with y outermost; partial cells at the far edge are dropped."""
        nx = max(1, int(math.floor((self.x_range[1] - self.x_range[0]) / self.cell_size + 1e-9)))
        ny = max(1, int(math.floor((self.y_range[1] - self.y_range[0]) / self.cell_size + 1e-9)))
        xs = [self.x_range[0] + (i + 0.5) * self.cell_size for i in range(nx)]
        ys = [self.y_range[0] + (k + 0.5) * self.cell_size for k in range(ny)]
        return [(x, y) for y in ys for x in xs]


# --------------------------------------------------------------------------
# table rows


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return f"{v:.9g}"


@dataclass(frozen=True)
class SigmaRow:
    sigma: float
    mean: float
    std: float
    exceedance: float
    n_used: int
    n_rejected: int

    CSV_HEADER = ("sigma_m", "mean_rr", "std_rr", "exceedance", "n_used", "n_rejected")

    @property
    def failed(self) -> bool:
        return math.isnan(self.mean)

    def csv_fields(self) -> tuple:
        return (self.sigma, self.mean, self.std, self.exceedance, self.n_used, self.n_rejected)


@dataclass(frozen=True)
class LatencyRow:
    theta: float
    residual: float

    CSV_HEADER = ("theta_s", "residual")

    def csv_fields(self) -> tuple:
        return (self.theta, self.residual)


@dataclass(frozen=True)
class FieldCell:
    x: float
    y: float
    residual: float | None

    CSV_HEADER = ("x_m", "y_m", "residual", "off_map")

    @property
    def off_map(self) -> bool:
        return self.residual is None

    def csv_fields(self) -> tuple:
        return (self.x, self.y, self.residual, self.off_map)


@dataclass(frozen=True)
class EvalRow:
    sigma: float
    theta: float
    eps_x: float
    eps_v: float
    baseline_risk: float
    degraded_risk: float
    residual: float

    CSV_HEADER = ("sigma_m", "theta_s", "eps_x_m", "eps_v_mps", "baseline_risk", "degraded_risk", "residual")

    def csv_fields(self) -> tuple:
        return (self.sigma, self.theta, self.eps_x, self.eps_v, self.baseline_risk, self.degraded_risk, self.residual)


# --------------------------------------------------------------------------
# worker pool


@contextmanager
def worker_map(workers: int = 1) -> Iterator[MapFn]:
    """Order-preserving map over a bounded process pool (plain ``map`` for one worker)."""
    if workers < 1:
        raise InvalidInput(f"workers must be >= 1, got {workers}")
    if workers == 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield partial(pool.map, chunksize=1)


# --------------------------------------------------------------------------
# experiments


def run_sigma_sweep(scenario: Scenario, spec: SweepSpec, params: EngineParams, map_fn: MapFn = map) -> list[SigmaRow]:
    """One row per sigma level at the nominal pose with latency ``spec.fixed_latency``.

    All levels share the master seed, so they use common random numbers.  A
    level whose estimation fails is reported as a row of NaN statistics.
    """
    degradation = DegradationParams(spec.fixed_latency, 0.0, 0.0)
    config = BeliefMcConfig(spec.n_samples, master_seed=spec.master_seed)
    rows = []
    for sigma in spec.sigma_levels:
        belief = GaussianBelief2.isotropic(scenario.ego.nominal_pose, sigma)
        try:
            stats = estimate_belief_residual_risk(scenario, degradation, belief, config, params, map_fn)
        except EstimationFailed:
            rows.append(SigmaRow(sigma, math.nan, math.nan, math.nan, 0, config.n_samples * config.max_attempts_per_sample))
            continue
        exceed = exceedance_probability(stats, spec.r_thr)
        rows.append(SigmaRow(sigma, stats.mean, stats.std_dev, exceed, stats.n_used, stats.n_rejected))
    return rows


def run_latency_sweep(scenario: Scenario, latency_levels: Sequence[float], params: EngineParams) -> list[LatencyRow]:
    """Deterministic residual risk at the nominal pose for each latency, in input order."""
    levels = _check_levels(latency_levels, "latency_levels", False)
    pose = scenario.ego.nominal_pose
    return [
        LatencyRow(theta, residual_risk(scenario, DegradationParams(theta), pose, Covariance2.zero(), params))
        for theta in levels
    ]


class _CellTask:
    def __init__(self, scenario: Scenario, degradation: DegradationParams, params: EngineParams):
        self.scenario = scenario
        self.degradation = degradation
        self.params = params

    def __call__(self, centre: tuple[float, float]) -> float | None:
        if not self.scenario.drivable_area.contains(centre):
            return None
        pose = self.scenario.ego.nominal_pose.moved_to(*centre)
        return residual_risk(self.scenario, self.degradation, pose, Covariance2.zero(), self.params)


def run_spatial_field(scenario: Scenario, spec: FieldSpec, params: EngineParams, map_fn: MapFn = map) -> list[FieldCell]:
    """Deterministic residual risk with the ego relocated to every cell centre."""
    centres = spec.centres()
    task = _CellTask(scenario, DegradationParams(spec.fixed_latency), params)
    return [FieldCell(x, y, r) for (x, y), r in zip(centres, map_fn(task, centres))]


# --------------------------------------------------------------------------
# output


def format_csv(rows: Sequence) -> str:
    if not rows:
        raise OutputError("refusing to write an empty table")
    header = type(rows[0]).CSV_HEADER
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row.csv_fields()) for row in rows)
    return "\n".join(lines) + "\n"


def write_csv(rows: Sequence, path: str | os.PathLike) -> None:
    """Header plus one line per row; raises OutputError for empty tables or unwritable paths."""
    text = format_csv(rows)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def render_svg(rows: Sequence, path: str | os.PathLike, title: str = "") -> None:
    """Heatmap for field cells, line plot for sigma or latency rows."""
    if not rows:
        raise OutputError("refusing to plot an empty table")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    matplotlib.rcParams["svg.hashsalt"] = "beliefrisk"
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    first = rows[0]
    if isinstance(first, FieldCell):
        xs = sorted({c.x for c in rows})
        ys = sorted({c.y for c in rows})
        grid = np.full((len(ys), len(xs)), np.nan)
        xi = {x: i for i, x in enumerate(xs)}
        yi = {y: i for i, y in enumerate(ys)}
        for c in rows:
            if not c.off_map:
                grid[yi[c.y], xi[c.x]] = c.residual
        half = 0.5 * (xs[1] - xs[0]) if len(xs) > 1 else 0.5
        half_y = 0.5 * (ys[1] - ys[0]) if len(ys) > 1 else 0.5
        extent = (xs[0] - half, xs[-1] + half, ys[0] - half_y, ys[-1] + half_y)
        img = ax.imshow(np.ma.masked_invalid(grid), origin="lower", extent=extent, cmap="viridis", vmin=0.0, vmax=1.0, aspect="equal")
        fig.colorbar(img, ax=ax, label="residual risk")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
    elif isinstance(first, SigmaRow):
        sig = [r.sigma for r in rows]
        mean = np.array([r.mean for r in rows])
        std = np.array([r.std for r in rows])
        ax.plot(sig, mean, marker="o", label="mean residual risk")
        ax.fill_between(sig, mean - std, mean + std, alpha=0.2, label="mean ± std")
        ax.plot(sig, [r.exceedance for r in rows], marker="s", linestyle="--", label="exceedance")
        ax.set_xticks(sig)
        ax.set_xlabel("σ_ego [m]")
        ax.set_ylabel("residual risk / probability")
        ax.set_ylim(-0.02, 1.02)
        ax.legend()
    elif isinstance(first, LatencyRow):
        theta = [r.theta for r in rows]
        ax.plot(theta, [r.residual for r in rows], marker="o")
        ax.set_xticks(theta)
        ax.set_xlabel("latency θ [s]")
        ax.set_ylabel("residual risk")
        ax.set_ylim(-0.02, 1.02)
    else:
        plt.close(fig)
        raise OutputError(f"cannot plot rows of type {type(first).__name__}")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
