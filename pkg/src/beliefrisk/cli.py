"""Command-line driver.

Exit codes: 0 success, 2 bad configuration or arguments, 3 estimation failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Sequence

from .belief import BeliefMcConfig
from .engine import DegradationParams, evaluate_risks
from .errors import BeliefRiskError, EstimationFailed, InvalidInput
from .geometry import Covariance2
from .harness import (
    DEFAULT_LATENCY,
    DEFAULT_LATENCY_LEVELS,
    DEFAULT_R_THR,
    DEFAULT_SIGMA_LEVELS,
    EvalRow,
    FieldSpec,
    SweepSpec,
    format_csv,
    render_svg,
    run_latency_sweep,
    run_sigma_sweep,
    run_spatial_field,
    worker_map,
    write_csv,
)
from .scenario import SCENARIO_KINDS, Scenario, dump_scenario, generate_scenario, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ESTIMATION = 3
BUILTIN_PREFIX = "builtin:"


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pair(text: str) -> tuple[float, float]:
    vals = _float_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected 'min,max', got {text!r}")
    return vals[0], vals[1]


def load_scenario_arg(ref: str, seed: int = 0) -> Scenario:
    """``builtin:<kind>`` or a path to a scenario config file."""
    if ref.startswith(BUILTIN_PREFIX):
        return generate_scenario(ref[len(BUILTIN_PREFIX):], seed)
    try:
        with open(ref, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidInput(f"cannot read scenario {ref}: {exc}") from exc
    return load_scenario(text)


def _emit(rows, args, title: str) -> None:
    if args.out_csv:
        write_csv(rows, args.out_csv)
    else:
        sys.stdout.write(format_csv(rows))
    if args.out_svg:
        render_svg(rows, args.out_svg, title)


def _cmd_eval(args, scenario: Scenario) -> int:
    pose = scenario.ego.nominal_pose
    if args.x is not None or args.y is not None:
        pose = pose.moved_to(pose.x if args.x is None else args.x, pose.y if args.y is None else args.y)
    degradation = DegradationParams(args.latency, args.eps_x, args.eps_v)
    cov = Covariance2.isotropic(args.sigma)
    pair = evaluate_risks(scenario, degradation, pose, cov, scenario.engine)
    row = EvalRow(args.sigma, args.latency, args.eps_x, args.eps_v, pair.baseline, pair.degraded, pair.residual)
    if args.out_csv:
        write_csv([row], args.out_csv)
    else:
        sys.stdout.write(format_csv([row]))
    return EXIT_OK


def _cmd_sweep_sigma(args, scenario: Scenario) -> int:
    spec = SweepSpec(
        sigma_levels=tuple(args.sigmas),
        fixed_latency=args.latency,
        r_thr=args.rthr,
        n_samples=args.samples,
        master_seed=args.seed,
    )
    with worker_map(args.workers) as map_fn:
        rows = run_sigma_sweep(scenario, spec, scenario.engine, map_fn)
    _emit(rows, args, f"{scenario.name}: residual risk over σ_ego (θ = {args.latency:g} s)")
    failed = [r.sigma for r in rows if r.failed]
    if failed:
        print(f"estimation failed for sigma levels {failed}", file=sys.stderr)
        return EXIT_ESTIMATION
    return EXIT_OK


def _cmd_sweep_latency(args, scenario: Scenario) -> int:
    rows = run_latency_sweep(scenario, args.levels, scenario.engine)
    _emit(rows, args, f"{scenario.name}: residual risk over latency (σ_ego = 0)")
    return EXIT_OK


def _cmd_field(args, scenario: Scenario) -> int:
    nominal = scenario.ego.nominal_pose
    if args.x_range is None and args.y_range is None:
        spec = FieldSpec.around(nominal, cell_size=args.cell, fixed_latency=args.latency)
    else:
        default = FieldSpec.around(nominal, cell_size=args.cell)
        spec = FieldSpec(args.x_range or default.x_range, args.y_range or default.y_range, args.cell, args.latency)
    with worker_map(args.workers) as map_fn:
        cells = run_spatial_field(scenario, spec, scenario.engine, map_fn)
    _emit(cells, args, f"{scenario.name}: residual risk field (θ = {args.latency:g} s)")
    return EXIT_OK


def _cmd_generate(args) -> int:
    text = dump_scenario(generate_scenario(args.kind, args.scenario_seed)) + "\n"
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise InvalidInput(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beliefrisk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, sampling=False, output=True):
        p.add_argument("--scenario", required=True, help="config path or builtin:<kind>")
        p.add_argument("--scenario-seed", type=int, default=0, help="start jitter seed for builtin scenarios")
        p.add_argument("--t-react", type=float, default=None, help="override the planner anticipation time [s]")
        if output:
            p.add_argument("--out-csv", help="write CSV here instead of stdout")
            p.add_argument("--out-svg", help="also render an SVG figure")
        if sampling:
            p.add_argument("--seed", type=int, default=0, help="Monte-Carlo master seed")
            p.add_argument("--samples", type=int, default=30, help="belief samples per sigma level")
            p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("eval", help="single deterministic evaluation")
    common(p)
    p.add_argument("--latency", type=float, default=DEFAULT_LATENCY)
    p.add_argument("--eps-x", type=float, default=0.0, help="opponent position error along path [m]")
    p.add_argument("--eps-v", type=float, default=0.0, help="opponent speed error [m/s]")
    p.add_argument("--sigma", type=float, default=0.0, help="isotropic ego position std-dev fused into Σ_rel [m]")
    p.add_argument("--x", type=float, default=None, help="ego x instead of the nominal pose")
    p.add_argument("--y", type=float, default=None, help="ego y instead of the nominal pose")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep-sigma", help="Monte-Carlo residual risk over ego localization uncertainty")
    common(p, sampling=True)
    p.add_argument("--sigmas", type=_float_list, default=list(DEFAULT_SIGMA_LEVELS))
    p.add_argument("--latency", type=float, default=DEFAULT_LATENCY)
    p.add_argument("--rthr", type=float, default=DEFAULT_R_THR, help="exceedance threshold")
    p.set_defaults(func=_cmd_sweep_sigma)

    p = sub.add_parser("sweep-latency", help="deterministic residual risk over latency")
    common(p)
    p.add_argument("--levels", type=_float_list, default=list(DEFAULT_LATENCY_LEVELS))
    p.set_defaults(func=_cmd_sweep_latency)

    p = sub.add_parser("field", help="spatial residual-risk field around the nominal pose")
    common(p)
    p.add_argument("--latency", type=float, default=DEFAULT_LATENCY)
    p.add_argument("--x-range", type=_pair, default=None, help="min,max [m]")
    p.add_argument("--y-range", type=_pair, default=None, help="min,max [m]")
    p.add_argument("--cell", type=float, default=1.0, help="cell size [m]")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_field)

    p = sub.add_parser("generate", help="emit a built-in scenario config")
    p.add_argument("kind", choices=SCENARIO_KINDS)
    p.add_argument("--scenario-seed", "--seed", type=int, default=0, dest="scenario_seed")
    p.add_argument("--out", help="write here instead of stdout")
    p.set_defaults(func=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        scenario = load_scenario_arg(args.scenario, args.scenario_seed)
        if args.t_react is not None:
            scenario = replace(scenario, engine=replace(scenario.engine, t_react=args.t_react))
        issues = scenario.engine.issues()
        if issues:
            raise InvalidInput("; ".join(issues))
        if getattr(args, "samples", None) is not None:
            BeliefMcConfig(args.samples, master_seed=args.seed)
        return args.func(args, scenario)
    except EstimationFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except BeliefRiskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
