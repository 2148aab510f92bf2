"""Command-line simulator entry points.

Exit codes: 0 success, 1 configuration error, 2 runtime/numeric error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .config import (
    IntegratorSettings,
    parse_config,
    build_configuration_matrix,
    validate_geometry,
)
from .errors import ConfigError, GeometryError, ThrustAllocError
from .harness import compute_metrics, emit_plot_data, read_trace, run, write_trace
from .scenarios import builtin_scenario, parse_scenario


def _load_config(path: str):
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _load_scenario(spec: str, duration: float | None):
    if Path(spec).exists():
        scenario = parse_scenario(Path(spec).read_text(encoding="utf-8"))
        if duration is not None:
            scenario = dataclasses.replace(scenario, duration=duration)
        return scenario
    return builtin_scenario(spec, duration)


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    if args.dt is not None:
        integ = IntegratorSettings(dt=args.dt, method=cfg.integrator.method)
        cfg = dataclasses.replace(cfg, integrator=integ)
    scenario = _load_scenario(args.scenario, args.duration)
    result = run(cfg, scenario, decimate=args.decimate)
    if args.out:
        write_trace(result.trace, args.out)
        print(f"trace: {args.out} ({len(result.trace)} rows)")
    _print_metrics(result.metrics)
    return 0


def _print_metrics(metrics) -> None:
    print(f"steady_state_residual: {metrics.steady_state_residual:.6g}")
    print(f"max_force_ratio: {metrics.max_force_ratio:.6g}")
    print(f"theta_settle_time: {metrics.theta_settle_time:.6g}")
    variation = " ".join(f"{v:.6g}" for v in metrics.azimuth_total_variation)
    print(f"azimuth_total_variation: {variation}")


def _cmd_check_config(args) -> int:
    cfg = _load_config(args.config)
    B = build_configuration_matrix(cfg)
    dims = validate_geometry(B)
    sigma = np.linalg.svd(B, compute_uv=False)
    print(f"thrusters: {cfg.m} ({cfg.m1} azimuth, {cfg.m2} fixed)")
    print(f"n: {dims.n}")
    print(f"p: {dims.p}")
    print(f"q: {dims.q}")
    print(f"sigma_max: {sigma[0]:.6g}")
    print(f"sigma_min: {sigma[dims.n - 1]:.6g}")
    print(f"rank_ratio: {sigma[dims.n - 1] / sigma[0]:.6g}")
    return 0


def _cmd_metrics(args) -> int:
    trace = read_trace(args.trace)
    if args.config:
        cfg = _load_config(args.config)
        f_max = np.array([t.f_max for t in cfg.thrusters])
    else:
        f_max = 1.0
    _print_metrics(compute_metrics(trace, f_max=f_max))
    return 0


def _cmd_plot_data(args) -> int:
    trace = read_trace(args.trace)
    for path in emit_plot_data(trace, args.out_dir):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thrustalloc",
        description="Dynamic thrust-allocation reference-filter simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and emit a trace")
    sim.add_argument("--config", required=True, help="vessel YAML file")
    sim.add_argument(
        "--scenario",
        required=True,
        help="built-in scenario name or scenario YAML file",
    )
    sim.add_argument("--duration", type=float, help="override duration [s]")
    sim.add_argument("--dt", type=float, help="override integrator step [s]")
    sim.add_argument("--out", help="trace CSV output path")
    sim.add_argument(
        "--decimate", type=int, default=1, help="keep every k-th sample"
    )
    sim.set_defaults(func=_cmd_simulate)

    chk = sub.add_parser("check-config", help="validate a vessel configuration")
    chk.add_argument("--config", required=True)
    chk.set_defaults(func=_cmd_check_config)

    met = sub.add_parser("metrics", help="recompute metrics from a trace CSV")
    met.add_argument("--trace", required=True)
    met.add_argument(
        "--config",
        help="vessel YAML supplying saturation limits (default: 1 N each)",
    )
    met.set_defaults(func=_cmd_metrics)

    plo = sub.add_parser("plot-data", help="emit per-figure plot columns")
    plo.add_argument("--trace", required=True)
    plo.add_argument("--out-dir", required=True)
    plo.set_defaults(func=_cmd_plot_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except (ThrustAllocError, ValueError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
