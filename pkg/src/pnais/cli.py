"""Command line front-end for ground truth, single runs, and sweeps.

Subcommands:
    ground-truth  compute and store reference moments for a target
    run           execute one cell of a spec once and print its result
    bench         execute a full experiment spec and write reports
    ablation      built-in nine-method grid on example A or B
    dimsweep      built-in dimension sweep on the ball-constrained banana

Exit codes: 0 success, 1 configuration error, 2 I/O error. The default
worker count comes from the PNAIS_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core import ResamplingMode, SamplerConfig
from .engine import run_sampler
from .harness import (
    ExperimentSpec,
    builtin_ablation,
    builtin_dimsweep,
    cell_seed,
    emit_report,
    make_target,
    resolve_ground_truth,
    run_experiment,
    target_label,
)
from .targets import banana_ground_truth, grid_ground_truth

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2

DEFAULT_GRID_BOUNDS = {
    "example-a": (-0.5, 1.5),
    "example-b": (-2.0, 3.0),
}


class _CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("PNAIS_WORKERS", "1")))
    except ValueError:
        return 1


def _load_spec(path: str) -> ExperimentSpec:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise _CliError(f"cannot read spec file {path}: {exc}", EXIT_IO)
    try:
        return ExperimentSpec.from_dict(json.loads(text))
    except (json.JSONDecodeError, ValueError) as exc:
        raise _CliError(f"malformed spec {path}: {exc}", EXIT_CONFIG)


def _cmd_ground_truth(args) -> int:
    params = {}
    if args.target == "example-c":
        params = {"dim": args.dim, "rest_scale": args.rest_scale}
        truth = banana_ground_truth(
            dim=args.dim, rest_scale=args.rest_scale, resolution=args.resolution
        )
    elif args.target in DEFAULT_GRID_BOUNDS:
        bounds = DEFAULT_GRID_BOUNDS[args.target]
        if args.bounds is not None:
            if len(args.bounds) == 2:
                bounds = tuple(args.bounds)
            elif len(args.bounds) == 4:
                bounds = ((args.bounds[0], args.bounds[1]), (args.bounds[2], args.bounds[3]))
            else:
                raise _CliError("--bounds takes 2 or 4 numbers", EXIT_CONFIG)
        target = make_target(args.target, params)
        truth = grid_ground_truth(target, bounds, args.resolution)
    else:
        raise _CliError(f"unknown target {args.target!r}", EXIT_CONFIG)

    payload = json.dumps(truth.to_dict(), indent=2, sort_keys=True)
    if args.out:
        try:
            Path(args.out).write_text(payload + "\n")
        except OSError as exc:
            raise _CliError(f"cannot write {args.out}: {exc}", EXIT_IO)
    print(payload)
    return EXIT_OK


def _cmd_run(args) -> int:
    spec = _load_spec(args.spec)
    methods = dict(spec.cells)
    if args.method is None:
        if len(spec.cells) != 1:
            raise _CliError("spec has several cells; pick one with --method", EXIT_CONFIG)
        method, cfg = spec.cells[0]
    elif args.method in methods:
        method, cfg = args.method, methods[args.method]
    else:
        raise _CliError(f"method {args.method!r} not in spec", EXIT_CONFIG)
    cfg = replace(cfg, seed=cell_seed(spec.base_seed, method, args.run_index))
    target = make_target(spec.target_id, spec.target_params)
    result = run_sampler(target, cfg)
    # Timing varies between executions, so it goes to stderr by default and
    # stdout stays byte-reproducible for a fixed seed.
    if args.timing:
        print(result.to_json(include_timing=True))
    else:
        print(result.to_json(include_timing=False))
        print(f"wall_time_s: {result.wall_time_s:.3f}", file=sys.stderr)
    return EXIT_OK


def _resampling_override(spec: ExperimentSpec, resampling) -> ExperimentSpec:
    if resampling is None:
        return spec
    mode = ResamplingMode(resampling)
    cells = tuple((m, replace(c, resampling_mode=mode)) for m, c in spec.cells)
    return ExperimentSpec(
        target_id=spec.target_id,
        target_params=spec.target_params,
        cells=cells,
        n_runs=spec.n_runs,
        base_seed=spec.base_seed,
        ground_truth=spec.ground_truth,
    )


def _run_and_report(spec: ExperimentSpec, out_dir, workers: int, quiet: bool) -> list:
    try:
        rows, _ = run_experiment(spec, out_dir=out_dir, workers=workers, progress=not quiet)
    except OSError as exc:
        raise _CliError(f"cannot write outputs: {exc}", EXIT_IO)
    return rows


def _cmd_bench(args) -> int:
    spec = _resampling_override(_load_spec(args.spec), args.resampling)
    _run_and_report(spec, args.out, args.workers, args.quiet)
    return EXIT_OK


def _cmd_ablation(args) -> int:
    spec = builtin_ablation(args.example, n_runs=args.runs, base_seed=args.seed)
    spec = _resampling_override(spec, args.resampling)
    _run_and_report(spec, args.out, args.workers, args.quiet)
    return EXIT_OK


def _cmd_dimsweep(args) -> int:
    try:
        dims = [int(v) for v in args.dims.split(",") if v.strip()]
    except ValueError:
        raise _CliError(f"bad --dims value {args.dims!r}", EXIT_CONFIG)
    if not dims:
        raise _CliError("no dimensions given", EXIT_CONFIG)
    specs = builtin_dimsweep(dims, n_runs=args.runs, base_seed=args.seed)
    all_rows = []
    for spec in specs:
        spec = _resampling_override(spec, args.resampling)
        sub = None
        if args.out is not None:
            sub = Path(args.out) / target_label(spec)
        all_rows.extend(_run_and_report(spec, sub, args.workers, args.quiet))
    if args.out is not None:
        try:
            emit_report(all_rows, Path(args.out) / "report.csv", fmt="csv")
        except OSError as exc:
            raise _CliError(f"cannot write combined report: {exc}", EXIT_IO)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pnais",
        description="Adaptive importance sampling benchmarks for non-smooth targets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ground-truth", help="compute reference moments for a target")
    p.add_argument("target", choices=["example-a", "example-b", "example-c"])
    p.add_argument("--resolution", type=int, default=400, help="grid cells per axis (2-D targets)")
    p.add_argument("--bounds", type=float, nargs="+", default=None, help="lo hi, or lo1 hi1 lo2 hi2")
    p.add_argument("--dim", type=int, default=2, help="dimension (example-c)")
    p.add_argument("--rest-scale", type=float, default=1.0, help="valley width (example-c)")
    p.add_argument("--out", default=None, help="also write the JSON here")
    p.set_defaults(func=_cmd_ground_truth)

    p = sub.add_parser("run", help="execute one cell of a spec once")
    p.add_argument("spec", help="experiment spec JSON file")
    p.add_argument("--method", default=None, help="cell name (optional for single-cell specs)")
    p.add_argument("--run-index", type=int, default=0, help="run index for seed derivation")
    p.add_argument("--timing", action="store_true", help="include wall time in the JSON output")
    p.set_defaults(func=_cmd_run)

    def common_sweep_args(p):
        p.add_argument("--out", default=None, help="output directory for reports")
        p.add_argument("--workers", type=int, default=_default_workers())
        p.add_argument("--resampling", choices=[m.value for m in ResamplingMode], default=None)
        p.add_argument("--quiet", action="store_true", help="suppress per-cell progress lines")

    p = sub.add_parser("bench", help="execute a full experiment spec")
    p.add_argument("spec", help="experiment spec JSON file")
    common_sweep_args(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("ablation", help="built-in nine-method grid on example A or B")
    p.add_argument("--example", required=True, choices=["a", "b"])
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    common_sweep_args(p)
    p.set_defaults(func=_cmd_ablation)

    p = sub.add_parser("dimsweep", help="built-in banana dimension sweep")
    p.add_argument("--dims", default="2,10,50", help="comma-separated dimensions")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    common_sweep_args(p)
    p.set_defaults(func=_cmd_dimsweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
