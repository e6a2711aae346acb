"""Benchmark harness: experiment specs, sweeps, ground truth, reports.

An experiment is a target plus a list of named sampler configurations
("cells"), each executed for a number of independent runs. Per-cell seeds
are derived by hashing (base_seed, method, run_index), so adding or
removing a method never perturbs the randomness of the others.

Reports carry one row per (method, quantity) with the relative MSE against
ground truth; a cell is marked diverged when any of its runs produces
non-finite estimates or spends more than half of its iterations
degenerate.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import ResamplingMode, SamplerConfig, TargetModel
from .engine import relative_mse, relative_mse_pooled, run_sampler
from .targets import (
    GroundTruth,
    banana_ground_truth,
    grid_ground_truth,
    make_example_a,
    make_example_b,
    make_example_c,
    make_gaussian,
)

__all__ = [
    "ExperimentSpec",
    "ReportRow",
    "CSV_COLUMNS",
    "cell_seed",
    "make_target",
    "resolve_ground_truth",
    "run_experiment",
    "emit_report",
    "read_report",
    "builtin_ablation",
    "builtin_dimsweep",
]

CSV_COLUMNS = ("method", "target", "quantity", "rel_mse", "n_runs", "diverged", "wall_time_s")

# Integration boxes that hold all but ~1e-8 of the untruncated mass.
GRID_BOUNDS = {
    "example-a": (-0.5, 1.5),
    "example-b": (-2.0, 3.0),
}
BENCH_GRID_RESOLUTION = 3200
RADIAL_RESOLUTION = 1601


def cell_seed(base_seed: int, method: str, run_index: int) -> int:
    """Derived 64-bit seed for one run of one cell."""
    digest = hashlib.sha256(f"{base_seed}:{method}:{run_index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class ExperimentSpec:
    """A target, a list of (method, config) cells, and sweep settings."""

    target_id: str
    target_params: dict = field(default_factory=dict)
    cells: tuple = ()
    n_runs: int = 100
    base_seed: int = 0
    ground_truth: str = "grid"

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple((str(m), c) for m, c in self.cells))
        names = [m for m, _ in self.cells]
        if len(set(names)) != len(names):
            raise ValueError("method names must be unique")
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")

    def to_dict(self) -> dict:
        return {
            "target": {"id": self.target_id, "params": self.target_params},
            "cells": [{"method": m, "config": c.to_dict()} for m, c in self.cells],
            "n_runs": self.n_runs,
            "base_seed": self.base_seed,
            "ground_truth": self.ground_truth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        try:
            target = d["target"]
            cells = tuple(
                (cell["method"], SamplerConfig.from_dict(cell["config"])) for cell in d["cells"]
            )
            return cls(
                target_id=str(target["id"]),
                target_params=dict(target.get("params", {})),
                cells=cells,
                n_runs=int(d.get("n_runs", 100)),
                base_seed=int(d.get("base_seed", 0)),
                ground_truth=str(d.get("ground_truth", "grid")),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed experiment spec: {exc}") from exc


@dataclass
class ReportRow:
    """One aggregate line: a method's relative MSE on one quantity."""

    method: str
    target: str
    quantity: str
    rel_mse: Optional[float]
    n_runs: int
    diverged: bool
    wall_time_s: float

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "target": self.target,
            "quantity": self.quantity,
            "rel_mse": self.rel_mse,
            "n_runs": self.n_runs,
            "diverged": self.diverged,
            "wall_time_s": self.wall_time_s,
        }


def make_target(target_id: str, params: Optional[dict] = None) -> TargetModel:
    """Instantiate a benchmark target by identifier."""
    params = dict(params or {})
    if target_id == "example-a":
        return make_example_a(**params)
    if target_id == "example-b":
        return make_example_b(**params)
    if target_id == "example-c":
        return make_example_c(**params)
    if target_id == "gaussian":
        return make_gaussian(params.pop("mean", [1.0, 1.0]), **params)
    raise ValueError(f"unknown target id: {target_id!r}")


def target_label(spec: ExperimentSpec) -> str:
    if spec.target_id == "example-c":
        dim = int(spec.target_params.get("dim", 2))
        return f"example-c-d{dim}"
    return spec.target_id


def resolve_ground_truth(spec: ExperimentSpec, target: TargetModel) -> GroundTruth:
    """Ground truth per the spec's source: grid, radial, exact, or a JSON file."""
    source = spec.ground_truth
    if source == "grid":
        if spec.target_id not in GRID_BOUNDS:
            raise ValueError(f"no default integration box for target {spec.target_id!r}")
        return grid_ground_truth(target, GRID_BOUNDS[spec.target_id], BENCH_GRID_RESOLUTION)
    if source == "radial":
        if spec.target_id != "example-c":
            raise ValueError("radial ground truth applies to example-c only")
        p = dict(spec.target_params)
        return banana_ground_truth(
            dim=int(p.get("dim", 2)),
            b=float(p.get("b", 3.0)),
            eta=float(p.get("eta", 1.0)),
            radius=float(p.get("radius", 4.0)),
            rest_scale=float(p.get("rest_scale", 1.0)),
            resolution=RADIAL_RESOLUTION,
        )
    if source == "exact":
        if spec.target_id != "gaussian":
            raise ValueError("exact ground truth applies to the gaussian target only")
        mean = np.asarray(spec.target_params.get("mean", [1.0, 1.0]), dtype=float)
        var = float(spec.target_params.get("var", 1.0))
        return GroundTruth(mean=mean, second_moment=mean**2 + var, z=1.0, meta={"target": "gaussian"})
    return GroundTruth.load(source)


def _run_one(target_id: str, target_params: dict, cfg_dict: dict) -> dict:
    """Execute a single run; module-level so worker processes can import it."""
    target = make_target(target_id, target_params)
    cfg = SamplerConfig.from_dict(cfg_dict)
    res = run_sampler(target, cfg)
    return {
        "mean": np.asarray(res.mean_estimate, dtype=float).tolist(),
        "second_moment": np.asarray(res.second_moment_estimate, dtype=float).tolist(),
        "z": float(res.z_estimate),
        "degenerate_iterations": int(res.degenerate_iterations),
        "wall_time_s": float(res.wall_time_s),
        "seed": int(cfg.seed),
    }


def _cell_tasks(spec: ExperimentSpec, method: str, cfg: SamplerConfig):
    for r in range(spec.n_runs):
        run_cfg = replace(cfg, seed=cell_seed(spec.base_seed, method, r))
        yield (spec.target_id, spec.target_params, run_cfg.to_dict())


def run_experiment(
    spec: ExperimentSpec,
    out_dir=None,
    workers: int = 1,
    truth: Optional[GroundTruth] = None,
    progress: bool = False,
) -> Tuple[List[ReportRow], dict]:
    """Execute every cell of an experiment and aggregate report rows.

    Args:
        spec: the experiment description.
        out_dir: when given, per-cell JSON details and the aggregate CSV
            are written there.
        workers: worker processes for runs within a cell; 1 runs inline.
        truth: optional precomputed ground truth (otherwise resolved from
            the spec).
        progress: print one line per finished cell.

    Returns:
        (rows, details): report rows for all (cell, quantity) pairs, and a
        per-method dict with per-run estimates and summary statistics.
    """
    target = make_target(spec.target_id, spec.target_params)
    if truth is None:
        truth = resolve_ground_truth(spec, target)
    label = target_label(spec)
    # The first banana coordinate is conventionally excluded from scoring.
    lo = 1 if spec.target_id == "example-c" else 0

    executor = None
    if workers > 1:
        executor = concurrent.futures.ProcessPoolExecutor(max_workers=workers)
    rows: List[ReportRow] = []
    details: dict = {"target": label, "truth": truth.to_dict(), "cells": {}}
    try:
        for method, cfg in spec.cells:
            t0 = time.perf_counter()
            tasks = list(_cell_tasks(spec, method, cfg))
            if executor is None:
                runs = [_run_one(*task) for task in tasks]
            else:
                runs = list(executor.map(_run_one, *zip(*tasks)))
            wall = time.perf_counter() - t0

            mean_rows = np.array([r["mean"] for r in runs])
            sm_rows = np.array([r["second_moment"] for r in runs])
            z_vals = np.array([r["z"] for r in runs])
            degen = np.array([r["degenerate_iterations"] for r in runs])
            finite = (
                np.isfinite(mean_rows).all(axis=1)
                & np.isfinite(sm_rows).all(axis=1)
                & np.isfinite(z_vals)
            )
            run_diverged = ~finite | (degen > cfg.n_iterations / 2)
            diverged = bool(run_diverged.any())

            quantities = {
                "mean": (mean_rows[:, lo:], truth.mean[lo:]),
                "second_moment": (sm_rows[:, lo:], truth.second_moment[lo:]),
                "z": (z_vals, truth.z),
            }
            cell_detail = {
                "method": method,
                "target": label,
                "config": cfg.to_dict(),
                "n_runs": spec.n_runs,
                "seeds": [r["seed"] for r in runs],
                "estimates": {
                    "mean": mean_rows.tolist(),
                    "second_moment": sm_rows.tolist(),
                    "z": z_vals.tolist(),
                },
                "degenerate_iterations": degen.tolist(),
                "runs_diverged": run_diverged.tolist(),
                "diverged": diverged,
                "wall_time_s": wall,
                "rel_mse": {},
                "rel_mse_pooled": {},
                "rel_mse_per_coordinate": {},
            }
            for qty, (est, tr) in quantities.items():
                value = None
                if not diverged:
                    value = relative_mse(est, tr)
                    cell_detail["rel_mse"][qty] = value
                    cell_detail["rel_mse_pooled"][qty] = relative_mse_pooled(est, tr)
                    if qty != "z":
                        per_coord = ((est - tr) ** 2).mean(axis=0) / tr**2
                        cell_detail["rel_mse_per_coordinate"][qty] = per_coord.tolist()
                rows.append(
                    ReportRow(
                        method=method,
                        target=label,
                        quantity=qty,
                        rel_mse=value,
                        n_runs=spec.n_runs,
                        diverged=diverged,
                        wall_time_s=wall,
                    )
                )
            details["cells"][method] = cell_detail
            if progress:
                flag = " DIVERGED" if diverged else ""
                z_info = cell_detail["rel_mse"].get("z")
                z_txt = f"rel_mse(z)={z_info:.3e}" if z_info is not None else "rel_mse(z)=n/a"
                print(f"[{label}] {method}: {z_txt} wall={wall:.1f}s{flag}", flush=True)
    finally:
        if executor is not None:
            executor.shutdown()

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for method, detail in details["cells"].items():
            (out / f"{method}.json").write_text(json.dumps(detail, indent=2, sort_keys=True) + "\n")
        emit_report(rows, out / "report.csv", fmt="csv")
    return rows, details


def _format_cell(value) -> str:
    if value is None:
        return ""
    return format(float(value), ".17e")


def emit_report(rows: Sequence[ReportRow], path, fmt: str = "csv") -> Path:
    """Write report rows as CSV (fixed column order) or JSON.

    Diverged cells carry an empty rel_mse field in CSV and null in JSON.
    """
    if not rows:
        raise ValueError("no rows to report")
    path = Path(path)
    try:
        if fmt == "csv":
            lines = [",".join(CSV_COLUMNS)]
            for r in rows:
                lines.append(
                    ",".join(
                        [
                            r.method,
                            r.target,
                            r.quantity,
                            _format_cell(r.rel_mse),
                            str(int(r.n_runs)),
                            "true" if r.diverged else "false",
                            _format_cell(r.wall_time_s),
                        ]
                    )
                )
            path.write_text("\n".join(lines) + "\n")
        elif fmt == "json":
            path.write_text(json.dumps([r.to_dict() for r in rows], indent=2, sort_keys=True) + "\n")
        else:
            raise ValueError(f"unknown report format: {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_report(path) -> List[ReportRow]:
    """Parse a CSV report back into rows (inverse of emit_report)."""
    lines = Path(path).read_text().strip().split("\n")
    if lines[0] != ",".join(CSV_COLUMNS):
        raise ValueError("unexpected report header")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        rows.append(
            ReportRow(
                method=parts[0],
                target=parts[1],
                quantity=parts[2],
                rel_mse=None if parts[3] == "" else float(parts[3]),
                n_runs=int(parts[4]),
                diverged=parts[5] == "true",
                wall_time_s=float(parts[6]),
            )
        )
    return rows


def _ablation_cells(sigma_base: float, resampling: ResamplingMode) -> tuple:
    """The nine-method grid: static baselines and both adaptive families."""
    cells = []
    for mult in (1, 3, 5):
        cells.append(
            (
                f"dm-pmc-s{mult}",
                SamplerConfig(
                    init_sigma=mult * sigma_base,
                    adaptation_mode="none",
                    covariance_mode="fixed",
                    resampling_mode=resampling,
                ),
            )
        )
    for family, adaptation in (("pnais-grad", "prox_grad"), ("pnais", "prox_newton")):
        for cov_label, cov in (("nocov", "fixed"), ("rcov", "robust"), ("newton", "newton")):
            cells.append(
                (
                    f"{family}-{cov_label}",
                    SamplerConfig(
                        init_sigma=sigma_base,
                        adaptation_mode=adaptation,
                        covariance_mode=cov,
                        resampling_mode=resampling,
                    ),
                )
            )
    return tuple(cells)


def builtin_ablation(
    example: str,
    n_runs: int = 100,
    base_seed: int = 0,
    resampling: ResamplingMode = ResamplingMode.GLOCAL,
) -> ExperimentSpec:
    """The 2-D ablation grid on example A or B.

    Nine cells: the static mixture sampler at sigma in {1, 3, 5}, plus the
    proximal gradient and proximal Newton samplers each with fixed, robust,
    and Newton covariance adaptation.
    """
    example = example.lower()
    if example.startswith("example-"):
        example = example[len("example-") :]
    if example not in ("a", "b"):
        raise ValueError("example must be 'a' or 'b'")
    return ExperimentSpec(
        target_id=f"example-{example}",
        target_params={},
        cells=_ablation_cells(1.0, resampling),
        n_runs=n_runs,
        base_seed=base_seed,
        ground_truth="grid",
    )


def builtin_dimsweep(
    dims: Sequence[int] = (2, 10, 50),
    n_runs: int = 100,
    base_seed: int = 0,
    resampling: ResamplingMode = ResamplingMode.GLOCAL,
) -> List[ExperimentSpec]:
    """Ball-constrained banana sweeps across dimensions.

    The base scale shrinks as min(1, 2/sqrt(d)) so that initial proposals
    keep some mass inside the radius-4 ball, and the valley width drops to
    0.4 at d >= 50, where a unit-width valley would put the ball in an
    astronomically unlikely tail for every method. One spec per dimension;
    ground truth comes from the radial oracle.
    """
    specs = []
    for d in dims:
        d = int(d)
        sigma_base = min(1.0, 2.0 / np.sqrt(d))
        rest_scale = 0.4 if d >= 50 else 1.0
        specs.append(
            ExperimentSpec(
                target_id="example-c",
                target_params={"dim": d, "rest_scale": rest_scale},
                cells=_ablation_cells(sigma_base, resampling),
                n_runs=n_runs,
                base_seed=base_seed,
                ground_truth="radial",
            )
        )
    return specs
