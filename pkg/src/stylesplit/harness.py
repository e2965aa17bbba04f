"""Experiment driver: the variation grid, the proxy/direct correlation
study, and deterministic report rendering.

A single JSON config describes everything: the cohort (styles, seed,
slices per scan), the learner, the metric, the GA budget, and the study
parameters. The default grid replicates the nine two/three-style rows of
the reference study design; each row synthesizes a cohort, pretrains the
learner on the style mixture, computes the mixture leave-one-out scores
(the "Mixture" columns), optimizes the partition, and scores within-group
leave-one-out on the *found* groups (the "Specific styles" columns).
Ground-truth style labels are consulted only for the misclassification
column, never for scoring.

Scores are kept at full precision everywhere; rounding to two decimals
happens only in the rendered markdown table.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import jsonschema
import numpy as np

from .learners import LearnerSpec, pretrain
from .metrics import MetricConfig, ScorePair
from .objective import BaselineScores, Evaluator, Partition, loo_pairs
from .optimizer import (GAConfig, misclassification, optimize_partition,
                        recursive_partition)
from .simulate import StyleSpec, build_experiment_cohort

log = logging.getLogger("stylesplit.harness")

JOBS_ENV_VAR = "STYLESPLIT_JOBS"

# Table-2-style variation rows: display label -> operations per style.
VARIATIONS = {
    "erosion/dilation": ("erosion", "dilation"),
    "up/down shift": ("shift-up", "shift-down"),
    "bottom over-/under-segmentation": ("bottom-over", "bottom-under"),
    "top over-/under-segmentation": ("top-over", "top-under"),
    "top over-/top under-/bottom under-segmentation":
        ("top-over", "top-under", "bottom-under"),
}

DEFAULT_GRID_ROWS = (
    ("erosion/dilation", (10.0, 4.0)),
    ("erosion/dilation", (5.0, 1.0)),
    ("up/down shift", (10.0, 4.0)),
    ("up/down shift", (5.0, 1.0)),
    ("bottom over-/under-segmentation", (10.0, 4.0)),
    ("bottom over-/under-segmentation", (5.0, 1.0)),
    ("top over-/under-segmentation", (10.0, 4.0)),
    ("top over-/under-segmentation", (5.0, 1.0)),
    ("top over-/top under-/bottom under-segmentation", (10.0, 4.0)),
)

# Default experiment tolerance, in mm. The phantoms use a 0.6 mm pixel
# pitch, so 3.6 mm is a six-pixel band: wide enough that a fit serving two
# styles earns partial credit on both (the regime where splitting styles
# visibly helps), narrow enough that a ten-pixel style difference cannot
# hide inside the tolerance.
EXPERIMENT_TOLERANCE_MM = 3.6

# Baseline floor for the partition objectives. Scans a mixture model
# cannot score at all (surface Dice 0 in the mixture leave-one-out) keep a
# floor this large so their relative score stays O(1); with a tiny floor a
# single such scan placed on the wrong side dominates the whole objective,
# walling the true partition behind a spike no search can descend.
EXPERIMENT_BASELINE_FLOOR = 0.25


# Schema for config files; from_dict re-checks semantics (ranges, known
# variations) after parsing, so the schema only pins shapes and types.
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer"},
        "slices_per_scan": {"type": "integer", "minimum": 1},
        "styles": {
            "type": "array", "minItems": 2, "maxItems": 3,
            "items": {
                "type": "object",
                "required": ["operation", "magnitude_mean", "magnitude_std"],
                "additionalProperties": False,
                "properties": {
                    "operation": {"type": "string"},
                    "magnitude_mean": {"type": "number"},
                    "magnitude_std": {"type": "number", "minimum": 0},
                },
            },
        },
        "learner": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"type": "string"},
                "hyperparams": {"type": "object"},
            },
        },
        "metric": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tolerance_mm": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "ga": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "population_size": {"type": "integer"},
                "max_true_evaluations": {"type": "integer"},
                "warmup_evaluations": {"type": "integer"},
                "surrogate": {"enum": ["off", "hamming-knn"]},
                "surrogate_k": {"type": "integer"},
                "seed": {"type": "integer"},
                "stall_generations": {"type": "integer"},
            },
        },
        "grid": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["variation", "magnitude"],
                "additionalProperties": False,
                "properties": {
                    "variation": {"type": "string"},
                    "magnitude": {
                        "type": "array", "minItems": 2, "maxItems": 2,
                        "items": {"type": "number"},
                    },
                },
            },
        },
        "baseline_floor": {"type": "number"},
        "correlation_per_distance": {"type": "integer"},
        "correlation_max_distance": {"type": "integer"},
        "recursive_min_group": {"type": "integer"},
        "recursive_min_improvement": {"type": "number"},
        "jobs": {"type": "integer"},
    },
}


class StageError(RuntimeError):
    """A grid-row stage failed; carries the stage tag for diagnostics."""

    def __init__(self, stage: str, detail: str):
        super().__init__(f"[{stage}] {detail}")
        self.stage = stage


@dataclass(frozen=True)
class GridRow:
    """One grid row: a variation label and the N(mean, std) magnitude."""

    variation: str
    magnitude: tuple[float, float]

    def __post_init__(self) -> None:
        if self.variation not in VARIATIONS:
            raise ValueError(f"unknown variation {self.variation!r}; "
                             f"expected one of {sorted(VARIATIONS)}")
        mean, std = self.magnitude
        object.__setattr__(self, "magnitude", (float(mean), float(std)))

    @property
    def operations(self) -> tuple[str, ...]:
        return VARIATIONS[self.variation]

    @property
    def magnitude_label(self) -> str:
        return "N(%g,%g)" % self.magnitude

    def style_specs(self) -> tuple[StyleSpec, ...]:
        mean, std = self.magnitude
        return tuple(StyleSpec(op, mean, std) for op in self.operations)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs; defaults reproduce the reference setup."""

    seed: int = 201
    slices_per_scan: int = 6
    styles: tuple[StyleSpec, ...] = (
        StyleSpec("erosion", 10.0, 4.0), StyleSpec("dilation", 10.0, 4.0))
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    metric: MetricConfig = field(
        default_factory=lambda: MetricConfig(tolerance_mm=EXPERIMENT_TOLERANCE_MM))
    ga: GAConfig = field(default_factory=GAConfig)
    grid: tuple[GridRow, ...] = tuple(
        GridRow(v, m) for v, m in DEFAULT_GRID_ROWS)
    baseline_floor: float = EXPERIMENT_BASELINE_FLOOR
    correlation_per_distance: int = 5
    correlation_max_distance: int = 10
    recursive_min_group: int = 4
    recursive_min_improvement: float = 0.0
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.slices_per_scan < 1:
            raise ValueError("slices_per_scan must be >= 1")
        if len(self.styles) not in (2, 3):
            raise ValueError("styles must list 2 or 3 entries (the layouts)")
        if not 0 < self.baseline_floor <= 1:
            raise ValueError("baseline_floor must lie in (0, 1]")
        if self.correlation_per_distance < 1 or self.correlation_max_distance < 1:
            raise ValueError("correlation sampling parameters must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @property
    def layout(self) -> str:
        return "two-style" if len(self.styles) == 2 else "three-style"

    # -- JSON round trip ----------------------------------------------------
    @classmethod
    def from_dict(cls, doc: Mapping) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        kw: dict = {}
        for name in ("seed", "slices_per_scan", "baseline_floor",
                     "correlation_per_distance", "correlation_max_distance",
                     "recursive_min_group", "recursive_min_improvement",
                     "jobs"):
            if name in doc:
                kw[name] = doc[name]
        if "styles" in doc:
            kw["styles"] = tuple(
                StyleSpec(s["operation"], float(s["magnitude_mean"]),
                          float(s["magnitude_std"]))
                for s in doc["styles"])
        if "learner" in doc:
            sub = dict(doc["learner"])
            kw["learner"] = LearnerSpec(kind=sub.get("kind", "threshold-morph"),
                                        hyperparams=sub.get("hyperparams", {}))
        if "metric" in doc:
            kw["metric"] = MetricConfig(**doc["metric"])
        if "ga" in doc:
            kw["ga"] = GAConfig(**doc["ga"])
        if "grid" in doc:
            kw["grid"] = tuple(
                GridRow(r["variation"], tuple(r["magnitude"]))
                for r in doc["grid"])
        return cls(**kw)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"config {path} is not valid JSON: {exc}") from exc
        try:
            jsonschema.validate(doc, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ValueError(
                f"config {path} invalid at {where}: {exc.message}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "slices_per_scan": self.slices_per_scan,
            "styles": [
                {"operation": s.operation, "magnitude_mean": s.magnitude_mean,
                 "magnitude_std": s.magnitude_std} for s in self.styles],
            "learner": {"kind": self.learner.kind,
                        "hyperparams": dict(self.learner.hyperparams)},
            "metric": {"tolerance_mm": self.metric.tolerance_mm},
            "ga": {
                "population_size": self.ga.population_size,
                "max_true_evaluations": self.ga.max_true_evaluations,
                "warmup_evaluations": self.ga.warmup_evaluations,
                "surrogate": self.ga.surrogate,
                "surrogate_k": self.ga.surrogate_k,
                "seed": self.ga.seed,
                "stall_generations": self.ga.stall_generations,
            },
            "grid": [{"variation": r.variation, "magnitude": list(r.magnitude)}
                     for r in self.grid],
            "baseline_floor": self.baseline_floor,
            "correlation_per_distance": self.correlation_per_distance,
            "correlation_max_distance": self.correlation_max_distance,
            "recursive_min_group": self.recursive_min_group,
            "recursive_min_improvement": self.recursive_min_improvement,
            "jobs": self.jobs,
        }


@dataclass(frozen=True)
class GridRowReport:
    """Raw outcome of one grid row; improvements are derived, not stored."""

    variation: str
    magnitude: tuple[float, float]
    misclassified: int | None
    mixture_dice: float
    mixture_surface_dice: float
    specific_dice: float
    specific_surface_dice: float

    @staticmethod
    def _improvement(specific: float, mixture: float) -> float:
        if mixture == 0.0:
            return math.inf if specific > 0 else 0.0
        return 100.0 * (specific - mixture) / mixture

    @property
    def improvement_dice(self) -> float:
        return self._improvement(self.specific_dice, self.mixture_dice)

    @property
    def improvement_surface_dice(self) -> float:
        return self._improvement(self.specific_surface_dice,
                                 self.mixture_surface_dice)

    @property
    def magnitude_label(self) -> str:
        return "N(%g,%g)" % self.magnitude

    def as_dict(self) -> dict:
        return {
            "variation": self.variation,
            "magnitude": self.magnitude_label,
            "misclassified": self.misclassified,
            "mixture_dice": self.mixture_dice,
            "mixture_surface_dice": self.mixture_surface_dice,
            "specific_dice": self.specific_dice,
            "specific_surface_dice": self.specific_surface_dice,
            "improvement_dice_pct": self.improvement_dice,
            "improvement_surface_dice_pct": self.improvement_surface_dice,
        }


@dataclass(frozen=True)
class CorrelationReport:
    """F and G over the optimum plus random solutions per Hamming ring."""

    rows: tuple[dict, ...]  # bits, hamming, proxy_value, direct_value, is_optimum
    pearson_rho: float

    def __post_init__(self) -> None:
        if sum(1 for r in self.rows if r["is_optimum"]) != 1:
            raise ValueError("exactly one sampled solution must be the optimum")


def _pooled_means(pairs: Mapping[str, ScorePair]) -> tuple[float, float]:
    dice = float(np.mean([p.dice for p in pairs.values()]))
    sdsc = float(np.mean([p.surface_dice for p in pairs.values()]))
    return dice, sdsc


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        log.error("row stage %r failed: %s", name, exc)
        raise StageError(name, str(exc)) from exc


def run_grid_row(cfg: ExperimentConfig, row: GridRow,
                 log_path: str | Path | None = None) -> GridRowReport:
    """Synthesize, pretrain, baseline, optimize, and score one grid row."""
    specs = row.style_specs()
    layout = "two-style" if len(specs) == 2 else "three-style"
    log.info("row %s %s: building %s cohort (seed %d)",
             row.variation, row.magnitude_label, layout, cfg.seed)
    cohort = _stage("synthesize", build_experiment_cohort, cfg.seed,
                    list(specs), layout, cfg.slices_per_scan)
    spec = _stage("pretrain", pretrain, cfg.learner,
                  cohort.pretrain_scans(), cfg.metric)
    scans = cohort.optimize_scans()

    mixture_pairs = _stage("baseline", loo_pairs, spec, scans, cfg.metric)
    mixture_dice, mixture_sdsc = _pooled_means(mixture_pairs)
    baseline = BaselineScores(
        {i: p.surface_dice for i, p in mixture_pairs.items()},
        floor=cfg.baseline_floor)

    by_id = {s.id: s for s in scans}
    if layout == "two-style":
        result = _stage("optimize", optimize_partition, spec, scans, baseline,
                        cfg.ga, metric_cfg=cfg.metric, log_path=log_path)
        groups = [result.best.group_ids(0), result.best.group_ids(1)]
        log.info("row %s %s: optimizer stop=%s evals=%d value=%.6f",
                 row.variation, row.magnitude_label, result.stop_reason,
                 result.evaluator.true_evaluations, result.record.value)
    else:
        tree = _stage("optimize", recursive_partition, spec, scans,
                      cfg.ga, metric_cfg=cfg.metric,
                      min_group=cfg.recursive_min_group,
                      min_improvement=cfg.recursive_min_improvement,
                      expected_styles=len(specs),
                      baseline_floor=cfg.baseline_floor, log_path=log_path)
        groups = tree.leaf_groups()
        log.info("row %s %s: recursive partition found %d leaves",
                 row.variation, row.magnitude_label, len(groups))

    def specific_pairs() -> dict[str, ScorePair]:
        pooled: dict[str, ScorePair] = {}
        for group in groups:
            if len(group) < 2:
                log.warning("group %s too small for leave-one-out; skipped",
                            group)
                continue
            pooled.update(loo_pairs(spec, [by_id[i] for i in group],
                                    cfg.metric))
        if not pooled:
            raise ValueError("no group large enough for leave-one-out")
        return pooled

    specific_dice, specific_sdsc = _pooled_means(_stage("evaluate",
                                                        specific_pairs))

    labels = {i: cohort.style_labels[i] for i in by_id}
    if len(groups) == len(set(labels.values())):
        misclassified = misclassification(groups, labels)
    else:
        log.warning("row %s %s: %d groups for %d styles; "
                    "misclassification left blank", row.variation,
                    row.magnitude_label, len(groups), len(set(labels.values())))
        misclassified = None

    return GridRowReport(
        variation=row.variation, magnitude=row.magnitude,
        misclassified=misclassified,
        mixture_dice=mixture_dice, mixture_surface_dice=mixture_sdsc,
        specific_dice=specific_dice, specific_surface_dice=specific_sdsc)


def _run_row_logged(cfg: ExperimentConfig, row: GridRow,
                    log_path: str) -> GridRowReport:
    """Worker entry: one row, evaluations logged to its own file."""
    Path(log_path).unlink(missing_ok=True)
    return run_grid_row(cfg, row, log_path=log_path)


def resolve_jobs(requested: int | None, cfg: ExperimentConfig) -> int:
    """CLI flag wins, then the environment variable, then the config."""
    if requested is not None:
        return max(1, requested)
    env = os.environ.get(JOBS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"{JOBS_ENV_VAR}={env!r} is not an integer")
    return cfg.jobs


def run_grid(cfg: ExperimentConfig, out_dir: str | Path,
             jobs: int | None = None) -> list[GridRowReport]:
    """Run every grid row; merge per-row evaluation logs in row order so
    `evals.jsonl` is byte-stable no matter the worker count."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = resolve_jobs(jobs, cfg)
    row_logs = [out / f".evals_row{i}.jsonl" for i in range(len(cfg.grid))]
    if jobs == 1 or len(cfg.grid) <= 1:
        reports = [_run_row_logged(cfg, row, str(path))
                   for row, path in zip(cfg.grid, row_logs)]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_row_logged, cfg, row, str(path))
                       for row, path in zip(cfg.grid, row_logs)]
            reports = [f.result() for f in futures]
    with open(out / "evals.jsonl", "w") as sink:
        for path in row_logs:
            if path.exists():
                sink.write(path.read_text())
                path.unlink()
    return reports


# --------------------------------------------------------------- correlation

def _sample_ring(optimum: Partition, distance: int, count: int,
                 taken: set[tuple[int, ...]],
                 rng: np.random.Generator) -> list[Partition]:
    """Random canonical solutions at a fixed Hamming distance from the
    optimum, distinct from everything in `taken` (which already holds the
    canonical bits, so complement duplicates are rejected for free)."""
    n = optimum.n
    found: list[Partition] = []
    for _ in range(1000 * count):
        if len(found) == count:
            return found
        flips = rng.choice(n, size=distance, replace=False)
        bits = list(optimum.bits)
        for i in flips:
            bits[i] = 1 - bits[i]
        ones = sum(bits)
        if min(ones, n - ones) < 2:
            continue  # degenerate or too small for the direct objective
        p = Partition(tuple(bits), optimum.scan_order)
        if p.bits in taken:
            continue
        taken.add(p.bits)
        found.append(p)
    raise ValueError(
        f"could not draw {count} distinct solutions at Hamming distance "
        f"{distance}; the cohort is too small for this sample")


def run_correlation(cfg: ExperimentConfig,
                    log_path: str | Path | None = None) -> CorrelationReport:
    """Score the proxy and direct objectives on the true-label partition
    plus `per_distance` random solutions at each Hamming distance."""
    if len(cfg.styles) != 2:
        raise ValueError("the correlation study uses a two-style cohort")
    cohort = build_experiment_cohort(cfg.seed, list(cfg.styles), "two-style",
                                     cfg.slices_per_scan)
    spec = pretrain(cfg.learner, cohort.pretrain_scans(), cfg.metric)
    scans = cohort.optimize_scans()
    pairs = loo_pairs(spec, scans, cfg.metric)
    baseline = BaselineScores({i: p.surface_dice for i, p in pairs.items()},
                              floor=cfg.baseline_floor)
    ev = Evaluator(spec, scans, baseline, metric_cfg=cfg.metric,
                   log_path=log_path, seed=cfg.seed)

    optimum = Partition.from_labels(
        {i: cohort.style_labels[i] for i in ev.scan_order}, ev.scan_order)
    rng = np.random.default_rng(cfg.seed)
    taken = {optimum.bits}
    solutions = [(0, optimum, True)]
    for d in range(1, cfg.correlation_max_distance + 1):
        for p in _sample_ring(optimum, d, cfg.correlation_per_distance,
                              taken, rng):
            solutions.append((d, p, False))

    rows = []
    for d, p, is_opt in solutions:
        proxy = ev.proxy(p).value
        direct = ev.direct(p).value
        rows.append({"bits": p.bitstring(), "hamming": d,
                     "proxy_value": proxy, "direct_value": direct,
                     "is_optimum": is_opt})
    rho = float(np.corrcoef([r["proxy_value"] for r in rows],
                            [r["direct_value"] for r in rows])[0, 1])
    log.info("correlation study: %d solutions, Pearson rho %.4f",
             len(rows), rho)
    return CorrelationReport(rows=tuple(rows), pearson_rho=rho)


# ----------------------------------------------------------------- rendering

GRID_CSV_COLUMNS = (
    "variation", "magnitude", "misclassified",
    "mixture_dice", "mixture_surface_dice",
    "specific_dice", "specific_surface_dice",
    "improvement_dice_pct", "improvement_surface_dice_pct",
)

CORRELATION_CSV_COLUMNS = ("bits", "hamming", "proxy_value", "direct_value",
                           "is_optimum")


def _csv_text(columns: Sequence[str], rows: Sequence[Mapping]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if row[c] is None else
                         (repr(row[c]) if isinstance(row[c], float) else row[c])
                         for c in columns])
    return buf.getvalue()


def grid_csv(reports: Sequence[GridRowReport]) -> str:
    return _csv_text(GRID_CSV_COLUMNS, [r.as_dict() for r in reports])


def correlation_csv(report: CorrelationReport) -> str:
    rows = [dict(r, is_optimum=int(r["is_optimum"])) for r in report.rows]
    return _csv_text(CORRELATION_CSV_COLUMNS, rows)


def _fmt2(value: float | None) -> str:
    if value is None:
        return ""
    if math.isinf(value):
        return "inf"
    return f"{value:.2f}"


def render_report(reports: Sequence[GridRowReport],
                  correlation: CorrelationReport | None = None) -> dict:
    """Deterministic CSV + JSON + markdown; rounding happens only here."""
    if not reports and correlation is None:
        raise ValueError("nothing to render")
    md = ["# Style partition grid", "",
          "| Variation | Size (px) | Misclass. | Mixture DSC | Mixture SDSC "
          "| Specific DSC | Specific SDSC | Improv. DSC % | Improv. SDSC % |",
          "|---|---|---|---|---|---|---|---|---|"]
    for r in reports:
        cells = (r.variation, r.magnitude_label,
                 "" if r.misclassified is None else str(r.misclassified),
                 _fmt2(r.mixture_dice), _fmt2(r.mixture_surface_dice),
                 _fmt2(r.specific_dice), _fmt2(r.specific_surface_dice),
                 _fmt2(r.improvement_dice), _fmt2(r.improvement_surface_dice))
        md.append("| " + " | ".join(cells) + " |")
    if correlation is not None:
        md += ["", "## Proxy/direct correlation", "",
               f"Pearson rho over {len(correlation.rows)} solutions: "
               f"{correlation.pearson_rho:.4f}",
               "", "The optimum row is flagged in `correlation.csv`."]
    doc: dict = {"rows": [r.as_dict() for r in reports]}
    if correlation is not None:
        doc["correlation"] = {"pearson_rho": correlation.pearson_rho,
                              "solutions": len(correlation.rows)}
    return {
        "csv": grid_csv(reports),
        "json": json.dumps(doc, sort_keys=True, indent=2,
                           allow_nan=True) + "\n",
        "markdown": "\n".join(md) + "\n",
    }
