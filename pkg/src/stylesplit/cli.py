"""Command-line entry points.

Subcommands cover the full study workflow:

  synth      generate a styled phantom cohort into a run directory
  partition  optimize a partition of a cohort's optimize set
  grid       run the variation grid and write grid.csv / report.md
  correlate  run the proxy/direct correlation study
  report     re-render report.md from a run directory's artifacts

Every subcommand reads one JSON config (``--config``); individual flags
override config fields. Outputs land under the ``--out`` run directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .cohort_io import load_cohort, save_cohort
from .harness import (CorrelationReport, ExperimentConfig, GridRowReport,
                      correlation_csv, render_report, run_correlation,
                      run_grid)
from .learners import pretrain
from .objective import BaselineScores, loo_pairs
from .optimizer import misclassification, optimize_partition, recursive_partition
from .simulate import build_experiment_cohort

log = logging.getLogger("stylesplit.cli")


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = (ExperimentConfig.from_json(args.config) if args.config
           else ExperimentConfig())
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "tolerance_mm", None) is not None:
        cfg = replace(cfg, metric=replace(cfg.metric,
                                          tolerance_mm=args.tolerance_mm))
    if getattr(args, "budget", None) is not None:
        cfg = replace(cfg, ga=replace(cfg.ga,
                                      max_true_evaluations=args.budget))
    if getattr(args, "warmup", None) is not None:
        cfg = replace(cfg, ga=replace(cfg.ga, warmup_evaluations=args.warmup))
    return cfg


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _build_cohort(cfg: ExperimentConfig):
    return build_experiment_cohort(cfg.seed, list(cfg.styles), cfg.layout,
                                   cfg.slices_per_scan)


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    cohort = _build_cohort(cfg)
    save_cohort(out, cohort)
    print(f"wrote {len(cohort.scans)} scans ({cfg.layout}, seed {cfg.seed}) "
          f"to {out}")
    return 0


def _tree_as_dict(node) -> dict:
    doc: dict = {"ids": list(node.ids)}
    if not node.is_leaf:
        doc["improvement"] = node.improvement
        doc["children"] = [_tree_as_dict(c) for c in node.children]
    return doc


def cmd_partition(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    if args.cohort:
        cohort = load_cohort(args.cohort)
    else:
        cohort = _build_cohort(cfg)
    spec = pretrain(cfg.learner, cohort.pretrain_scans(), cfg.metric)
    scans = cohort.optimize_scans()
    labels = {i: cohort.style_labels[i] for i in cohort.optimize_ids}
    evals_path = out / "evals.jsonl"
    evals_path.unlink(missing_ok=True)

    doc: dict = {"config": cfg.to_dict(), "recursive": bool(args.recursive)}
    if args.recursive:
        tree = recursive_partition(spec, scans, cfg.ga, metric_cfg=cfg.metric,
                                   min_group=cfg.recursive_min_group,
                                   min_improvement=cfg.recursive_min_improvement,
                                   expected_styles=args.styles,
                                   baseline_floor=cfg.baseline_floor,
                                   log_path=evals_path)
        groups = tree.leaf_groups()
        doc["tree"] = _tree_as_dict(tree)
        doc["groups"] = [list(g) for g in groups]
        summary = f"{len(groups)} groups"
    else:
        pairs = loo_pairs(spec, scans, cfg.metric)
        baseline = BaselineScores(
            {i: p.surface_dice for i, p in pairs.items()},
            floor=cfg.baseline_floor)
        result = optimize_partition(spec, scans, baseline, cfg.ga,
                                    metric_cfg=cfg.metric, log_path=evals_path)
        groups = [result.best.group_ids(0), result.best.group_ids(1)]
        doc["groups"] = [list(g) for g in groups]
        doc["best"] = {
            "bits": result.best.bitstring(),
            "value": result.record.value,
            "stop_reason": result.stop_reason,
            "true_evaluations": result.evaluator.true_evaluations,
            "generations": result.generations,
        }
        summary = (f"G = {result.record.value:.6f} after "
                   f"{result.evaluator.true_evaluations} evaluations "
                   f"({result.stop_reason})")
    if len(groups) == len(set(labels.values())):
        doc["misclassified"] = misclassification(groups, labels)
        summary += f", misclassified {doc['misclassified']}"
    if evals_path.exists():
        doc["evaluations"] = [json.loads(line) for line in
                              evals_path.read_text().splitlines()]
    (out / "run.json").write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n")
    print(f"partition: {summary}; artifacts in {out}")
    return 0


def cmd_grid(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    reports = run_grid(cfg, out, jobs=args.jobs)
    rendered = render_report(reports)
    (out / "grid.csv").write_text(rendered["csv"])
    (out / "grid.json").write_text(rendered["json"])
    (out / "report.md").write_text(rendered["markdown"])
    print(rendered["markdown"], end="")
    print(f"grid artifacts in {out}")
    return 0


def cmd_correlate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    report = run_correlation(cfg)
    (out / "correlation.csv").write_text(correlation_csv(report))
    print(f"{len(report.rows)} solutions, Pearson rho = "
          f"{report.pearson_rho:.4f}; wrote {out / 'correlation.csv'}")
    return 0


_MAGNITUDE_RE = re.compile(r"N\(([^,]+),([^)]+)\)")


def _load_grid_reports(path: Path) -> list[GridRowReport]:
    doc = json.loads(path.read_text())
    reports = []
    for row in doc["rows"]:
        m = _MAGNITUDE_RE.fullmatch(row["magnitude"])
        if not m:
            raise ValueError(f"bad magnitude label {row['magnitude']!r}")
        reports.append(GridRowReport(
            variation=row["variation"],
            magnitude=(float(m.group(1)), float(m.group(2))),
            misclassified=row["misclassified"],
            mixture_dice=row["mixture_dice"],
            mixture_surface_dice=row["mixture_surface_dice"],
            specific_dice=row["specific_dice"],
            specific_surface_dice=row["specific_surface_dice"]))
    return reports


def _load_correlation(path: Path) -> CorrelationReport:
    rows = []
    header, *lines = path.read_text().splitlines()
    assert header.split(",")[0] == "bits"
    for line in lines:
        bits, hamming, proxy, direct, is_opt = line.split(",")
        rows.append({"bits": bits, "hamming": int(hamming),
                     "proxy_value": float(proxy),
                     "direct_value": float(direct),
                     "is_optimum": bool(int(is_opt))})
    rho = float(np.corrcoef([r["proxy_value"] for r in rows],
                            [r["direct_value"] for r in rows])[0, 1])
    return CorrelationReport(rows=tuple(rows), pearson_rho=rho)


def cmd_report(args: argparse.Namespace) -> int:
    run = Path(args.out)
    grid_path, corr_path = run / "grid.json", run / "correlation.csv"
    reports = _load_grid_reports(grid_path) if grid_path.exists() else []
    correlation = _load_correlation(corr_path) if corr_path.exists() else None
    if not reports and correlation is None:
        print(f"nothing to report in {run} (no grid.json or correlation.csv)",
              file=sys.stderr)
        return 1
    rendered = render_report(reports, correlation)
    (run / "report.md").write_text(rendered["markdown"])
    print(rendered["markdown"], end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stylesplit",
        description="Partition segmentation datasets into style-consistent "
                    "subgroups and reproduce the variation-grid study.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, seed: bool = True) -> None:
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--out", default="run",
                       help="run directory for artifacts (default: ./run)")
        if seed:
            p.add_argument("--seed", type=int, help="override config seed")
            p.add_argument("--tolerance-mm", type=float, dest="tolerance_mm",
                           help="override metric tolerance")

    p = sub.add_parser("synth", help="generate a styled phantom cohort")
    common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("partition", help="optimize a style partition")
    common(p)
    p.add_argument("--cohort", help="cohort directory from `synth` "
                                    "(default: synthesize from config)")
    p.add_argument("--budget", type=int,
                   help="override the true-evaluation budget")
    p.add_argument("--warmup", type=int,
                   help="override the warm-up evaluation count")
    p.add_argument("--recursive", action="store_true",
                   help="recursive partitioning into >= 2 groups")
    p.add_argument("--styles", type=int, default=None,
                   help="expected style count for --recursive")
    p.set_defaults(fn=cmd_partition)

    p = sub.add_parser("grid", help="run the full variation grid")
    common(p)
    p.add_argument("--jobs", type=int, default=None,
                   help=f"concurrent rows (default: config, or "
                        f"${harness.JOBS_ENV_VAR})")
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("correlate", help="proxy/direct correlation study")
    common(p)
    p.set_defaults(fn=cmd_correlate)

    p = sub.add_parser("report", help="re-render report.md from artifacts")
    common(p, seed=False)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
