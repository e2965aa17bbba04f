"""Acceptance gate: the ten study-level criteria, one test and one printed
verdict line each.

These run the real pipeline at desk scale (default experiment config:
128x128 phantoms, 6 slices, tolerance 3.6 mm, 250-evaluation budget), so
the module is slow — around an hour single-core, dominated by criteria 5
and 10. Expensive artifacts are shared: the default 9-row grid is run once
and reused by criteria 6, 9, and 10.
"""
from __future__ import annotations

import itertools
import time

import numpy as np
import pytest

from stylesplit.harness import (ExperimentConfig, GridRow, render_report,
                                run_correlation, run_grid)
from stylesplit.learners import pretrain
from stylesplit.masks import Mask
from stylesplit.metrics import MetricConfig, dice, score_scan, surface_dice
from stylesplit.objective import BaselineScores, loo_pairs
from stylesplit.optimizer import (misclassification, optimize_partition,
                                  recursive_partition)
from stylesplit.simulate import StyleSpec, build_cohort, build_experiment_cohort

import oracles

SPACING = (0.6, 0.6)

# every optimizer run in this module records (true evaluations, budget)
# here and asserts the contract on the spot; criterion 7 reports over it
BUDGET_LEDGER: list[tuple[int, int]] = []


def _verdict(capsys, num: int, ok: bool, label: str, detail: str) -> None:
    with capsys.disabled():
        print(f"\ncriterion {num:2d} {'PASS' if ok else 'FAIL'}  "
              f"{label}  [{detail}]")


def _checked_optimize(spec, scans, baseline, cfg, metric_cfg):
    result = optimize_partition(spec, scans, baseline, cfg,
                                metric_cfg=metric_cfg)
    used = result.evaluator.true_evaluations
    BUDGET_LEDGER.append((used, cfg.max_true_evaluations))
    assert used <= cfg.max_true_evaluations, "budget contract violated"
    return result


def _desk_row_misclassification(row: GridRow, seed: int,
                                cfg: ExperimentConfig) -> int:
    """One desk-scale two-style row: cohort, pretrain, baseline, optimize."""
    cohort = build_experiment_cohort(seed, list(row.style_specs()),
                                     "two-style", cfg.slices_per_scan)
    spec = pretrain(cfg.learner, cohort.pretrain_scans(), cfg.metric)
    scans = cohort.optimize_scans()
    pairs = loo_pairs(spec, scans, cfg.metric)
    baseline = BaselineScores({i: p.surface_dice for i, p in pairs.items()},
                              floor=cfg.baseline_floor)
    result = _checked_optimize(spec, scans, baseline, cfg.ga, cfg.metric)
    groups = [result.best.group_ids(0), result.best.group_ids(1)]
    labels = {i: cohort.style_labels[i] for i in cohort.optimize_ids}
    return misclassification(groups, labels)


@pytest.fixture(scope="module")
def default_cfg() -> ExperimentConfig:
    return ExperimentConfig()


@pytest.fixture(scope="module")
def grid_a(default_cfg, tmp_path_factory):
    """The full default 9-row grid, run once and shared."""
    out = tmp_path_factory.mktemp("grid_a")
    t0 = time.time()
    reports = run_grid(default_cfg, out, jobs=1)
    (out / "grid.csv").write_text(render_report(reports)["csv"])
    return reports, out, time.time() - t0


def _row_report(reports, variation: str, magnitude: tuple[float, float]):
    for r in reports:
        if r.variation == variation and r.magnitude == magnitude:
            return r
    raise KeyError((variation, magnitude))


def test_criterion_01_metric_identities(capsys):
    t0 = time.time()
    rng = np.random.default_rng(1)
    ok = True
    for _ in range(100):
        m = Mask(oracles.random_blob(rng, 24, 24), spacing=SPACING)
        ok &= dice(m, m) == 1.0
        ok &= score_scan([m], [m], MetricConfig()).surface_dice == 1.0
    # disjoint, far beyond any tolerance: opposite corners of the grid
    a = np.zeros((24, 24), dtype=bool)
    b = np.zeros((24, 24), dtype=bool)
    a[1:4, 1:4] = True
    b[20:23, 20:23] = True
    ga, gb = Mask(a, spacing=SPACING), Mask(b, spacing=SPACING)
    ok &= dice(ga, gb) == 0.0
    ok &= score_scan([ga], [gb], MetricConfig()).surface_dice == 0.0
    elapsed = time.time() - t0
    ok &= elapsed < 10.0
    _verdict(capsys, 1, ok, "metric identities on 100 random masks",
             f"{elapsed:.1f}s")
    assert ok


def test_criterion_02_surface_dice_matches_brute_force(capsys):
    t0 = time.time()
    rng = np.random.default_rng(2)
    cfg = MetricConfig()
    mismatches = 0
    for _ in range(50):
        g = oracles.random_blob(rng, 32, 32, allow_empty=True)
        p = oracles.random_blob(rng, 32, 32, allow_empty=True)
        fast = surface_dice(Mask(g, spacing=SPACING),
                            Mask(p, spacing=SPACING), cfg)
        hits, total = oracles.brute_surface_dice_counts(
            g, p, SPACING[0], SPACING[1], cfg.tolerance_mm)
        brute = 1.0 if total == 0 else hits / total
        mismatches += fast != brute
    elapsed = time.time() - t0
    ok = mismatches == 0 and elapsed < 30.0
    _verdict(capsys, 2, ok, "surface-Dice equals all-pairs brute force "
             "on 50 random 32x32 pairs", f"{elapsed:.1f}s")
    assert ok


def test_criterion_03_surface_dice_monotone_in_tolerance(capsys):
    t0 = time.time()
    rng = np.random.default_rng(3)
    tolerances = (0.1, 0.3, 0.5, 0.7, 1.0, 2.0)
    violations = 0
    for _ in range(20):
        g = Mask(oracles.random_blob(rng, 32, 32), spacing=SPACING)
        p = Mask(oracles.random_blob(rng, 32, 32), spacing=SPACING)
        scores = [surface_dice(g, p, MetricConfig(tolerance_mm=t))
                  for t in tolerances]
        violations += any(b < a for a, b in zip(scores, scores[1:]))
    ok = violations == 0
    _verdict(capsys, 3, ok, "surface-Dice non-decreasing in tolerance, "
             "20 pairs x 6 tolerances", f"{time.time() - t0:.1f}s")
    assert ok


def test_criterion_04_correlation_study(default_cfg, capsys):
    t0 = time.time()
    report = run_correlation(default_cfg)
    rows = report.rows
    opt = next(r for r in rows if r["is_optimum"])
    elapsed = time.time() - t0
    ok = (len(rows) == 51
          and opt["proxy_value"] == min(r["proxy_value"] for r in rows)
          and opt["direct_value"] == max(r["direct_value"] for r in rows)
          and report.pearson_rho <= -0.7
          and elapsed < 600.0)
    _verdict(capsys, 4, ok, "true partition extremal on both objectives "
             "over 51 solutions",
             f"rho={report.pearson_rho:.3f}, {elapsed:.0f}s")
    assert ok


def test_criterion_05_four_rows_zero_misclassification(default_cfg, capsys):
    t0 = time.time()
    rows = (GridRow("erosion/dilation", (10, 4)),
            GridRow("up/down shift", (10, 4)),
            GridRow("bottom over-/under-segmentation", (10, 4)),
            GridRow("top over-/under-segmentation", (10, 4)))
    seeds = (201, 202, 203, 204, 205)
    outcome = {}
    for row in rows:
        zeros = sum(_desk_row_misclassification(row, seed, default_cfg) == 0
                    for seed in seeds)
        outcome[row.variation] = zeros
    ok = all(z >= 4 for z in outcome.values())
    detail = ", ".join(f"{v.split('/')[0].split()[0]} {z}/5"
                       for v, z in outcome.items())
    _verdict(capsys, 5, ok, "zero misclassification on the four N(10,4) "
             "rows (>=4/5 seeds)", f"{detail}, {time.time() - t0:.0f}s")
    assert ok


def test_criterion_06_improvement_ordering(grid_a, capsys):
    reports, _, elapsed = grid_a
    two_style = [r for r in reports
                 if len(GridRow(r.variation, r.magnitude).operations) == 2]
    positive = all(r.improvement_surface_dice > 0 for r in two_style)
    ero_hi = _row_report(reports, "erosion/dilation", (10.0, 4.0))
    ero_lo = _row_report(reports, "erosion/dilation", (5.0, 1.0))
    shift_hi = _row_report(reports, "up/down shift", (10.0, 4.0))
    shift_lo = _row_report(reports, "up/down shift", (5.0, 1.0))
    ordered = (ero_hi.improvement_surface_dice
               > ero_lo.improvement_surface_dice
               and shift_hi.improvement_surface_dice
               > shift_lo.improvement_surface_dice)
    floor = ero_hi.improvement_surface_dice >= 5.0
    ok = len(two_style) == 8 and positive and ordered and floor
    _verdict(capsys, 6, ok, "surface-Dice improvement positive on all 8 "
             "two-style rows, larger magnitude => larger improvement",
             f"ero {ero_hi.improvement_surface_dice:.1f}%>"
             f"{ero_lo.improvement_surface_dice:.1f}%, shift "
             f"{shift_hi.improvement_surface_dice:.1f}%>"
             f"{shift_lo.improvement_surface_dice:.1f}%, grid {elapsed:.0f}s")
    assert ok


def test_criterion_07_budget_contract(capsys):
    ok = bool(BUDGET_LEDGER) and all(used <= budget
                                     for used, budget in BUDGET_LEDGER)
    worst = max((used for used, _ in BUDGET_LEDGER), default=0)
    _verdict(capsys, 7, ok, "true-evaluation budget respected on every "
             "optimizer run so far",
             f"{len(BUDGET_LEDGER)} runs, max used {worst}")
    assert ok


def test_criterion_08_small_instance_global_optimality(default_cfg, capsys):
    t0 = time.time()
    specs = [StyleSpec("erosion", 10, 4), StyleSpec("dilation", 10, 4)]
    hits = 0
    for seed in range(301, 311):
        cohort = build_cohort(seed, specs, n_scans=12, pretrain_count=4,
                              slices_per_scan=4)
        spec = pretrain(default_cfg.learner, cohort.pretrain_scans(),
                        default_cfg.metric)
        scans = cohort.optimize_scans()
        pairs = loo_pairs(spec, scans, default_cfg.metric)
        baseline = BaselineScores(
            {i: p.surface_dice for i, p in pairs.items()},
            floor=default_cfg.baseline_floor)
        result = _checked_optimize(spec, scans, baseline, default_cfg.ga,
                                   default_cfg.metric)
        ev = result.evaluator
        brute = min(ev.proxy(p).value for p in
                    (ev.partition(bits) for bits in
                     itertools.product((0, 1), repeat=8))
                    if p.is_splitting)
        hits += result.record.value == brute
    elapsed = time.time() - t0
    ok = hits >= 9.5 and elapsed < 300.0  # >= 95% of 10 runs
    _verdict(capsys, 8, ok, "global minimum found on 10 exhaustively "
             "enumerable 8-scan cohorts", f"{hits}/10, {elapsed:.0f}s")
    assert ok


def test_criterion_09_recursive_partitioner(grid_a, default_cfg, capsys):
    t0 = time.time()
    reports, _, _ = grid_a
    three = _row_report(reports,
                        "top over-/top under-/bottom under-segmentation",
                        (10.0, 4.0))
    # misclassified is only reported when the leaf count matches the style
    # count, so non-None means exactly 3 leaves
    three_ok = three.misclassified is not None and three.misclassified <= 3

    cohort = build_cohort(401, [StyleSpec("erosion", 10, 1)], n_scans=24,
                          pretrain_count=4,
                          slices_per_scan=default_cfg.slices_per_scan)
    spec = pretrain(default_cfg.learner, cohort.pretrain_scans(),
                    default_cfg.metric)
    tree = recursive_partition(spec, cohort.optimize_scans(), default_cfg.ga,
                               metric_cfg=default_cfg.metric,
                               baseline_floor=default_cfg.baseline_floor)
    one_ok = tree.is_leaf and len(tree.leaf_groups()) == 1
    ok = three_ok and one_ok
    _verdict(capsys, 9, ok, "three-style cohort -> 3 leaves (<=3 wrong), "
             "one-style cohort -> 1 leaf",
             f"three-style mis={three.misclassified}, one-style "
             f"leaves={len(tree.leaf_groups())}, {time.time() - t0:.0f}s")
    assert ok


def test_criterion_10_grid_determinism(grid_a, default_cfg,
                                       tmp_path_factory, capsys):
    t0 = time.time()
    _, out_a, _ = grid_a
    out_b = tmp_path_factory.mktemp("grid_b")
    reports_b = run_grid(default_cfg, out_b, jobs=1)
    (out_b / "grid.csv").write_text(render_report(reports_b)["csv"])
    same_csv = ((out_a / "grid.csv").read_bytes()
                == (out_b / "grid.csv").read_bytes())
    same_log = ((out_a / "evals.jsonl").read_bytes()
                == (out_b / "evals.jsonl").read_bytes())
    ok = same_csv and same_log
    _verdict(capsys, 10, ok, "grid rerun byte-identical",
             f"grid.csv {'==' if same_csv else '!='}, evals.jsonl "
             f"{'==' if same_log else '!='}, {time.time() - t0:.0f}s")
    assert ok
