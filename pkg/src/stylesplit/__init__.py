"""stylesplit: partition segmentation datasets into consistent styles.

The package splits a delineated cohort into subgroups of consistent
segmentation style by minimizing a proxy for cross-subgroup
generalization with a budgeted genetic algorithm, and ships the phantom
simulator, metrics, learners, and experiment harness used to study the
approach end to end.
"""
from .cohort_io import load_cohort, save_cohort
from .harness import (CorrelationReport, ExperimentConfig, GridRow,
                      GridRowReport, render_report, run_correlation, run_grid,
                      run_grid_row)
from .learners import (FittedModel, LearnerImpl, LearnerSpec, StyleParams,
                       fit, predict, pretrain, register_learner, scan_score)
from .masks import Mask, Scan, Slice
from .metrics import MetricConfig, ScorePair, dice, score_scan, surface_dice
from .objective import (BaselineScores, EvaluationRecord, Evaluator,
                        Partition, compute_baseline, loo_pairs)
from .optimizer import (GAConfig, OptimizeResult, PartitionTreeNode,
                        misclassification, optimize_partition,
                        recursive_partition)
from .simulate import (OPERATIONS, StyledCohort, StyleSpec, apply_style,
                       build_cohort, build_experiment_cohort,
                       generate_phantom)

__version__ = "0.1.0"

__all__ = [
    "BaselineScores", "CorrelationReport", "EvaluationRecord", "Evaluator",
    "ExperimentConfig", "FittedModel", "GAConfig", "GridRow", "GridRowReport",
    "LearnerImpl", "LearnerSpec", "Mask", "MetricConfig", "OPERATIONS",
    "OptimizeResult", "Partition", "PartitionTreeNode", "Scan", "ScorePair",
    "Slice", "StyleParams", "StyleSpec", "StyledCohort", "apply_style",
    "build_cohort", "build_experiment_cohort", "compute_baseline", "dice",
    "fit", "generate_phantom", "load_cohort", "loo_pairs",
    "misclassification", "optimize_partition", "predict", "pretrain",
    "recursive_partition", "register_learner", "render_report",
    "run_correlation", "run_grid", "run_grid_row", "save_cohort",
    "scan_score", "score_scan", "surface_dice", "__version__",
]
