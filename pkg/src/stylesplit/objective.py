"""Partition objectives: the cheap proxy score and the direct LOO score.

A partition splits the optimize set in two subgroups. The proxy objective
fits a model on each subgroup and scores it on the other (2 fits); the
direct objective runs leave-one-out within each subgroup (N fits). Both
normalize each scan's surface Dice by its mixture-baseline score M_i and
average the relative scores over all N scans. The proxy is *minimized*
(cross-subgroup generalization collapses when the split separates styles);
the direct objective is *maximized*.

Partitions are stored canonically (first bit 0) so a split and its
complement are the same object, and evaluations are cached by bit vector.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import learners
from .learners import LearnerSpec
from .masks import Scan
from .metrics import MetricConfig, ScorePair

BASELINE_FLOOR = 1e-3


class InvalidPartitionError(ValueError):
    """Partition cannot be evaluated (degenerate subgroup)."""


@dataclass(frozen=True)
class Partition:
    """Canonical binary split of an ordered scan list (first bit always 0)."""

    bits: tuple[int, ...]
    scan_order: tuple[str, ...]

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("partition bits must be 0/1")
        if len(bits) != len(self.scan_order):
            raise ValueError(
                f"{len(bits)} bits for {len(self.scan_order)} scans")
        if len(set(self.scan_order)) != len(self.scan_order):
            raise ValueError("scan_order contains duplicate ids")
        if bits and bits[0] == 1:
            bits = tuple(1 - b for b in bits)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "scan_order", tuple(self.scan_order))

    @classmethod
    def from_labels(cls, labels: Mapping[str, int] | Sequence[int],
                    scan_order: Sequence[str]) -> "Partition":
        if isinstance(labels, Mapping):
            bits = [labels[i] for i in scan_order]
        else:
            bits = list(labels)
        return cls(tuple(bits), tuple(scan_order))

    @property
    def n(self) -> int:
        return len(self.bits)

    @property
    def is_splitting(self) -> bool:
        """True when both subgroups are nonempty."""
        return 0 < sum(self.bits) < self.n

    def group_ids(self, which: int) -> tuple[str, ...]:
        return tuple(i for i, b in zip(self.scan_order, self.bits) if b == which)

    def complement(self) -> "Partition":
        return Partition(tuple(1 - b for b in self.bits), self.scan_order)

    def hamming(self, other: "Partition") -> int:
        """Distance under complement symmetry (both are canonical)."""
        if self.scan_order != other.scan_order:
            raise ValueError("partitions over different scan orders")
        d = sum(a != b for a, b in zip(self.bits, other.bits))
        return min(d, self.n - d)

    def bitstring(self) -> str:
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True)
class BaselineScores:
    """Per-scan mixture-LOO surface Dice M_i, floor-clamped away from 0."""

    scores: Mapping[str, float]
    floor: float = BASELINE_FLOOR

    def __post_init__(self) -> None:
        if self.floor <= 0:
            raise ValueError("floor must be positive")
        clamped = {}
        for scan_id, v in self.scores.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"baseline score for {scan_id} outside [0, 1]: {v}")
            clamped[scan_id] = max(float(v), self.floor)
        object.__setattr__(self, "scores", clamped)

    def __getitem__(self, scan_id: str) -> float:
        return self.scores[scan_id]

    def covers(self, ids: Iterable[str]) -> bool:
        return all(i in self.scores for i in ids)


@dataclass(frozen=True)
class EvaluationRecord:
    """One objective evaluation: raw and relative per-scan scores plus the
    averaged value and the number of learner fits it cost."""

    partition: Partition
    kind: str  # "proxy" or "direct"
    value: float
    raw: Mapping[str, float]       # S_i (surface Dice)
    relative: Mapping[str, float]  # R_i = S_i / M_i
    fits: int

    def __post_init__(self) -> None:
        if self.kind not in ("proxy", "direct"):
            raise ValueError(f"unknown evaluation kind {self.kind!r}")
        if any(v < 0 for v in self.relative.values()):
            raise ValueError("relative scores must be >= 0")


def loo_pairs(spec: LearnerSpec, scans: Sequence[Scan],
              metric_cfg: MetricConfig | None = None) -> dict[str, ScorePair]:
    """Leave-one-out over the given scans: fit on all-but-one, score the
    held-out scan. Requires >= 2 scans."""
    if len(scans) < 2:
        raise ValueError("leave-one-out needs at least 2 scans")
    scans = sorted(scans, key=lambda s: s.id)
    out: dict[str, ScorePair] = {}
    for i, held in enumerate(scans):
        train = scans[:i] + scans[i + 1:]
        model = learners.fit(spec, train)
        try:
            out[held.id] = learners.scan_score(model, held, metric_cfg)
        except Exception as err:
            raise RuntimeError(f"scoring scan {held.id!r} failed") from err
    return out


def compute_baseline(spec: LearnerSpec, scans: Sequence[Scan],
                     metric_cfg: MetricConfig | None = None,
                     floor: float = BASELINE_FLOOR) -> BaselineScores:
    """Mixture-baseline M_i: LOO surface Dice over the full optimize set."""
    pairs = loo_pairs(spec, scans, metric_cfg)
    return BaselineScores({i: p.surface_dice for i, p in pairs.items()}, floor=floor)


class Evaluator:
    """Evaluates partitions, caches by bit vector, and logs true
    evaluations as JSON lines.

    The log line format is {"bits", "kind", "value", "relative", "fits",
    "seed"} with sorted keys, so identical runs produce byte-identical
    logs. Cache hits are not logged and cost nothing.
    """

    def __init__(self, spec: LearnerSpec, scans: Sequence[Scan],
                 baseline: BaselineScores,
                 metric_cfg: MetricConfig | None = None,
                 log_path: str | Path | None = None,
                 seed: int | None = None):
        if spec.pretrain_state is None:
            raise ValueError("evaluator needs a pretrained learner spec")
        self.spec = spec
        self.scans = sorted(scans, key=lambda s: s.id)
        self.by_id = {s.id: s for s in self.scans}
        self.scan_order = tuple(s.id for s in self.scans)
        if not baseline.covers(self.scan_order):
            missing = [i for i in self.scan_order if i not in baseline.scores]
            raise ValueError(f"baseline does not cover scans: {missing}")
        self.baseline = baseline
        self.metric_cfg = metric_cfg or MetricConfig()
        self.log_path = Path(log_path) if log_path is not None else None
        self.seed = seed
        self.cache: dict[tuple[str, tuple[int, ...]], EvaluationRecord] = {}
        self.history: list[EvaluationRecord] = []
        self.true_evaluations = 0

    def partition(self, bits: Sequence[int]) -> Partition:
        return Partition(tuple(bits), self.scan_order)

    def _check(self, p: Partition) -> None:
        if p.scan_order != self.scan_order:
            raise InvalidPartitionError("partition indexes a different scan set")

    def _log(self, rec: EvaluationRecord) -> None:
        if self.log_path is None:
            return
        line = json.dumps({
            "bits": rec.partition.bitstring(),
            "kind": rec.kind,
            "value": rec.value,
            "relative": {i: rec.relative[i] for i in sorted(rec.relative)},
            "fits": rec.fits,
            "seed": self.seed,
        }, sort_keys=True)
        with open(self.log_path, "a") as fh:
            fh.write(line + "\n")

    def _finish(self, p: Partition, kind: str, raw: dict[str, float],
                fits: int) -> EvaluationRecord:
        relative = {i: raw[i] / self.baseline[i] for i in self.scan_order}
        value = sum(relative[i] for i in self.scan_order) / p.n
        rec = EvaluationRecord(partition=p, kind=kind, value=value,
                               raw=raw, relative=relative, fits=fits)
        self.cache[(kind, p.bits)] = rec
        self.history.append(rec)
        self.true_evaluations += 1
        self._log(rec)
        return rec

    def proxy(self, p: Partition) -> EvaluationRecord:
        """Fit on each subgroup, score the other; 2 fits."""
        self._check(p)
        hit = self.cache.get(("proxy", p.bits))
        if hit is not None:
            return hit
        if not p.is_splitting:
            raise InvalidPartitionError("proxy objective needs two nonempty subgroups")
        raw: dict[str, float] = {}
        for side in (0, 1):
            train = [self.by_id[i] for i in p.group_ids(side)]
            model = learners.fit(self.spec, train)
            for i in p.group_ids(1 - side):
                raw[i] = learners.scan_score(model, self.by_id[i],
                                             self.metric_cfg).surface_dice
        return self._finish(p, "proxy", raw, fits=2)

    def direct(self, p: Partition) -> EvaluationRecord:
        """LOO within each subgroup; N fits."""
        self._check(p)
        hit = self.cache.get(("direct", p.bits))
        if hit is not None:
            return hit
        sizes = (len(p.group_ids(0)), len(p.group_ids(1)))
        if min(sizes) < 2:
            raise InvalidPartitionError(
                f"direct objective needs both subgroups >= 2 scans, got {sizes}")
        raw: dict[str, float] = {}
        for side in (0, 1):
            group = [self.by_id[i] for i in p.group_ids(side)]
            for i, pair in loo_pairs(self.spec, group, self.metric_cfg).items():
                raw[i] = pair.surface_dice
        return self._finish(p, "direct", raw, fits=p.n)

    def evaluate_batch(self, partitions: Sequence[Partition],
                       kind: str = "proxy") -> list[EvaluationRecord]:
        """Evaluate many partitions; results merge in submission order and
        duplicates are served from the cache."""
        method = self.proxy if kind == "proxy" else self.direct
        return [method(p) for p in partitions]
