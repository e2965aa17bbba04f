"""Partition search: a gene-pool optimal-mixing GA over binary splits,
plus the recursive scheme that stacks binary splits into a style tree.

The GA minimizes the proxy objective under a strict budget of true
evaluations. A warm-up stage evaluates random canonical partitions
(exhaustively, when the whole space fits inside the warm-up budget); the
generational loop then recombines population members along a linkage tree
learned from pairwise mutual information, screening offspring with a
Hamming-distance k-NN surrogate so only promising candidates spend budget.
The endgame belongs to the certificate: once the remaining budget only
covers about one Hamming-1 sweep, the incumbent's whole neighborhood is
truly evaluated (best-predicted moves first, adopting improvements), so a
run either proves its answer locally optimal or dies descending.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.cluster.hierarchy import linkage

from .learners import LearnerSpec
from .masks import Scan
from .metrics import MetricConfig
from .objective import (BASELINE_FLOOR, BaselineScores, EvaluationRecord,
                        Evaluator, Partition, compute_baseline, loo_pairs)


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 32
    max_true_evaluations: int = 250
    warmup_evaluations: int = 200
    surrogate: str = "hamming-knn"  # or "off"
    surrogate_k: int = 5
    seed: int = 0
    stall_generations: int = 10

    def __post_init__(self) -> None:
        if self.warmup_evaluations > self.max_true_evaluations:
            raise ValueError("warm-up budget exceeds the true-evaluation budget")
        if self.warmup_evaluations < 1 or self.max_true_evaluations < 1:
            raise ValueError("budgets must be positive")
        if self.population_size < 4 or self.population_size % 2:
            raise ValueError("population size must be even and >= 4")
        if self.surrogate not in ("off", "hamming-knn"):
            raise ValueError(f"unknown surrogate {self.surrogate!r}")
        if self.surrogate_k < 1:
            raise ValueError("surrogate k must be >= 1")
        if self.stall_generations < 1:
            raise ValueError("stall_generations must be >= 1")


def _pair_mutual_information(columns: np.ndarray) -> np.ndarray:
    """Pairwise MI (nats) between binary columns of a population matrix."""
    pop, n = columns.shape
    x = columns.astype(np.float64)
    p1 = x.mean(axis=0)
    p11 = (x.T @ x) / pop
    mi = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            pa, pb, pab = p1[a], p1[b], p11[a, b]
            cells = (
                (pab, pa * pb),
                (pa - pab, pa * (1 - pb)),
                (pb - pab, (1 - pa) * pb),
                (1 - pa - pb + pab, (1 - pa) * (1 - pb)),
            )
            total = 0.0
            for joint, indep in cells:
                if joint > 1e-12 and indep > 1e-12:
                    total += joint * math.log(joint / indep)
            mi[a, b] = mi[b, a] = max(total, 0.0)
    return mi


@dataclass(frozen=True)
class LinkageModel:
    """Mutual-information UPGMA tree over bit positions.

    `subsets` holds every tree node except the root: all singletons plus
    each internal cluster, in merge order. Copying a donor's bits over one
    subset is one optimal-mixing step.
    """

    n: int
    subsets: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        full = frozenset(range(self.n))
        seen = [frozenset(s) for s in self.subsets]
        if any(not s or s == full for s in seen):
            raise ValueError("subsets must be proper nonempty subsets")
        singles = {s for s in seen if len(s) == 1}
        if len(singles) != self.n:
            raise ValueError("every position must appear as a singleton leaf")

    @classmethod
    def from_population(cls, genotypes: Sequence[Sequence[int]]) -> "LinkageModel":
        mat = np.asarray(genotypes, dtype=np.uint8)
        n = mat.shape[1]
        subsets: list[tuple[int, ...]] = [(i,) for i in range(n)]
        if n > 2:
            mi = _pair_mutual_information(mat)
            # UPGMA merges the most-similar clusters first; average linkage
            # on (log 2 - MI) keeps that ordering as a distance.
            dist = math.log(2.0) - mi
            condensed = dist[np.triu_indices(n, k=1)]
            merge = linkage(np.clip(condensed, 0.0, None), method="average")
            clusters: list[tuple[int, ...]] = [(i,) for i in range(n)]
            for a, b, _, _ in merge:
                joined = tuple(sorted(clusters[int(a)] + clusters[int(b)]))
                clusters.append(joined)
                if len(joined) < n:  # root is excluded from mixing
                    subsets.append(joined)
        return cls(n=n, subsets=tuple(subsets))


@dataclass
class OptimizeResult:
    best: Partition
    record: EvaluationRecord
    evaluator: Evaluator
    generations: int
    stop_reason: str
    config: GAConfig

    @property
    def history(self) -> list[EvaluationRecord]:
        return self.evaluator.history


def _canonical_int_to_bits(c: int, n: int) -> tuple[int, ...]:
    """Map 1 <= c < 2^(n-1) to a canonical splitting bit vector."""
    return (0,) + tuple((c >> i) & 1 for i in range(n - 1))


def _sample_warmup(n: int, count: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    total = 2 ** (n - 1) - 1  # canonical vectors with both subgroups nonempty
    if total <= count:
        return [_canonical_int_to_bits(c, n) for c in range(1, total + 1)]
    if total <= 2_000_000:
        picks = rng.choice(total, size=count, replace=False) + 1
        return [_canonical_int_to_bits(int(c), n) for c in picks]
    chosen: list[int] = []
    seen: set[int] = set()
    while len(chosen) < count:
        c = int(rng.integers(1, total + 1))
        if c not in seen:
            seen.add(c)
            chosen.append(c)
    return [_canonical_int_to_bits(c, n) for c in chosen]


def _hamming_sym(a: Sequence[int], b: Sequence[int]) -> int:
    d = sum(x != y for x, y in zip(a, b))
    return min(d, len(a) - d)


class _Knn:
    """Predicts proxy values as the mean of the k Hamming-nearest truly
    evaluated solutions (ties broken by evaluation order)."""

    def __init__(self, k: int):
        self.k = k
        self.points: list[tuple[tuple[int, ...], float]] = []

    def add(self, bits: tuple[int, ...], value: float) -> None:
        self.points.append((bits, value))

    def predict(self, bits: tuple[int, ...]) -> float:
        ranked = sorted(
            (( _hamming_sym(bits, b), i) for i, (b, _) in enumerate(self.points)),
        )
        top = ranked[: self.k]
        return sum(self.points[i][1] for _, i in top) / len(top)


def optimize_partition(spec: LearnerSpec, scans: Sequence[Scan],
                       baseline: BaselineScores,
                       cfg: GAConfig | None = None,
                       metric_cfg: MetricConfig | None = None,
                       log_path=None) -> OptimizeResult:
    """Minimize the proxy objective over binary partitions of `scans`."""
    cfg = cfg or GAConfig()
    if len(scans) < 4:
        raise ValueError("partition optimization needs at least 4 scans")
    ev = Evaluator(spec, scans, baseline, metric_cfg=metric_cfg,
                   log_path=log_path, seed=cfg.seed)
    n = len(ev.scan_order)
    rng = np.random.default_rng(cfg.seed)
    knn = _Knn(cfg.surrogate_k)

    best_bits: tuple[int, ...] | None = None
    best_value = math.inf

    def true_eval(bits: tuple[int, ...]) -> EvaluationRecord | None:
        """Evaluate canonically; None when the budget is exhausted."""
        nonlocal best_bits, best_value
        p = ev.partition(bits)
        hit = ev.cache.get(("proxy", p.bits))
        if hit is None:
            if ev.true_evaluations >= cfg.max_true_evaluations:
                return None
            rec = ev.proxy(p)
            knn.add(rec.partition.bits, rec.value)
        else:
            rec = hit
        if rec.value < best_value:  # ties keep the earlier solution
            best_bits, best_value = rec.partition.bits, rec.value
        return rec

    # ---- warm-up: random canonical solutions, exhaustive when possible
    warmup = _sample_warmup(n, cfg.warmup_evaluations, rng)
    exhaustive = len(warmup) == 2 ** (n - 1) - 1
    for bits in warmup:
        if true_eval(bits) is None:
            break

    def finish(generations: int, reason: str) -> OptimizeResult:
        rec = ev.cache[("proxy", best_bits)]
        return OptimizeResult(best=rec.partition, record=rec, evaluator=ev,
                              generations=generations, stop_reason=reason,
                              config=cfg)

    def certify() -> str:
        """Truly evaluate the incumbent's Hamming-1 moves, best-predicted
        first, adopting any improvement found (monotone elitism). A full
        pass without improvement certifies a local minimum; already-cached
        neighbors cost nothing."""
        while True:
            base = best_bits
            flips = []
            for i in range(n):
                f = base[:i] + (1 - base[i],) + base[i + 1:]
                if not (0 < sum(f) < n):
                    continue  # degenerate neighbor cannot be better
                canonical = ev.partition(f).bits
                pred = (knn.predict(canonical)
                        if cfg.surrogate == "hamming-knn" else 0.0)
                flips.append((pred, i, f))
            flips.sort()
            for _, _, f in flips:
                if true_eval(f) is None:
                    return "budget"
                if best_bits != base:
                    break  # improved; restart the pass from the new incumbent
            else:
                return "certified"

    if exhaustive:
        return finish(0, "exhaustive")

    # ---- population: best distinct warm-up solutions
    ranked = sorted(((r.value, i) for i, r in enumerate(ev.history)))
    population = [ev.history[i].partition.bits for _, i in
                  ranked[: cfg.population_size]]

    def value_of(bits: tuple[int, ...]) -> float:
        rec = ev.cache.get(("proxy", ev.partition(bits).bits))
        return rec.value if rec else math.inf

    # Mixing hands the endgame to certify() while the budget still covers
    # a descent step plus one full certificate pass over the n (minus
    # degenerate) Hamming-1 neighbors.
    reserve = n + n // 2

    def remaining() -> int:
        return cfg.max_true_evaluations - ev.true_evaluations

    generations = 0
    stall = 0
    while True:
        if remaining() <= 0:
            return finish(generations, "budget")
        if remaining() <= reserve:
            return finish(generations, certify())
        generations += 1
        value_at_gen_start = best_value
        evals_at_gen_start = ev.true_evaluations
        tree = LinkageModel.from_population(population)
        # The surrogate only vetoes candidates predicted worse than the
        # current population's worst member; a harder cut (e.g. the parent's
        # own value) starves the search, because k-NN predictions near an
        # elite average over its mediocre warm-up neighbours.
        screen_cut = max(value_of(p) for p in population)
        endgame = False
        for pi in range(len(population)):
            parent = population[pi]
            parent_value = value_of(parent)
            for si in rng.permutation(len(tree.subsets)):
                subset = tree.subsets[si]
                donor = population[int(rng.integers(len(population)))]
                # Align the donor across the complement symmetry so copied
                # bits agree with the parent's group labelling.
                if 2 * sum(x != y for x, y in zip(parent, donor)) > n:
                    donor = tuple(1 - b for b in donor)
                child = list(parent)
                for pos in subset:
                    child[pos] = donor[pos]
                child_bits = tuple(child)
                if child_bits == parent:
                    continue
                if not (0 < sum(child_bits) < n):
                    continue
                canonical = ev.partition(child_bits).bits
                unseen = ("proxy", canonical) not in ev.cache
                if unseen and cfg.surrogate == "hamming-knn":
                    if knn.predict(canonical) > screen_cut:
                        continue  # surrogate says not promising
                if unseen and remaining() <= reserve:
                    endgame = True
                    break
                rec = true_eval(child_bits)
                if rec is None:
                    endgame = True
                    break
                if rec.value < parent_value:
                    parent, parent_value = child_bits, rec.value
            population[pi] = parent
            if endgame:
                break
        if endgame:
            continue  # certify() takes over at the top of the loop
        if ev.true_evaluations == evals_at_gen_start:
            # The population has converged or the screen vetoed everything:
            # mixing is out of material, so spend the rest on certification.
            return finish(generations, certify())
        stall = 0 if best_value < value_at_gen_start else stall + 1
        if stall >= cfg.stall_generations:
            return finish(generations, "stall")


# ------------------------------------------------------------------ recursion

@dataclass
class PartitionTreeNode:
    """Node of the recursive style tree: leaves are the final groups."""

    ids: tuple[str, ...]
    partition: Partition | None = None
    improvement: float | None = None
    children: tuple["PartitionTreeNode", ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def leaves(self) -> list["PartitionTreeNode"]:
        if self.is_leaf:
            return [self]
        return [leaf for child in self.children for leaf in child.leaves()]

    def leaf_groups(self) -> list[tuple[str, ...]]:
        return [leaf.ids for leaf in self.leaves()]


def recursive_partition(spec: LearnerSpec, scans: Sequence[Scan],
                        cfg: GAConfig | None = None,
                        metric_cfg: MetricConfig | None = None,
                        min_group: int = 4, min_improvement: float = 0.0,
                        expected_styles: int | None = None,
                        baseline_floor: float = BASELINE_FLOOR,
                        log_path=None) -> PartitionTreeNode:
    """Split recursively while style-specific training beats the mixture.

    At each node the mixture baseline is recomputed on the node's scans; a
    found split is kept only when the mean within-subgroup LOO surface Dice
    exceeds the mixture's by more than `min_improvement`. Splitting also
    stops when the leaf count reaches `expected_styles` (when given).
    """
    cfg = cfg or GAConfig()
    if expected_styles is not None and expected_styles < 1:
        raise ValueError("expected_styles must be >= 1")
    if min_group < 2:
        raise ValueError("min_group must be >= 2 (leave-one-out needs pairs)")
    if len(scans) < 2 * min_group:
        raise ValueError(
            f"need at least {2 * min_group} scans to attempt a split")
    by_id = {s.id: s for s in scans}
    root = PartitionTreeNode(ids=tuple(sorted(by_id)))
    leaf_count = 1
    node_counter = 0
    queue = [root]
    while queue:
        node = queue.pop(0)
        if expected_styles is not None and leaf_count >= expected_styles:
            break
        if len(node.ids) < max(4, 2 * min_group):
            continue
        node_scans = [by_id[i] for i in node.ids]
        mixture_pairs = loo_pairs(spec, node_scans, metric_cfg)
        mixture_mean = float(np.mean(
            [p.surface_dice for p in mixture_pairs.values()]))
        baseline = BaselineScores(
            {i: p.surface_dice for i, p in mixture_pairs.items()},
            floor=baseline_floor)
        node_cfg = replace(cfg, seed=cfg.seed + 7919 * node_counter)
        node_counter += 1
        result = optimize_partition(spec, node_scans, baseline, node_cfg,
                                    metric_cfg=metric_cfg, log_path=log_path)
        split = result.best
        sides = (split.group_ids(0), split.group_ids(1))
        if min(len(g) for g in sides) < 2:
            continue
        within = []
        for group_ids in sides:
            pairs = loo_pairs(spec, [by_id[i] for i in group_ids], metric_cfg)
            within.extend(p.surface_dice for p in pairs.values())
        improvement = float(np.mean(within)) - mixture_mean
        if improvement <= min_improvement:
            continue
        node.partition = split
        node.improvement = improvement
        node.children = tuple(PartitionTreeNode(ids=g) for g in sides)
        leaf_count += 1
        queue.extend(node.children)
    return root


def misclassification(groups, labels: Mapping[str, int]) -> int:
    """Minimum mislabeled-scan count over group-to-label assignments.

    `groups` is a Partition or a sequence of scan-id groups; complement
    symmetry is free because all label assignments are tried.
    """
    import itertools

    if isinstance(groups, Partition):
        groups = [groups.group_ids(0), groups.group_ids(1)]
    else:
        groups = [tuple(g) for g in groups]
    label_values = sorted(set(labels.values()))
    if len(groups) != len(label_values):
        raise ValueError(
            f"{len(groups)} groups cannot match {len(label_values)} styles")
    covered = [i for g in groups for i in g]
    if sorted(covered) != sorted(labels):
        raise ValueError("groups do not cover the labeled scans exactly")
    best = len(covered)
    for perm in itertools.permutations(label_values):
        wrong = sum(1 for g, lab in zip(groups, perm)
                    for i in g if labels[i] != lab)
        best = min(best, wrong)
    return best
