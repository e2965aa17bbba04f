"""Trainable segmenter abstraction and the built-in style learner.

A learner is registered under a `kind` string and provides three stages:
pretrain on a mixture of scans (building whatever base state it needs),
fit on a training subset (producing an immutable fitted model), and
predict masks for a scan. The experiments call for hundreds of fits, so
the built-in learner keeps aggressive memo tables in its pretrain state:
per-scan base segmentations, per-(scan, params) scores, and per-train-set
fit results. Scan ids are treated as stable identities within one
pretrained state, so a state must not be reused across different cohorts.

The built-in "threshold-morph" learner segments by image threshold
(calibrated during pretrain to maximize mean Dice on the pretrain
mixture) and fits a morphological style transform on top: a global
boundary offset, separate top/bottom half-plane offsets, and a shift.
Fitting is a coarse-to-fine coordinate descent maximizing the mean
training Dice — the counterpart of training a segmentation network with
soft Dice loss — with ties broken toward the lexicographically smallest
parameter tuple. Dice fitting is what makes a fit on a mixture of
opposing styles settle on an averaged transform instead of snapping to
one style's mode: surface Dice at a tight tolerance scores an averaged
boundary as zero against both styles, so a surface-Dice fit degenerates
into majority voting, which poisons every mixture baseline downstream.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .masks import Mask, Scan, half_plane_offset, offset_pixels, shift_pixels
from .metrics import MetricConfig, ScorePair, score_scan

PARAM_FIELDS = ("global_offset", "top_offset", "bottom_offset", "shift_dx", "shift_dy")


@dataclass(frozen=True, order=True)
class StyleParams:
    """Fitted morphological style transform, all values in pixels."""

    global_offset: int = 0
    top_offset: int = 0
    bottom_offset: int = 0
    shift_dx: int = 0
    shift_dy: int = 0

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.global_offset, self.top_offset, self.bottom_offset,
                self.shift_dx, self.shift_dy)


@dataclass(frozen=True)
class LearnerSpec:
    """A learner choice: registry kind, hyperparameter overrides, and the
    state produced by pretraining (None until pretrain runs)."""

    kind: str = "threshold-morph"
    hyperparams: Mapping[str, object] = field(default_factory=dict)
    pretrain_state: object | None = None


@dataclass(frozen=True)
class FittedModel:
    kind: str
    params: StyleParams
    state: object


@dataclass(frozen=True)
class LearnerImpl:
    """Registry entry. scan_score may be omitted; the default scores
    predict() output from scratch."""

    pretrain: Callable[[LearnerSpec, Sequence[Scan], MetricConfig], object]
    fit: Callable[[object, Sequence[Scan]], FittedModel]
    predict: Callable[[FittedModel, Scan], list[Mask]]
    scan_score: Callable[[FittedModel, Scan], ScorePair] | None = None


_REGISTRY: dict[str, LearnerImpl] = {}


def register_learner(kind: str, impl: LearnerImpl) -> None:
    if kind in _REGISTRY:
        raise ValueError(f"learner kind {kind!r} already registered")
    _REGISTRY[kind] = impl


def get_impl(kind: str) -> LearnerImpl:
    try:
        return _REGISTRY[kind]
    except KeyError:
        raise ValueError(f"unknown learner kind {kind!r}; "
                         f"registered: {sorted(_REGISTRY)}") from None


def pretrain(spec: LearnerSpec, scans: Sequence[Scan],
             metric_cfg: MetricConfig | None = None) -> LearnerSpec:
    """Run the learner's pretraining and return a spec carrying the state."""
    if not scans:
        raise ValueError("pretrain needs a nonempty scan set")
    impl = get_impl(spec.kind)
    state = impl.pretrain(spec, scans, metric_cfg or MetricConfig())
    return replace(spec, pretrain_state=state)


def fit(spec: LearnerSpec, train: Sequence[Scan]) -> FittedModel:
    if spec.pretrain_state is None:
        raise ValueError("fit requires a pretrained LearnerSpec")
    if not train:
        raise ValueError("fit needs a nonempty training set")
    return get_impl(spec.kind).fit(spec.pretrain_state, train)


def predict(model: FittedModel, scan: Scan) -> list[Mask]:
    return get_impl(model.kind).predict(model, scan)


def scan_score(model: FittedModel, scan: Scan,
               metric_cfg: MetricConfig | None = None) -> ScorePair:
    """Score a model on one scan; uses the learner's cached path if any."""
    impl = get_impl(model.kind)
    if impl.scan_score is not None:
        return impl.scan_score(model, scan)
    return score_scan(scan.masks(), impl.predict(model, scan),
                      metric_cfg or MetricConfig())


# -- built-in threshold + morphology learner ---------------------------------

_DEFAULT_HP = {
    "search_bound": 15,   # params searched in [-bound, bound]
    "coarse_step": 3,
    "fine_radius": 2,
}


class _ThresholdMorphState:
    """Mutable pretrain state: calibrated threshold plus memo tables."""

    def __init__(self, threshold: int, metric_cfg: MetricConfig,
                 hp: Mapping[str, object]):
        self.threshold = int(threshold)
        self.metric_cfg = metric_cfg
        self.bound = int(hp["search_bound"])
        self.coarse_step = int(hp["coarse_step"])
        self.fine_radius = int(hp["fine_radius"])
        self.base_preds: dict[str, tuple[np.ndarray, ...]] = {}
        self.splits: dict[str, tuple[float, ...]] = {}
        self.scans: dict[str, Scan] = {}
        self.score_memo: dict[tuple[str, tuple], ScorePair] = {}
        self.fit_memo: dict[tuple[str, ...], StyleParams] = {}


def _register_scan(state: _ThresholdMorphState, scan: Scan) -> None:
    known = state.scans.get(scan.id)
    if known is None:
        state.scans[scan.id] = scan
    elif known is not scan:
        raise ValueError(
            f"scan id {scan.id!r} reused for a different object; "
            "a pretrained state must stay within one cohort")


def _base_segmentation(state: _ThresholdMorphState, scan: Scan):
    """Thresholded base prediction per slice, plus its centroid row (the
    split line for the half-plane offsets)."""
    _register_scan(state, scan)
    if scan.id not in state.base_preds:
        preds = []
        splits = []
        for sl in scan.slices:
            px = sl.image >= state.threshold
            preds.append(px)
            rows = np.nonzero(px)[0]
            splits.append(float(rows.mean()) if len(rows) else (px.shape[0] - 1) / 2.0)
        state.base_preds[scan.id] = tuple(preds)
        state.splits[scan.id] = tuple(splits)
    return state.base_preds[scan.id], state.splits[scan.id]


def _transform(px: np.ndarray, params: StyleParams, split: float) -> np.ndarray:
    out = px
    if params.global_offset:
        out = offset_pixels(out, params.global_offset)
    if params.top_offset:
        out = half_plane_offset(out, params.top_offset, "top", split)
    if params.bottom_offset:
        out = half_plane_offset(out, params.bottom_offset, "bottom", split)
    if params.shift_dx or params.shift_dy:
        out = shift_pixels(out, params.shift_dx, params.shift_dy)
    return out


def _predicted_pixels(state: _ThresholdMorphState, scan: Scan,
                      params: StyleParams) -> list[np.ndarray]:
    preds, splits = _base_segmentation(state, scan)
    return [_transform(px, params, split) for px, split in zip(preds, splits)]


def _cached_scan_score(state: _ThresholdMorphState, scan: Scan,
                       params: StyleParams) -> ScorePair:
    _register_scan(state, scan)
    key = (scan.id, params.as_tuple())
    hit = state.score_memo.get(key)
    if hit is None:
        gt = scan.masks()
        pred = [gt[0].with_pixels(px)
                for px in _predicted_pixels(state, scan, params)]
        hit = score_scan(gt, pred, state.metric_cfg)
        state.score_memo[key] = hit
    return hit


def _tm_pretrain(spec: LearnerSpec, scans: Sequence[Scan],
                 metric_cfg: MetricConfig) -> _ThresholdMorphState:
    """Calibrate the image threshold: maximize mean slice Dice against the
    (styled) pretrain masks, computed for all 256 levels at once from
    intensity histograms."""
    hp = dict(_DEFAULT_HP)
    hp.update(spec.hyperparams)
    if any(s.mask.foreground_count == 0 for scan in scans for s in scan.slices) or \
            not any(True for _ in scans):
        raise ValueError("pretrain set has a slice without foreground")
    dsc_sum = np.zeros(256, dtype=np.float64)
    n_slices = 0
    for scan in scans:
        for sl in scan.slices:
            flat = sl.image.ravel()
            inside = sl.image[sl.mask.pixels]
            hist_all = np.bincount(flat, minlength=256).astype(np.float64)
            hist_in = np.bincount(inside, minlength=256).astype(np.float64)
            # pred(t) = #pixels with intensity >= t (suffix sums)
            pred = np.cumsum(hist_all[::-1])[::-1]
            inter = np.cumsum(hist_in[::-1])[::-1]
            gt_size = sl.mask.foreground_count
            dsc_sum += 2.0 * inter / (gt_size + pred)
            n_slices += 1
    curve = dsc_sum / n_slices
    threshold = int(np.argmax(curve[1:])) + 1  # t=0 (everything) excluded
    return _ThresholdMorphState(threshold, metric_cfg, hp)


def _tm_train_score(state: _ThresholdMorphState, train: Sequence[Scan],
                    params: StyleParams) -> float:
    total = 0.0
    for scan in train:
        total += _cached_scan_score(state, scan, params).dice
    return total / len(train)


def _tm_fit(state: _ThresholdMorphState, train: Sequence[Scan]) -> FittedModel:
    train = sorted(train, key=lambda s: s.id)
    key = tuple(s.id for s in train)
    if len(set(key)) != len(key):
        raise ValueError("duplicate scan ids in the training set")
    cached = state.fit_memo.get(key)
    if cached is not None:
        return FittedModel("threshold-morph", cached, state)

    bound = state.bound
    incumbent = StyleParams()
    best = _tm_train_score(state, train, incumbent)

    def sweep(values_for: Callable[[int, StyleParams], Sequence[int]]) -> None:
        nonlocal incumbent, best
        improved = True
        while improved:
            improved = False
            for name in PARAM_FIELDS:
                current = getattr(incumbent, name)
                for v in values_for(current, incumbent):
                    if v == current:
                        continue
                    cand = replace(incumbent, **{name: v})
                    score = _tm_train_score(state, train, cand)
                    if score > best or (score == best and
                                        cand.as_tuple() < incumbent.as_tuple()):
                        incumbent, best = cand, score
                        improved = True

    step = state.coarse_step
    sweep(lambda cur, inc: range(-bound, bound + 1, step))
    r = state.fine_radius
    sweep(lambda cur, inc: range(max(-bound, cur - r), min(bound, cur + r) + 1))

    state.fit_memo[key] = incumbent
    return FittedModel("threshold-morph", incumbent, state)


def _tm_predict(model: FittedModel, scan: Scan) -> list[Mask]:
    state: _ThresholdMorphState = model.state
    spacing = scan.slices[0].mask.spacing
    return [Mask(px, spacing=spacing)
            for px in _predicted_pixels(state, scan, model.params)]


def _tm_scan_score(model: FittedModel, scan: Scan) -> ScorePair:
    return _cached_scan_score(model.state, scan, model.params)


register_learner("threshold-morph", LearnerImpl(
    pretrain=_tm_pretrain,
    fit=_tm_fit,
    predict=_tm_predict,
    scan_score=_tm_scan_score,
))
