"""Set-prediction training objective for moment retrieval.

Per-pair losses in normalized (center, width) coordinates: an L1 term on
center and width, a generalized-IoU term (the loss is the negated gIoU,
not 1 - gIoU), a confidence cross-entropy, and the optimal candidate /
ground-truth assignment that ties them together.  Analytic gradients of
the moment loss are provided for trainers built on this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .core import Candidate, NormalizedMoment, Span, giou

LOG_EPS = 1e-7  # confidence clamp before logs
KINK_EPS = 1e-9  # distance at which gradients are flagged as near a kink


@dataclass(frozen=True)
class LossWeights:
    """Weights for the L1, gIoU and score terms.

    Defaults follow the usual DETR-style moment localization setup
    (10 / 1 / 4); they are configuration, not fitted values.
    """

    lambda_l1: float = 10.0
    lambda_giou: float = 1.0
    lambda_score: float = 4.0

    def __post_init__(self) -> None:
        for name in ("lambda_l1", "lambda_giou", "lambda_score"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class Assignment:
    """Injective matching of ground truths onto candidates.

    ``pairs`` holds (candidate index k, ground-truth index n), one pair per
    ground truth, sorted by n.  Candidates may be used at most once.
    """

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        ks = [k for k, _ in self.pairs]
        ns = [n for _, n in self.pairs]
        if len(set(ks)) != len(ks) or len(set(ns)) != len(ns):
            raise ValueError(f"assignment must be injective, got {self.pairs}")
        object.__setattr__(self, "pairs", tuple(sorted(self.pairs, key=lambda p: p[1])))

    @property
    def matched_candidates(self) -> frozenset[int]:
        return frozenset(k for k, _ in self.pairs)

    def candidate_for(self, n: int) -> int:
        for k, gt in self.pairs:
            if gt == n:
                return k
        raise KeyError(f"ground truth {n} is not assigned")


@dataclass(frozen=True)
class PredictionSet:
    """The K candidates emitted for one (audio, query) input."""

    candidates: tuple[Candidate, ...]

    def __post_init__(self) -> None:
        if len(self.candidates) < 1:
            raise ValueError("prediction set must contain at least one candidate")
        object.__setattr__(self, "candidates", tuple(self.candidates))

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def confidences(self) -> tuple[float, ...]:
        return tuple(c.confidence for c in self.candidates)


def _interval(m: NormalizedMoment) -> Span:
    # negative width collapses to a point at the center
    half = max(m.width, 0.0) / 2.0
    return Span(m.center - half, m.center + half)


def l1_loss(pred: NormalizedMoment, gt: NormalizedMoment) -> float:
    """|center error| + |width error| (the start/end form folds to this)."""
    return abs(pred.center - gt.center) + abs(pred.width - gt.width)


def giou_loss(pred: NormalizedMoment, gt: NormalizedMoment) -> float:
    """Negated generalized IoU between the two moments, in [-1, 1]."""
    if gt.width <= 0:
        raise ValueError(f"ground-truth width must be > 0, got {gt.width}")
    return -giou(_interval(pred), _interval(gt))


def moment_loss(pred: NormalizedMoment, gt: NormalizedMoment, w: LossWeights) -> float:
    return w.lambda_l1 * l1_loss(pred, gt) + w.lambda_giou * giou_loss(pred, gt)


def score_loss(confidences: Sequence[float], assignment: Assignment) -> float:
    """Cross-entropy on confidences: -log c for matched, -log(1-c) otherwise."""
    k_count = len(confidences)
    matched = assignment.matched_candidates
    for k in matched:
        if not 0 <= k < k_count:
            raise ValueError(f"assigned candidate index {k} out of range [0, {k_count})")
    total = 0.0
    for k, c in enumerate(confidences):
        c = min(max(float(c), LOG_EPS), 1.0 - LOG_EPS)
        total += -math.log(c) if k in matched else -math.log(1.0 - c)
    return total


def _cost_matrix(preds: PredictionSet, gts: Sequence[NormalizedMoment], w: LossWeights) -> np.ndarray:
    pred_cw = np.array([(c.moment.center, c.moment.width) for c in preds.candidates])
    conf = np.array(preds.confidences)
    gt_cw = np.array([(g.center, g.width) for g in gts])
    return _kernels.matching_cost(pred_cw, conf, gt_cw, w.lambda_l1, w.lambda_giou)


def _assignment_total(cost: np.ndarray, ks: Sequence[int]) -> float:
    # sequential sum in ground-truth order so equal assignments compare bit-exactly
    total = 0.0
    for n, k in enumerate(ks):
        total += float(cost[n, k])
    return total


def _solve_rows(cost: np.ndarray) -> list[int]:
    rows, cols = linear_sum_assignment(cost)
    ks = [0] * cost.shape[0]
    for r, c in zip(rows, cols):
        ks[r] = int(c)
    return ks


def optimal_assignment(
    preds: PredictionSet, gts: Sequence[NormalizedMoment], w: LossWeights
) -> Assignment:
    """Minimize the matching loss sum(-c_phi(n) + moment_loss(pred_phi(n), gt_n)).

    Solved as a min-cost bipartite assignment over injections of ground
    truths into candidates.  Ties are broken toward the lexicographically
    smallest pair list, i.e. the smallest candidate index for ground truth
    0, then for ground truth 1, and so on.
    """
    n_gt = len(gts)
    k_pred = len(preds)
    if n_gt > k_pred:
        raise ValueError(f"cannot assign {n_gt} ground truths to {k_pred} candidates")
    if n_gt == 0:
        return Assignment(())

    cost = _cost_matrix(preds, gts, w)
    reference = _solve_rows(cost)
    best_total = _assignment_total(cost, reference)

    # Greedy lexicographic refinement: for each ground truth in order, commit
    # the smallest candidate that still extends to an optimal assignment.
    chosen: list[int] = []
    free = sorted(set(range(k_pred)))
    for n in range(n_gt):
        for k in free:
            if k == reference[n]:
                chosen.append(k)
                break
            rest_cols = [c for c in free if c != k]
            if n + 1 < n_gt:
                sub = cost[np.ix_(range(n + 1, n_gt), rest_cols)]
                sub_ks = _solve_rows(sub)
                tail = [rest_cols[c] for c in sub_ks]
            else:
                tail = []
            trial = chosen + [k] + tail
            if _assignment_total(cost, trial) == best_total:
                chosen.append(k)
                reference = trial
                break
        free.remove(chosen[-1])
    return Assignment(tuple((k, n) for n, k in enumerate(chosen)))


def overall_loss(
    preds: PredictionSet, gts: Sequence[NormalizedMoment], w: LossWeights
) -> tuple[float, Assignment]:
    """Total training loss under the optimal assignment, plus that assignment.

    lambda_score * score_loss + sum over matched pairs of moment_loss; the
    moment term is a sum over ground truths, not an average.
    """
    assignment = optimal_assignment(preds, gts, w)
    moment_term = 0.0
    for k, n in assignment.pairs:
        moment_term += moment_loss(preds.candidates[k].moment, gts[n], w)
    total = w.lambda_score * score_loss(preds.confidences, assignment) + moment_term
    return total, assignment


class MomentGradient(NamedTuple):
    d_center: float
    d_width: float
    near_kink: bool  # within KINK_EPS of a non-differentiable point


def _giou_directional_derivative(
    pc: float, pw: float, g1: float, g2: float, dp1: float, dp2: float
) -> float:
    """d gIoU / d theta where +1 in theta moves the pred endpoints by (dp1, dp2).

    Piecewise branches at ties resolve as the right-hand limit in theta.
    """
    half = max(pw, 0.0) / 2.0
    p1, p2 = pc - half, pc + half

    d_lo = dp1 if (p1 > g1 or (p1 == g1 and dp1 > 0)) else 0.0
    d_hi = dp2 if (p2 < g2 or (p2 == g2 and dp2 < 0)) else 0.0
    raw_inter = min(p2, g2) - max(p1, g1)
    d_raw = d_hi - d_lo
    if raw_inter > 0 or (raw_inter == 0 and d_raw > 0):
        inter = max(raw_inter, 0.0)
        d_inter = d_raw
    else:
        inter = 0.0
        d_inter = 0.0

    union = (p2 - p1) + (g2 - g1) - inter
    d_union = (dp2 - dp1) - d_inter
    hull = max(p2, g2) - min(p1, g1)
    d_hull_end = dp2 if (p2 > g2 or (p2 == g2 and dp2 > 0)) else 0.0
    d_hull_start = dp1 if (p1 < g1 or (p1 == g1 and dp1 < 0)) else 0.0
    d_hull = d_hull_end - d_hull_start

    # gIoU = inter/union + union/hull - 1; union >= gt width > 0, hull >= gt width > 0
    return (d_inter * union - inter * d_union) / union**2 + (
        d_union * hull - union * d_hull
    ) / hull**2


def moment_loss_gradient(
    pred: NormalizedMoment, gt: NormalizedMoment, w: LossWeights
) -> MomentGradient:
    """Analytic gradient of the weighted moment loss in (center, width).

    At kinks (absolute-value corners, interval boundary crossings, width 0)
    the right-hand derivative in the perturbed coordinate is returned and
    ``near_kink`` is set when the pair sits within KINK_EPS of one.
    """
    if gt.width <= 0:
        raise ValueError(f"ground-truth width must be > 0, got {gt.width}")
    pc, pw = pred.center, pred.width
    g1 = gt.center - gt.width / 2.0
    g2 = gt.center + gt.width / 2.0
    half = max(pw, 0.0) / 2.0
    p1, p2 = pc - half, pc + half

    sign_c = 1.0 if pc - gt.center >= 0 else -1.0
    sign_w = 1.0 if pw - gt.width >= 0 else -1.0

    # endpoint velocities: center moves both ends; width moves them apart,
    # but only once the interval is non-degenerate (right-hand at width 0)
    d_giou_dc = _giou_directional_derivative(pc, pw, g1, g2, 1.0, 1.0)
    if pw >= 0:
        d_giou_dw = _giou_directional_derivative(pc, pw, g1, g2, -0.5, 0.5)
    else:
        d_giou_dw = 0.0

    d_center = w.lambda_l1 * sign_c + w.lambda_giou * (-d_giou_dc)
    d_width = w.lambda_l1 * sign_w + w.lambda_giou * (-d_giou_dw)

    kink_distances = (
        abs(pc - gt.center),
        abs(pw - gt.width),
        abs(pw),
        abs(p1 - g1),
        abs(p2 - g2),
        abs(p1 - g2),
        abs(p2 - g1),
    )
    return MomentGradient(d_center, d_width, min(kink_distances) < KINK_EPS)
