"""Ground-truth/prediction matching for detection and tracking frames."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..grounding import TextPrompt, TokenSpanDistribution
from .boxes import Box
from .hungarian import AssignmentResult, hungarian
from .losses import DEFAULT_CLASS_WEIGHT, LossWeights, box_loss

EMPTY_QUERY = None  # origin of a prediction from a fresh object query


@dataclass
class Prediction:
    """One decoder output.

    ``origin`` is ``None`` for an empty object query, or the id of the track
    whose query produced it. ``logits`` optionally holds the pre-softmax span
    scores so losses can be differentiated; ``label`` caches a decided category.
    """

    box: Box
    span_dist: TokenSpanDistribution
    score: float = 1.0
    origin: int | None = EMPTY_QUERY
    embed: np.ndarray | None = None
    logits: np.ndarray | None = None
    label: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.origin is not None and int(self.origin) < 0:
            raise ValueError("track ids are nonnegative")

    @property
    def is_track_query(self) -> bool:
        return self.origin is not None


@dataclass
class GroundTruth:
    box: Box
    category: str
    track_id: int | None = None


def build_cost_matrix(
    preds: Sequence[Prediction],
    gts: Sequence[GroundTruth],
    prompt: TextPrompt,
    w: LossWeights = LossWeights(),
    class_weight: float = DEFAULT_CLASS_WEIGHT,
) -> np.ndarray:
    """``cost[i, j] = class_weight * (1 - span mass of pred j on gt i) + box_loss``."""
    C = np.zeros((len(gts), len(preds)))
    for i, g in enumerate(gts):
        if g.category not in prompt:
            raise KeyError(f"category {g.category!r} not in prompt")
        s, e = prompt.span(g.category)
        for j, p in enumerate(preds):
            if p.span_dist.token_count != prompt.token_count:
                raise ValueError("prediction token count does not match prompt")
            mass = float(p.span_dist.probs[s:e].sum())
            C[i, j] = class_weight * (1.0 - mass) + box_loss(g.box, p.box, w)
    return C


def match_detection(
    preds: Sequence[Prediction],
    gts: Sequence[GroundTruth],
    prompt: TextPrompt,
    w: LossWeights = LossWeights(),
    class_weight: float = DEFAULT_CLASS_WEIGHT,
) -> AssignmentResult:
    """Every ground truth is treated as newly appeared; plain Hungarian matching."""
    if not gts:
        return AssignmentResult([], list(range(len(preds))), 0.0)
    C = build_cost_matrix(preds, gts, prompt, w, class_weight)
    return hungarian(C)


def match_tracking(
    preds: Sequence[Prediction],
    gts: Sequence[GroundTruth],
    prev_ids: set[int],
    prompt: TextPrompt,
    w: LossWeights = LossWeights(),
    class_weight: float = DEFAULT_CLASS_WEIGHT,
) -> AssignmentResult:
    """Match a tracking frame.

    Objects continuing from the previous frame are paired with the track query
    of the same identity regardless of cost. Track queries whose identity has
    no ground truth in this frame go to the background. The remaining
    ground truths and empty-query predictions are matched as in detection.
    """
    for g in gts:
        if g.category not in prompt:
            raise KeyError(f"category {g.category!r} not in prompt")
    by_id: dict[int, int] = {}
    for j, p in enumerate(preds):
        if p.origin is None:
            continue
        if p.origin in by_id:
            raise ValueError(f"duplicate track id {p.origin} among predictions")
        if p.origin not in prev_ids:
            raise ValueError(f"track query id {p.origin} not among previous identities")
        by_id[p.origin] = j

    pairs: list[tuple[int, int, float]] = []
    forced_gts: set[int] = set()
    for i, g in enumerate(gts):
        if g.track_id is not None and g.track_id in by_id:
            j = by_id[g.track_id]
            cost = float(build_cost_matrix([preds[j]], [g], prompt, w, class_weight)[0, 0])
            pairs.append((i, j, cost))
            forced_gts.add(i)

    # track queries left over here lost their object: background
    new_gts = [i for i in range(len(gts)) if i not in forced_gts]
    empty_preds = [j for j, p in enumerate(preds) if p.origin is None]
    if new_gts and empty_preds:
        sub = match_detection([preds[j] for j in empty_preds], [gts[i] for i in new_gts], prompt, w, class_weight)
        pairs += [(new_gts[gi], empty_preds[pj], c) for gi, pj, c in sub.pairs]

    pairs.sort()
    matched = {j for _, j, _ in pairs}
    result = AssignmentResult(pairs, [j for j in range(len(preds)) if j not in matched], float(sum(c for _, _, c in pairs)))
    result.check(len(preds))
    return result
