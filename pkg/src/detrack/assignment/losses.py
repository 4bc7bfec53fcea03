"""Box regression loss and the combined set-prediction training loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grounding import (
    AlignmentBatch,
    TextPrompt,
    contrastive_alignment_grad,
    contrastive_alignment_loss,
    soft_token_loss,
    soft_token_loss_grad,
    target_distribution,
)
from .boxes import Box, _coords, giou, giou_grad
from .hungarian import AssignmentResult

DEFAULT_CLASS_WEIGHT = 2.0


@dataclass(frozen=True)
class LossWeights:
    lambda_l1: float = 5.0
    lambda_giou: float = 2.0

    def __post_init__(self):
        if self.lambda_l1 < 0 or self.lambda_giou < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.lambda_l1 == 0 and self.lambda_giou == 0:
            raise ValueError("loss weights cannot both be zero")


def box_loss(gt, pred, w: LossWeights = LossWeights()) -> float:
    """``lambda_l1 * |gt - pred|_1 + lambda_giou * (1 - GIoU(gt, pred))``."""
    l1 = sum(abs(a - b) for a, b in zip(_coords(gt), _coords(pred)))
    return w.lambda_l1 * l1 + w.lambda_giou * (1.0 - giou(gt, pred))


def box_loss_grad(gt, pred, w: LossWeights = LossWeights()) -> tuple[float, np.ndarray]:
    """Loss and gradient w.r.t. the predicted ``(x0, y0, x1, y1)``."""
    g = np.asarray(_coords(gt))
    p = np.asarray(_coords(pred))
    diff = p - g
    value, d_giou = giou_grad(g, p)
    loss = w.lambda_l1 * float(np.abs(diff).sum()) + w.lambda_giou * (1.0 - value)
    return loss, w.lambda_l1 * np.sign(diff) - w.lambda_giou * d_giou


def _validate(assignment: AssignmentResult, n_preds: int, n_gts: int) -> None:
    try:
        assignment.check(n_preds)
    except ValueError as exc:
        raise ValueError(f"inconsistent assignment: {exc}") from None
    for g, _, _ in assignment.pairs:
        if not 0 <= g < n_gts:
            raise ValueError(f"inconsistent assignment: ground truth {g} out of range")


def _soft_targets(assignment, preds, gts, prompt: TextPrompt):
    targets = [target_distribution(None, prompt.token_count) for _ in preds]
    for g, p, _ in assignment.pairs:
        targets[p] = target_distribution(prompt.span(gts[g].category), prompt.token_count)
    return targets


def total_loss_terms(assignment, preds, gts, prompt: TextPrompt, align_batch: AlignmentBatch | None = None, w: LossWeights = LossWeights()) -> dict[str, float]:
    """The four components of the training loss, keyed by name.

    Box terms are summed over matched pairs and split by the matched
    prediction's origin: track queries feed ``box_track``, empty queries
    ``box_detect``. Unmatched predictions only see the soft token term,
    with the no-object slot as target.
    """
    _validate(assignment, len(preds), len(gts))
    targets = _soft_targets(assignment, preds, gts, prompt)
    soft = soft_token_loss([p.span_dist for p in preds], targets) if preds else 0.0
    contrast = contrastive_alignment_loss(align_batch) if align_batch is not None else 0.0
    detect = track = 0.0
    for g, p, _ in assignment.pairs:
        term = box_loss(gts[g].box, preds[p].box, w)
        if preds[p].origin is None:
            detect += term
        else:
            track += term
    return {"soft": soft, "contrast": contrast, "box_detect": detect, "box_track": track}


def total_loss(assignment, preds, gts, prompt: TextPrompt, align_batch: AlignmentBatch | None = None, w: LossWeights = LossWeights()) -> float:
    terms = total_loss_terms(assignment, preds, gts, prompt, align_batch, w)
    return terms["soft"] + terms["contrast"] + terms["box_detect"] + terms["box_track"]


def total_loss_grad(assignment, preds, gts, prompt: TextPrompt, align_batch: AlignmentBatch | None = None, w: LossWeights = LossWeights()):
    """Total loss with gradients for every differentiable input.

    Predictions must carry ``logits``; the soft term is then computed from
    ``softmax(logits)``. Returns ``(loss, grads)`` where ``grads`` has keys
    ``boxes`` ``[N, 4]``, ``logits`` ``[N, L+1]`` and, with an alignment
    batch, ``object_embeds`` and ``token_embeds``.
    """
    _validate(assignment, len(preds), len(gts))
    if any(p.logits is None for p in preds):
        raise ValueError("every prediction needs logits for gradients")
    grads: dict[str, np.ndarray] = {"boxes": np.zeros((len(preds), 4))}
    loss = 0.0
    if preds:
        targets = _soft_targets(assignment, preds, gts, prompt)
        soft, grads["logits"] = soft_token_loss_grad(np.vstack([p.logits for p in preds]), targets)
        loss += soft
    else:
        grads["logits"] = np.zeros((0, prompt.token_count + 1))
    if align_batch is not None:
        contrast, grads["object_embeds"], grads["token_embeds"] = contrastive_alignment_grad(align_batch)
        loss += contrast
    for g, p, _ in assignment.pairs:
        term, d = box_loss_grad(gts[g].box, preds[p].box, w)
        loss += term
        grads["boxes"][p] += d
    return loss, grads
