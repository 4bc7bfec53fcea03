"""Finite-difference verification of every analytic loss gradient."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from ..assignment.boxes import Box
from ..assignment.losses import LossWeights, box_loss_grad, total_loss_grad
from ..assignment.matching import GroundTruth, Prediction, match_tracking
from ..grounding import (
    AlignmentBatch,
    TokenSpanDistribution,
    build_prompt,
    contrastive_alignment_grad,
    soft_token_loss_grad,
    target_distribution,
)
from ..tensor_core import GradCheckReport, check_gradient, merge_reports, softmax

TOLERANCE = 1e-3
EPS = 1e-5

# a fixture yields (f, analytic gradient at x, x)
Fixture = tuple[Callable[[np.ndarray], float], np.ndarray, np.ndarray]
FixtureFactory = Callable[[np.random.Generator], Fixture]


def _random_box(rng, lo=0.0, hi=10.0) -> np.ndarray:
    x = np.sort(rng.uniform(lo, hi, 2))
    y = np.sort(rng.uniform(lo, hi, 2))
    return np.array([x[0], y[0], x[1], y[1]])


def _well_separated(*boxes, gap=1e-3) -> bool:
    # keeps every min/max selection in the loss away from a tie
    xs = np.concatenate([[b[0], b[2]] for b in boxes])
    ys = np.concatenate([[b[1], b[3]] for b in boxes])
    return all(np.min(np.diff(np.sort(v))) > gap for v in (xs, ys))


def _pred_box_pair(rng) -> tuple[np.ndarray, np.ndarray]:
    while True:
        gt = _random_box(rng)
        pred = _random_box(rng)
        if (gt[2] - gt[0]) > 0.5 and (gt[3] - gt[1]) > 0.5 and (pred[2] - pred[0]) > 0.5 and (pred[3] - pred[1]) > 0.5 and _well_separated(gt, pred):
            return gt, pred


def soft_token_fixture(rng) -> Fixture:
    n, k = int(rng.integers(1, 5)), int(rng.integers(2, 7))
    logits = rng.normal(size=(n, k + 1))
    targets = []
    for _ in range(n):
        if rng.random() < 0.25:
            targets.append(target_distribution(None, k))
        else:
            s = int(rng.integers(0, k))
            e = int(rng.integers(s + 1, k + 1))
            targets.append(target_distribution((s, e), k))
    _, grad = soft_token_loss_grad(logits, targets)
    return (lambda x: soft_token_loss_grad(x, targets)[0]), grad, logits


def contrastive_fixture(rng) -> Fixture:
    n, l, d = int(rng.integers(1, 5)), int(rng.integers(2, 6)), int(rng.integers(3, 6))
    O = rng.normal(scale=0.3, size=(n, d))
    T = rng.normal(scale=0.3, size=(l, d))
    pos = rng.random((n, l)) < 0.4
    pos[0, int(rng.integers(l))] = True
    temp = float(rng.choice([0.07, 0.5, 1.0]))

    def f(x):
        return contrastive_alignment_grad(AlignmentBatch(x[: n * d].reshape(n, d), x[n * d :].reshape(l, d), pos, temp))[0]

    _, gO, gT = contrastive_alignment_grad(AlignmentBatch(O, T, pos, temp))
    return f, np.concatenate([gO.ravel(), gT.ravel()]), np.concatenate([O.ravel(), T.ravel()])


def box_loss_fixture(rng) -> Fixture:
    gt, pred = _pred_box_pair(rng)
    w = LossWeights(float(rng.uniform(0.5, 5)), float(rng.uniform(0.5, 5)))
    _, grad = box_loss_grad(gt, pred, w)
    return (lambda x: box_loss_grad(gt, x, w)[0]), grad, pred


def total_loss_fixture(rng) -> Fixture:
    prompt = build_prompt(["person", "car", "traffic light"])
    k = prompt.token_count
    n_gt = int(rng.integers(1, 4))
    n_pred = n_gt + int(rng.integers(0, 3))
    gt_boxes, pred_boxes = [], []
    while len(gt_boxes) < n_gt:
        g, p = _pred_box_pair(rng)
        gt_boxes.append(g)
        pred_boxes.append(p)
    while len(pred_boxes) < n_pred:
        pred_boxes.append(_pred_box_pair(rng)[1])
    cats = [prompt.categories[int(rng.integers(len(prompt.categories)))] for _ in range(n_gt)]
    gts = [GroundTruth(Box.from_array(b), c, track_id=i) for i, (b, c) in enumerate(zip(gt_boxes, cats))]
    logits = rng.normal(size=(n_pred, k + 1))
    # the first prediction continues track 0; the rest are fresh queries
    origins = [0] + [None] * (n_pred - 1)

    def preds_from(boxes, lg):
        return [
            Prediction(Box.from_array(b), TokenSpanDistribution(softmax(z)), origin=o, logits=z)
            for b, z, o in zip(boxes, lg, origins)
        ]

    preds = preds_from(pred_boxes, logits)
    assignment = match_tracking(preds, gts, {0}, prompt)
    d = 4
    O = rng.normal(scale=0.3, size=(n_pred, d))
    T = rng.normal(scale=0.3, size=(k, d))
    pos = np.zeros((n_pred, k), dtype=bool)
    for g, p, _ in assignment.pairs:
        s, e = prompt.span(gts[g].category)
        pos[p, s:e] = True
    w = LossWeights()
    sizes = [n_pred * 4, n_pred * (k + 1), n_pred * d, k * d]
    cuts = np.cumsum(sizes)[:-1]

    def unpack(x):
        b, z, o, t = np.split(x, cuts)
        return b.reshape(n_pred, 4), z.reshape(n_pred, k + 1), o.reshape(n_pred, d), t.reshape(k, d)

    def f(x):
        b, z, o, t = unpack(x)
        batch = AlignmentBatch(o, t, pos) if pos.any() else None
        return total_loss_grad(assignment, preds_from(b, z), gts, prompt, batch, w)[0]

    batch = AlignmentBatch(O, T, pos) if pos.any() else None
    _, grads = total_loss_grad(assignment, preds, gts, prompt, batch, w)
    gO = grads.get("object_embeds", np.zeros_like(O))
    gT = grads.get("token_embeds", np.zeros_like(T))
    analytic = np.concatenate([grads["boxes"].ravel(), grads["logits"].ravel(), gO.ravel(), gT.ravel()])
    x = np.concatenate([np.asarray(pred_boxes).ravel(), logits.ravel(), O.ravel(), T.ravel()])
    return f, analytic, x


DEFAULT_CHECKS: dict[str, FixtureFactory] = {
    "soft_token_loss": soft_token_fixture,
    "contrastive_alignment_loss": contrastive_fixture,
    "box_loss": box_loss_fixture,
    "total_loss": total_loss_fixture,
}


def gradcheck_all(
    seed: int = 0,
    n_fixtures: int = 50,
    eps: float = EPS,
    checks: Mapping[str, FixtureFactory] | None = None,
) -> dict[str, GradCheckReport]:
    """Worst-case gradient report per loss over ``n_fixtures`` random fixtures each."""
    checks = DEFAULT_CHECKS if checks is None else checks
    out = {}
    for i, (name, factory) in enumerate(checks.items()):
        rng = np.random.default_rng([seed, i])
        reports = []
        for _ in range(n_fixtures):
            f, analytic, x = factory(rng)
            reports.append(check_gradient(f, analytic, x, eps))
        out[name] = merge_reports(reports)
    return out


def failures(reports: Mapping[str, GradCheckReport], tol: float = TOLERANCE) -> list[str]:
    return [name for name, r in reports.items() if not r.max_rel_err < tol]
