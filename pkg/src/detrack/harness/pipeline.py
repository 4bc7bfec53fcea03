from __future__ import annotations

import dataclasses
import logging
from typing import Sequence

import numpy as np

from ..assignment.matching import Prediction
from ..grounding import build_prompt, classify_by_alignment
from ..mot_metrics import MetricsReport, TrajectorySet, average_precision, evaluate
from ..tracker import TrackerConfig, TrackOutput, TrackState, step
from ..video_features import FeatureMap, LevelParams, LinearParams, sequential_attention
from .scenario import Scenario

log = logging.getLogger(__name__)


def label_detections(s: Scenario, categories: Sequence[str]) -> list[list[tuple[int, Prediction]]]:
    """Classify each detection against the scenario prompt and keep those in ``categories``.

    Returns per frame ``(original index, labelled copy)`` pairs.
    """
    prompt = build_prompt(s.config.categories)
    keep = set(categories)
    out = []
    for dets in s.detections:
        frame = []
        for k, d in enumerate(dets):
            label, _ = classify_by_alignment(d.span_dist, prompt)
            if label in keep:
                frame.append((k, dataclasses.replace(d, label=label)))
        out.append(frame)
    return out


def outputs_to_trajectories(outputs: Sequence[Sequence[TrackOutput]]) -> TrajectorySet:
    return TrajectorySet.from_rows((o.frame, o.id, o.box, o.category) for frame in outputs for o in frame)


def run_tracker(s: Scenario, cfg: TrackerConfig, categories: Sequence[str]) -> tuple[list[list[TrackOutput]], list[list[tuple[int, Prediction]]]]:
    labelled = label_detections(s, categories)
    state = TrackState()
    outputs: list[list[TrackOutput]] = []
    query_of: dict[int, int] = {}  # gt lineage -> track that followed it last frame
    for f, frame in enumerate(labelled):
        dets = []
        for k, d in frame:
            g = s.lineage[f][k]
            if s.config.track_queries and g >= 0 and g in query_of:
                d = dataclasses.replace(d, origin=query_of[g])
            dets.append(d)
        _, out = step(state, dets, cfg)
        query_of = {
            s.lineage[f][frame[o.det_index][0]]: o.id
            for o in out
            if o.det_index is not None and s.lineage[f][frame[o.det_index][0]] >= 0
        }
        outputs.append(out)
    return outputs, labelled


def run_pipeline(
    s: Scenario,
    cfg: TrackerConfig = TrackerConfig(),
    prompt_categories: Sequence[str] | None = None,
    iou_thr: float = 0.5,
) -> tuple[TrajectorySet, MetricsReport]:
    """Track the scenario under a category prompt and score it.

    Only detections whose span mass favours a prompted category reach the
    tracker, and ground truth is restricted to the same categories.
    """
    cats = list(s.config.categories if prompt_categories is None else prompt_categories)
    if not cats:
        raise ValueError("empty prompt")
    missing = set(cats) - set(s.config.categories)
    if missing:
        raise ValueError(f"prompt categories not in scenario: {sorted(missing)}")
    outputs, labelled = run_tracker(s, cfg, cats)
    tracks = outputs_to_trajectories(outputs)
    gt = s.gt.only(cats)
    gt_frames = gt.by_frame()
    ap = average_precision(
        [[(d.box, d.score) for _, d in frame] for frame in labelled],
        [list(gt_frames.get(f, {}).values()) for f in range(len(labelled))],
        iou_thr,
    )
    report = evaluate(gt, tracks, iou_thr, ap=ap)
    log.info("mota=%.4f idf1=%.4f ids=%d", report.mota, report.idf1, report.ids)
    return tracks, report


def render_features(s: Scenario, start: int, grid: tuple[int, int] = (12, 16)) -> FeatureMap:
    """Occupancy features of a ``clip_len``-frame clip, one channel per category.

    Two levels: the full grid and a 2x downsampled copy.
    """
    cats = s.config.categories
    T = s.config.clip_len
    gh, gw = grid
    W, H = s.config.image_size
    level = np.zeros((1, T, gh, gw, len(cats)))
    frames = s.gt.by_frame()
    cat_of = {tid: e[0][2] for tid, e in s.gt.trajectories.items()}
    for t in range(T):
        for tid, box in frames.get(start + t, {}).items():
            c = cats.index(cat_of[tid])
            x0, x1 = int(box.x0 / W * gw), int(np.ceil(box.x1 / W * gw))
            y0, y1 = int(box.y0 / H * gh), int(np.ceil(box.y1 / H * gh))
            level[0, t, y0:y1, x0:x1, c] = 1.0
    coarse = level.reshape(1, T, gh // 2, 2, gw // 2, 2, len(cats)).mean(axis=(3, 5))
    return FeatureMap((level, coarse))


def fuse_clip(s: Scenario, start: int, params: Sequence[LevelParams] | None = None) -> FeatureMap:
    """Render a clip and run temporal-aware attention over it (zero-parameter gates by default)."""
    fm = render_features(s, start)
    c = len(s.config.categories)
    if params is None:
        params = [LevelParams(LinearParams.zeros(c, c)) for _ in fm.levels]
    return sequential_attention(fm, params)
