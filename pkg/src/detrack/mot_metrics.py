"""CLEAR-MOT counts, MOTA, IDF1, mostly tracked/lost and detection AP."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .assignment.boxes import Box, iou
from .assignment.hungarian import hungarian

DEFAULT_IOU = 0.5
_FORBIDDEN = 1e6  # cost for pairs below the IoU threshold


@dataclass
class TrajectorySet:
    trajectories: dict[int, list[tuple[int, Box, str | None]]] = field(default_factory=dict)

    def __post_init__(self):
        for tid, entries in self.trajectories.items():
            frames = [f for f, _, _ in entries]
            if any(b <= a for a, b in zip(frames, frames[1:])):
                raise ValueError(f"frames of trajectory {tid} are not strictly increasing")

    @property
    def frame_range(self) -> tuple[int, int] | None:
        frames = [f for entries in self.trajectories.values() for f, _, _ in entries]
        return (min(frames), max(frames)) if frames else None

    def __len__(self) -> int:
        return len(self.trajectories)

    def n_boxes(self) -> int:
        return sum(len(v) for v in self.trajectories.values())

    def by_frame(self) -> dict[int, dict[int, Box]]:
        out: dict[int, dict[int, Box]] = defaultdict(dict)
        for tid, entries in self.trajectories.items():
            for f, box, _ in entries:
                out[f][tid] = box
        return out

    def only(self, categories: Iterable[str]) -> "TrajectorySet":
        keep = set(categories)
        out = {}
        for tid, entries in self.trajectories.items():
            sel = [e for e in entries if e[2] in keep]
            if sel:
                out[tid] = sel
        return TrajectorySet(out)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[int, int, Box, str | None]]) -> "TrajectorySet":
        """Build from ``(frame, id, box, category)`` rows in any order."""
        traj: dict[int, list] = defaultdict(list)
        for f, tid, box, cat in rows:
            traj[int(tid)].append((int(f), box, cat))
        return cls({k: sorted(v, key=lambda e: e[0]) for k, v in sorted(traj.items())})

    def to_dict(self) -> dict:
        return {
            str(tid): [[f, list(b.to_xywh()), c] for f, b, c in entries]
            for tid, entries in self.trajectories.items()
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrajectorySet":
        return cls({int(k): [(int(f), Box.from_xywh(*xywh), c) for f, xywh, c in v] for k, v in d.items()})


@dataclass
class ClearMotResult:
    fp: int
    fn: int
    ids: int
    n_gt: int
    matches: dict[int, list[tuple[int, int]]]  # frame -> [(gt_id, pred_id)]


@dataclass
class MetricsReport:
    mota: float
    idf1: float
    mt: int
    ml: int
    fp: int
    fn: int
    ids: int
    n_gt: int
    ap: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, s: str) -> "MetricsReport":
        return cls(**json.loads(s))


def _match_frame(gts: dict[int, Box], preds: dict[int, Box], prev: dict[int, int], iou_thr: float) -> list[tuple[int, int]]:
    matched = []
    for g, p in prev.items():
        if g in gts and p in preds and iou(gts[g], preds[p]) >= iou_thr:
            matched.append((g, p))
    used_g = {g for g, _ in matched}
    used_p = {p for _, p in matched}
    rest_g = [g for g in sorted(gts) if g not in used_g]
    rest_p = [p for p in sorted(preds) if p not in used_p]
    if rest_g and rest_p:
        C = np.full((len(rest_g), len(rest_p)), _FORBIDDEN)
        for i, g in enumerate(rest_g):
            for j, p in enumerate(rest_p):
                v = iou(gts[g], preds[p])
                if v >= iou_thr:
                    C[i, j] = 1.0 - v
        for i, j, c in hungarian(C).pairs:
            if c < _FORBIDDEN:
                matched.append((rest_g[i], rest_p[j]))
    return sorted(matched)


def clear_mot(gt: TrajectorySet, pred: TrajectorySet, iou_thr: float = DEFAULT_IOU) -> ClearMotResult:
    if not 0.0 < iou_thr <= 1.0:
        raise ValueError("iou_thr must be in (0, 1]")
    gt_frames, pred_frames = gt.by_frame(), pred.by_frame()
    fp = fn = ids = n_gt = 0
    prev: dict[int, int] = {}
    last: dict[int, int] = {}
    matches: dict[int, list[tuple[int, int]]] = {}
    for f in sorted(set(gt_frames) | set(pred_frames)):
        gts, preds = gt_frames.get(f, {}), pred_frames.get(f, {})
        m = _match_frame(gts, preds, prev, iou_thr)
        for g, p in m:
            if g in last and last[g] != p:
                ids += 1
            last[g] = p
        n_gt += len(gts)
        fn += len(gts) - len(m)
        fp += len(preds) - len(m)
        matches[f] = m
        prev = dict(m)
    return ClearMotResult(fp, fn, ids, n_gt, matches)


def mota(fp: int, fn: int, ids: int, n_gt: int) -> float:
    """``1 - (FN + FP + IDS) / N``; negative when errors outnumber true objects."""
    if n_gt <= 0:
        raise ValueError("MOTA needs at least one ground-truth box")
    return 1.0 - (fn + fp + ids) / n_gt


def _overlap_counts(gt: TrajectorySet, pred: TrajectorySet, iou_thr: float) -> tuple[list[int], list[int], np.ndarray]:
    g_ids, p_ids = sorted(gt.trajectories), sorted(pred.trajectories)
    p_index = {p: j for j, p in enumerate(p_ids)}
    K = np.zeros((len(g_ids), len(p_ids)), dtype=np.int64)
    pred_frames = pred.by_frame()
    for i, g in enumerate(g_ids):
        for f, box, _ in gt.trajectories[g]:
            for p, pbox in pred_frames.get(f, {}).items():
                if iou(box, pbox) >= iou_thr:
                    K[i, p_index[p]] += 1
    return g_ids, p_ids, K


def id_counts(gt: TrajectorySet, pred: TrajectorySet, iou_thr: float = DEFAULT_IOU) -> tuple[int, int, int]:
    """``(IDTP, IDFP, IDFN)`` under the best one-to-one trajectory pairing."""
    _, _, K = _overlap_counts(gt, pred, iou_thr)
    idtp = 0
    if K.size:
        idtp = int(sum(K[i, j] for i, j, _ in hungarian(-K.astype(np.float64)).pairs))
    return idtp, pred.n_boxes() - idtp, gt.n_boxes() - idtp


def idf1(gt: TrajectorySet, pred: TrajectorySet, iou_thr: float = DEFAULT_IOU) -> float:
    idtp, idfp, idfn = id_counts(gt, pred, iou_thr)
    denom = 2 * idtp + idfp + idfn
    if denom == 0:
        return 1.0
    return 2 * idtp / denom


def mt_ml(gt: TrajectorySet, matches: Mapping[int, Sequence[tuple[int, int]]]) -> tuple[int, int]:
    """Trajectories covered for more than 80% / less than 20% of their frames."""
    hit: dict[int, int] = defaultdict(int)
    for pairs in matches.values():
        for g, _ in pairs:
            hit[g] += 1
    mt = ml = 0
    for g, entries in gt.trajectories.items():
        ratio = hit[g] / len(entries)
        if ratio > 0.8:
            mt += 1
        elif ratio < 0.2:
            ml += 1
    return mt, ml


def average_precision(
    dets: Sequence[Sequence[tuple[Box, float]]],
    gts: Sequence[Sequence[Box]],
    iou_thr: float = DEFAULT_IOU,
) -> float:
    """Single-category AP with all-point interpolation of the PR curve.

    ``dets[f]`` are the scored boxes of frame ``f`` and ``gts[f]`` its
    ground truth. Returns 0 when there is no ground truth.
    """
    if len(dets) != len(gts):
        raise ValueError("dets and gts must cover the same frames")
    n_pos = sum(len(g) for g in gts)
    if n_pos == 0:
        return 0.0
    order = sorted(
        ((f, k) for f, frame in enumerate(dets) for k in range(len(frame))),
        key=lambda fk: -dets[fk[0]][fk[1]][1],
    )
    claimed = [set() for _ in gts]
    tp = np.zeros(len(order))
    for r, (f, k) in enumerate(order):
        box = dets[f][k][0]
        best, best_i = iou_thr, -1
        for i, g in enumerate(gts[f]):
            if i in claimed[f]:
                continue
            v = iou(box, g)
            if v >= best:
                best, best_i = v, i
        if best_i >= 0:
            claimed[f].add(best_i)
            tp[r] = 1.0
    ctp = np.cumsum(tp)
    recall = ctp / n_pos
    precision = ctp / np.arange(1, len(order) + 1)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def ap_sweep(dets, gts, thresholds: Sequence[float] = (0.5, 0.75)) -> dict[float, float]:
    return {t: average_precision(dets, gts, t) for t in thresholds}


def evaluate(gt: TrajectorySet, pred: TrajectorySet, iou_thr: float = DEFAULT_IOU, ap: float | None = None) -> MetricsReport:
    res = clear_mot(gt, pred, iou_thr)
    mt, ml = mt_ml(gt, res.matches)
    return MetricsReport(
        mota=mota(res.fp, res.fn, res.ids, res.n_gt),
        idf1=idf1(gt, pred, iou_thr),
        mt=mt,
        ml=ml,
        fp=res.fp,
        fn=res.fn,
        ids=res.ids,
        n_gt=res.n_gt,
        ap=ap,
    )
