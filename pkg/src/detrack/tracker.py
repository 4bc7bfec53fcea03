"""Frame-by-frame track lifecycle.

Each :func:`step` applies, in this order:

1. bind detections to active tracks, by track-query origin first and then by
   embedding similarity; active tracks left without a detection go inactive
2. deactivate bound tracks whose score fell below ``sigma_track``
3. suppress the weaker of any two same-category active tracks with IoU above
   ``sigma_nms``
4. re-identify inactive tracks from unclaimed detections
5. start new tracks from the remaining confident detections
6. age inactive tracks and drop those inactive for more than ``n_reid`` frames

Suppression, re-identification and association are category-aware: a track
never interacts with detections or tracks of another category.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assignment.boxes import Box, iou
from .assignment.matching import Prediction

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrackerConfig:
    sigma_track: float = 0.4
    sigma_nms: float = 0.9
    n_reid: int = 5
    sigma_reid: float = 0.4
    init_iou: float = 0.5
    n_box: int = 500
    # cosine similarity needed to bind an empty-query detection to an active
    # track, and to re-identify an inactive one
    match_sim: float = 0.5
    reid_sim: float = 0.5

    def __post_init__(self):
        for name in ("sigma_track", "sigma_nms", "sigma_reid", "init_iou"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        for name in ("match_sim", "reid_sim"):
            if not -1.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a cosine similarity")
        if self.n_reid < 0:
            raise ValueError("n_reid must be >= 0")
        if self.n_box < 1:
            raise ValueError("n_box must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "TrackerConfig":
        return cls(**d)


class Status(enum.Enum):
    ACTIVE = "active"
    INACTIVE = "inactive"
    REMOVED = "removed"


@dataclass
class Track:
    id: int
    box: Box
    category: str | None
    score: float
    embed: np.ndarray | None
    status: Status = Status.ACTIVE
    frames_inactive: int = 0
    history: list[tuple[int, Box]] = field(default_factory=list)
    # (frame, detection index) of the latest update
    source: tuple[int, int] | None = None

    def _update(self, det: Prediction, frame: int, index: int) -> None:
        self.source = (frame, index)
        self.box = det.box
        self.score = det.score
        if det.embed is not None:
            self.embed = np.asarray(det.embed, dtype=np.float64)
        self.history.append((frame, det.box))

    def _deactivate(self) -> None:
        self.status = Status.INACTIVE
        self.frames_inactive = 0


@dataclass(frozen=True)
class TrackOutput:
    frame: int
    id: int
    box: Box
    score: float
    category: str | None
    det_index: int | None = None  # detection that produced this output


@dataclass
class TrackState:
    frame_index: int = 0
    tracks: dict[int, Track] = field(default_factory=dict)
    next_id: int = 0

    def active(self) -> list[Track]:
        return [t for t in self.tracks.values() if t.status is Status.ACTIVE]

    def inactive(self) -> list[Track]:
        return [t for t in self.tracks.values() if t.status is Status.INACTIVE]


def _cosine(a, b) -> float:
    if a is None or b is None:
        return -np.inf
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return -np.inf
    return float(a @ b / (na * nb))


def _blocked(box: Box, category, active: Sequence[Track], cfg: TrackerConfig) -> bool:
    return any(t.category == category and iou(t.box, box) > cfg.sigma_nms for t in active)


def reidentify(
    inactive: Sequence[Track],
    candidates: Sequence[Prediction],
    cfg: TrackerConfig = TrackerConfig(),
    active: Sequence[Track] = (),
) -> list[tuple[int, int]]:
    """Greedy pairing of inactive tracks with unclaimed detections.

    Pairs qualify when the detection scores at least ``sigma_reid``, has the
    track's category, reaches ``reid_sim`` cosine similarity and would not
    duplicate an ``active`` track. Highest similarity wins; ties go to the
    higher IoU with the track's last box.
    """
    scored = []
    for t in inactive:
        for j, c in enumerate(candidates):
            if c.score < cfg.sigma_reid or c.label != t.category:
                continue
            sim = _cosine(t.embed, c.embed)
            if sim < cfg.reid_sim:
                continue
            if _blocked(c.box, c.label, active, cfg):
                continue
            scored.append((-sim, -iou(t.box, c.box), t.id, j))
    scored.sort()
    used_t: set[int] = set()
    used_c: set[int] = set()
    out = []
    for _, _, tid, j in scored:
        if tid in used_t or j in used_c:
            continue
        used_t.add(tid)
        used_c.add(j)
        out.append((tid, j))
    return out


def step(
    state: TrackState,
    detections: Sequence[Prediction],
    cfg: TrackerConfig = TrackerConfig(),
    hints: Sequence[Box] | None = None,
) -> tuple[TrackState, list[TrackOutput]]:
    """Advance ``state`` by one frame; mutates and returns it with this frame's active tracks.

    ``hints`` are optional externally provided boxes for this frame; when given,
    a new track is only started from a detection overlapping one of them with
    IoU above ``init_iou``.
    """
    if len(detections) > cfg.n_box:
        raise ValueError(f"{len(detections)} detections exceed n_box={cfg.n_box}")
    seen: set[int] = set()
    for d in detections:
        if d.origin is not None:
            if d.origin in seen:
                raise ValueError(f"duplicate track-query id {d.origin}")
            seen.add(d.origin)

    frame = state.frame_index
    claimed: set[int] = set()
    bound: set[int] = set()

    # 1. association
    for j, d in enumerate(detections):
        t = state.tracks.get(d.origin) if d.origin is not None else None
        if t is not None and t.status is Status.ACTIVE:
            t._update(d, frame, j)
            claimed.add(j)
            bound.add(t.id)
    pending = [t for t in state.active() if t.id not in bound]
    pairs = []
    for t in pending:
        for j, d in enumerate(detections):
            if j in claimed or d.label != t.category:
                continue
            sim = _cosine(t.embed, d.embed)
            if sim >= cfg.match_sim:
                pairs.append((-sim, -iou(t.box, d.box), t.id, j))
    pairs.sort()
    for _, _, tid, j in pairs:
        if tid in bound or j in claimed:
            continue
        state.tracks[tid]._update(detections[j], frame, j)
        claimed.add(j)
        bound.add(tid)
    for t in pending:
        if t.id not in bound:
            t._deactivate()

    # 2. score filter
    for t in state.active():
        if t.score < cfg.sigma_track:
            t._deactivate()

    # 3. NMS among active tracks
    ranked = sorted(state.active(), key=lambda t: (-t.score, t.id))
    for a_idx, a in enumerate(ranked):
        if a.status is not Status.ACTIVE:
            continue
        for b in ranked[a_idx + 1:]:
            if b.status is Status.ACTIVE and b.category == a.category and iou(a.box, b.box) > cfg.sigma_nms:
                b._deactivate()

    # 4. re-identification
    free = [j for j in range(len(detections)) if j not in claimed]
    for tid, k in reidentify(state.inactive(), [detections[j] for j in free], cfg, state.active()):
        t = state.tracks[tid]
        t.status = Status.ACTIVE
        t.frames_inactive = 0
        t._update(detections[free[k]], frame, free[k])
        claimed.add(free[k])
        log.debug("frame %d: re-identified track %d", frame, tid)

    # 5. new tracks
    for j, d in enumerate(detections):
        if j in claimed or d.score < cfg.sigma_track:
            continue
        if hints is not None and not any(iou(d.box, h) > cfg.init_iou for h in hints):
            continue
        if _blocked(d.box, d.label, state.active(), cfg):
            continue
        t = Track(state.next_id, d.box, d.label, d.score, None if d.embed is None else np.asarray(d.embed, dtype=np.float64))
        t.history.append((frame, d.box))
        t.source = (frame, j)
        state.tracks[t.id] = t
        state.next_id += 1
        claimed.add(j)

    # 6. patience
    for t in state.inactive():
        t.frames_inactive += 1
        if t.frames_inactive > cfg.n_reid:
            t.status = Status.REMOVED
            del state.tracks[t.id]
            log.debug("frame %d: removed track %d", frame, t.id)

    state.frame_index += 1
    outputs = [
        TrackOutput(frame, t.id, t.box, t.score, t.category, t.source[1] if t.source and t.source[0] == frame else None)
        for t in sorted(state.active(), key=lambda t: t.id)
    ]
    return state, outputs


def run_sequence(
    frames: Sequence[Sequence[Prediction]],
    cfg: TrackerConfig = TrackerConfig(),
    hints: Sequence[Sequence[Box]] | None = None,
) -> list[list[TrackOutput]]:
    if not frames:
        raise ValueError("empty frame list")
    state = TrackState()
    out = []
    for f, dets in enumerate(frames):
        _, tracks = step(state, dets, cfg, None if hints is None else hints[f])
        out.append(tracks)
    return out
