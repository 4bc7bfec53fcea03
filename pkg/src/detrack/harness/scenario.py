"""Seeded synthetic scenarios: linear-motion ground truth plus noisy detections."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..assignment.boxes import Box
from ..assignment.matching import Prediction
from ..grounding import TokenSpanDistribution, build_prompt, target_distribution
from ..mot_metrics import TrajectorySet
from ..video_features import DEFAULT_CLIP_LEN

SCHEMA = "trivd-scenario/1"


@dataclass
class ScenarioConfig:
    seed: int = 0
    frames: int = 50
    categories: list[str] = field(default_factory=lambda: ["person", "car"])
    objects: int = 5  # per category
    image_size: tuple[float, float] = (640.0, 480.0)
    velocity: tuple[float, float] = (-4.0, 4.0)  # per-axis speed range, units per frame
    box_size: tuple[float, float] = (20.0, 60.0)
    box_jitter: float = 0.0
    score_noise: float = 0.0
    drop_prob: float = 0.0
    fp_rate: float = 0.0  # mean false positives per frame (Poisson)
    embed_dim: int = 16
    embed_noise: float = 0.0
    # (object id, first frame, end frame exclusive) with no detections
    occlusion_windows: list[tuple[int, int, int]] = field(default_factory=list)
    # keep occluded boxes in the ground truth (they then count as misses)
    occluded_in_gt: bool = False
    # tag detections with the query of the track that followed the same object
    # in the previous frame
    track_queries: bool = False
    clip_len: int = DEFAULT_CLIP_LEN

    def __post_init__(self):
        self.categories = list(self.categories)
        self.image_size = tuple(float(v) for v in self.image_size)
        self.velocity = tuple(float(v) for v in self.velocity)
        self.box_size = tuple(float(v) for v in self.box_size)
        self.occlusion_windows = [tuple(int(v) for v in w) for w in self.occlusion_windows]
        self.validate()

    def validate(self) -> None:
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if not self.categories or len(set(self.categories)) != len(self.categories):
            raise ValueError("categories must be nonempty and unique")
        if self.objects < 0:
            raise ValueError("objects must be >= 0")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must be a probability")
        for name in ("box_jitter", "score_noise", "fp_rate", "embed_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        w, h = self.image_size
        lo, hi = self.box_size
        if not 0 < lo <= hi < min(w, h):
            raise ValueError("box_size must fit inside the image")
        if self.velocity[0] > self.velocity[1]:
            raise ValueError("velocity range is inverted")
        if self.embed_dim < 1 or self.clip_len < 1:
            raise ValueError("embed_dim and clip_len must be >= 1")
        n = self.objects * len(self.categories)
        for obj, start, end in self.occlusion_windows:
            if not 0 <= obj < n or start > end:
                raise ValueError(f"bad occlusion window {(obj, start, end)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["image_size"] = list(self.image_size)
        d["velocity"] = list(self.velocity)
        d["box_size"] = list(self.box_size)
        d["occlusion_windows"] = [list(w) for w in self.occlusion_windows]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Scenario:
    config: ScenarioConfig
    gt: TrajectorySet
    detections: list[list[Prediction]]
    # lineage[f][k]: ground-truth object behind detection k of frame f, -1 for clutter
    lineage: list[list[int]]

    def to_dict(self) -> dict:
        frames = []
        for dets, lin in zip(self.detections, self.lineage):
            frames.append(
                [
                    {
                        "box": list(d.box.to_xywh()),
                        "probs": d.span_dist.probs.tolist(),
                        "score": d.score,
                        "origin": d.origin,
                        "embed": None if d.embed is None else d.embed.tolist(),
                        "lineage": g,
                    }
                    for d, g in zip(dets, lin)
                ]
            )
        return {"schema": SCHEMA, "config": self.config.to_dict(), "gt": self.gt.to_dict(), "detections": frames}

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported scenario schema {d.get('schema')!r}")
        dets, lineage = [], []
        for frame in d["detections"]:
            dets.append(
                [
                    Prediction(
                        box=Box.from_xywh(*e["box"]),
                        span_dist=TokenSpanDistribution(np.asarray(e["probs"])),
                        score=e["score"],
                        origin=e["origin"],
                        embed=None if e["embed"] is None else np.asarray(e["embed"]),
                    )
                    for e in frame
                ]
            )
            lineage.append([e["lineage"] for e in frame])
        return cls(ScenarioConfig.from_dict(d["config"]), TrajectorySet.from_dict(d["gt"]), dets, lineage)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _bounce(pos: float, vel: float, size: float, limit: float) -> tuple[float, float]:
    pos += vel
    if pos < 0:
        pos, vel = -pos, -vel
    if pos + size > limit:
        pos, vel = 2 * (limit - size) - pos, -vel
    return min(max(pos, 0.0), limit - size), vel


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    """Build a scenario; every random draw comes from ``cfg.seed``.

    Random numbers for each object are drawn every frame whether or not the
    object is occluded, so two configs differing only in occlusion windows
    share all other noise.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    prompt = build_prompt(cfg.categories)
    W, H = cfg.image_size
    n_tok = prompt.token_count
    uniform = np.full(n_tok + 1, 1.0 / (n_tok + 1))

    objs = []
    for cat in cfg.categories:
        for _ in range(cfg.objects):
            w, h = rng.uniform(*cfg.box_size, size=2)
            objs.append(
                {
                    "cat": cat,
                    "size": (w, h),
                    "pos": [rng.uniform(0, W - w), rng.uniform(0, H - h)],
                    "vel": list(rng.uniform(*cfg.velocity, size=2)),
                    "embed": _unit(rng.normal(size=cfg.embed_dim)),
                    "target": target_distribution(prompt.span(cat), n_tok).probs,
                }
            )
    hidden = {(o, f) for o, s, e in cfg.occlusion_windows for f in range(s, e)}

    rows = []
    detections: list[list[Prediction]] = []
    lineage: list[list[int]] = []
    for f in range(cfg.frames):
        if f > 0:
            for o in objs:
                w, h = o["size"]
                o["pos"][0], o["vel"][0] = _bounce(o["pos"][0], o["vel"][0], w, W)
                o["pos"][1], o["vel"][1] = _bounce(o["pos"][1], o["vel"][1], h, H)
        dets, lin = [], []
        for k, o in enumerate(objs):
            w, h = o["size"]
            box = Box(o["pos"][0], o["pos"][1], o["pos"][0] + w, o["pos"][1] + h)
            if (k, f) not in hidden or cfg.occluded_in_gt:
                rows.append((f, k, box, o["cat"]))
            drop = rng.random()
            jitter = rng.normal(0.0, 1.0, size=4) * cfg.box_jitter
            score_eps = rng.normal(0.0, 1.0) * cfg.score_noise
            embed_eps = rng.normal(0.0, 1.0, size=cfg.embed_dim) * cfg.embed_noise
            if (k, f) in hidden or drop < cfg.drop_prob:
                continue
            x0, y0, x1, y1 = box.as_array() + jitter
            x0, x1 = min(x0, x1 - 1.0), max(x1, x0 + 1.0)
            y0, y1 = min(y0, y1 - 1.0), max(y1, y0 + 1.0)
            score = float(np.clip(1.0 - abs(score_eps), 0.0, 1.0))
            probs = score * o["target"] + (1.0 - score) * uniform
            dets.append(
                Prediction(
                    box=Box(x0, y0, x1, y1),
                    span_dist=TokenSpanDistribution(probs / probs.sum()),
                    score=score,
                    embed=_unit(o["embed"] + embed_eps),
                )
            )
            lin.append(k)
        for _ in range(rng.poisson(cfg.fp_rate) if cfg.fp_rate > 0 else 0):
            w, h = rng.uniform(*cfg.box_size, size=2)
            x, y = rng.uniform(0, W - w), rng.uniform(0, H - h)
            cat = cfg.categories[rng.integers(len(cfg.categories))]
            score = float(rng.uniform(0.05, 0.6))
            target = target_distribution(prompt.span(cat), n_tok).probs
            probs = score * target + (1.0 - score) * uniform
            dets.append(
                Prediction(
                    box=Box(x, y, x + w, y + h),
                    span_dist=TokenSpanDistribution(probs / probs.sum()),
                    score=score,
                    embed=_unit(rng.normal(size=cfg.embed_dim)),
                )
            )
            lin.append(-1)
        detections.append(dets)
        lineage.append(lin)
    return Scenario(cfg, TrajectorySet.from_rows(rows), detections, lineage)
