"""Unified image/video input handling and temporal-aware sequential attention.

Videos ``[B, T, H, W, C]`` are folded into frame batches ``[B*T, H, W, C]`` so
that images (``T == 1``) and clips share the per-frame feature path. Per-level
features are then reweighted by a spatial gate followed by a temporal gate::

    out[b,t,h,w,c] = temporal[b,t,c] * spatial[b,t,h,w] * F[b,t,h,w,c]

where ``temporal = hard_sigmoid(linear(spatial_mean(spatial * F))) / T``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .tensor_core import Tensor, hard_sigmoid, linear_map, spatial_mean

DEFAULT_CLIP_LEN = 3


@dataclass(frozen=True)
class FrameBatch:
    data: np.ndarray  # [B*T, H, W, C]
    b: int
    t: int

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("temporal length must be >= 1")
        if self.data.ndim != 4:
            raise ValueError(f"frame batch must be 4-D, got shape {self.data.shape}")


@dataclass(frozen=True)
class FeatureMap:
    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        levels = tuple(np.asarray(f, dtype=np.float64) for f in self.levels)
        if not levels:
            raise ValueError("feature map needs at least one level")
        for f in levels:
            if f.ndim != 5:
                raise ValueError(f"level must be [B, T, H, W, C], got {f.shape}")
        bt = levels[0].shape[:2]
        for prev, cur in zip(levels, levels[1:]):
            if cur.shape[:2] != bt:
                raise ValueError("all levels must share batch and temporal sizes")
            if cur.shape[2] > prev.shape[2] or cur.shape[3] > prev.shape[3]:
                raise ValueError("spatial sizes must be nonincreasing across levels")
        object.__setattr__(self, "levels", levels)

    @property
    def scale_count(self) -> int:
        return len(self.levels)

    def to_json(self) -> str:
        return json.dumps({"levels": [Tensor.from_array(f).to_dict() for f in self.levels]})

    @classmethod
    def from_json(cls, s: str) -> "FeatureMap":
        d = json.loads(s)
        return cls(tuple(Tensor.from_dict(t).to_array() for t in d["levels"]))


def fold_temporal(video) -> FrameBatch:
    video = np.asarray(video, dtype=np.float64)
    if video.ndim != 5:
        raise ValueError(f"video must be [B, T, H, W, C], got {video.shape}")
    b, t = video.shape[:2]
    if t < 1:
        raise ValueError("temporal length must be >= 1")
    return FrameBatch(video.reshape((b * t,) + video.shape[2:]), b, t)


def unfold_temporal(frames: FrameBatch) -> np.ndarray:
    n = frames.data.shape[0]
    if n % frames.t != 0:
        raise ValueError(f"batch {n} is not divisible by temporal length {frames.t}")
    return frames.data.reshape((n // frames.t, frames.t) + frames.data.shape[1:])


@dataclass(frozen=True)
class LinearParams:
    """Weights of a 1x1 convolution, i.e. a per-location channel affine map."""

    weight: np.ndarray  # [C_in, C_out]
    bias: np.ndarray  # [C_out]

    @classmethod
    def zeros(cls, c_in: int, c_out: int) -> "LinearParams":
        return cls(np.zeros((c_in, c_out)), np.zeros(c_out))

    def __call__(self, v) -> np.ndarray:
        return linear_map(v, self.weight, self.bias)


class SpatialGate(Protocol):
    def __call__(self, level: np.ndarray) -> np.ndarray:
        """Return per-location weights ``[..., H, W]`` in [0, 1]."""


class IdentitySpatialGate:
    def __call__(self, level):
        level = np.asarray(level)
        return np.ones(level.shape[:-1])


@dataclass(frozen=True)
class LinearSpatialGate:
    """Scalar gate per location: hard_sigmoid of a channel -> 1 linear map."""

    params: LinearParams

    def __post_init__(self):
        if self.params.weight.shape[1] != 1:
            raise ValueError("spatial gate maps channels to a single scalar")

    def __call__(self, level):
        return hard_sigmoid(self.params(level))[..., 0]


def spatial_attention_weights(level, gate: SpatialGate | None = None) -> np.ndarray:
    gate = IdentitySpatialGate() if gate is None else gate
    return gate(level)


def temporal_attention_weights(level, f: LinearParams, activation: Callable = hard_sigmoid) -> np.ndarray:
    """Per-(b, t, c) weights ``activation(f(mean_hw(level))) / T``, each in [0, 1/T].

    ``activation`` must map into [0, 1]; the default is :func:`hard_sigmoid`.
    """
    level = np.asarray(level, dtype=np.float64)
    if level.ndim != 5:
        raise ValueError(f"level must be [B, T, H, W, C], got {level.shape}")
    t = level.shape[1]
    return activation(f(spatial_mean(level))) * (1.0 / t)


@dataclass
class LevelParams:
    temporal: LinearParams
    spatial: SpatialGate = field(default_factory=IdentitySpatialGate)
    activation: Callable = hard_sigmoid


def _attend_level(level: np.ndarray, p: LevelParams) -> np.ndarray:
    sw = spatial_attention_weights(level, p.spatial)
    attended = sw[..., None] * level
    tw = temporal_attention_weights(attended, p.temporal, p.activation)
    return tw[:, :, None, None, :] * attended


def sequential_attention(F: FeatureMap, params: Sequence[LevelParams]) -> FeatureMap:
    if len(params) != F.scale_count:
        raise ValueError(f"{F.scale_count} levels but {len(params)} parameter sets")
    return FeatureMap(tuple(_attend_level(f, p) for f, p in zip(F.levels, params)))


def attend_images(images, p: LevelParams) -> np.ndarray:
    """Image path: gate a ``[B, H, W, C]`` batch with no temporal axis at all."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4:
        raise ValueError(f"images must be [B, H, W, C], got {images.shape}")
    sw = spatial_attention_weights(images, p.spatial)
    attended = sw[..., None] * images
    tw = p.activation(p.temporal(spatial_mean(attended)))
    return tw[:, None, None, :] * attended
