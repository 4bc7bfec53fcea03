from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        vals = (self.x0, self.y0, self.x1, self.y1)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(f"inverted box {vals}")

    @classmethod
    def from_xywh(cls, x, y, w, h) -> "Box":
        return cls(x, y, x + w, y + h)

    @classmethod
    def from_array(cls, a) -> "Box":
        x0, y0, x1, y1 = (float(v) for v in a)
        return cls(x0, y0, x1, y1)

    def to_xywh(self) -> tuple[float, float, float, float]:
        return self.x0, self.y0, self.x1 - self.x0, self.y1 - self.y0

    def as_array(self) -> np.ndarray:
        return np.array([self.x0, self.y0, self.x1, self.y1])

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


def _coords(b):
    if isinstance(b, Box):
        return b.x0, b.y0, b.x1, b.y1
    x0, y0, x1, y1 = (float(v) for v in b)
    return x0, y0, x1, y1


def iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = _coords(a)
    bx0, by0, bx1, by1 = _coords(b)
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0 else 0.0


def giou(a, b) -> float:
    """Generalized IoU: ``IoU - |hull - union| / |hull|``, in [-1, 1].

    Zero-area inputs get IoU 0; a zero-area hull contributes no penalty.
    """
    ax0, ay0, ax1, ay1 = _coords(a)
    bx0, by0, bx1, by1 = _coords(b)
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    hull = (max(ax1, bx1) - min(ax0, bx0)) * (max(ay1, by1) - min(ay0, by0))
    ratio = inter / union if union > 0 else 0.0
    if hull <= 0:
        return ratio
    return ratio - (hull - union) / hull


def giou_grad(a, b) -> tuple[float, np.ndarray]:
    """GIoU and its gradient with respect to the coordinates of ``b``.

    Where min/max selections tie, the derivative follows ``b``'s side.
    Assumes both boxes and their hull have positive area.
    """
    ax0, ay0, ax1, ay1 = _coords(a)
    bx0, by0, bx1, by1 = _coords(b)

    ix_hi, ix_lo = min(ax1, bx1), max(ax0, bx0)
    iy_hi, iy_lo = min(ay1, by1), max(ay0, by0)
    iw, ih = ix_hi - ix_lo, iy_hi - iy_lo
    overlap = iw > 0 and ih > 0
    if not overlap:
        iw = ih = 0.0
    inter = iw * ih

    bw, bh = bx1 - bx0, by1 - by0
    union = (ax1 - ax0) * (ay1 - ay0) + bw * bh - inter
    cw = max(ax1, bx1) - min(ax0, bx0)
    ch = max(ay1, by1) - min(ay0, by0)
    hull = cw * ch

    # d(iw)/db, d(ih)/db
    d_iw = np.zeros(4)
    d_ih = np.zeros(4)
    if overlap:
        if bx0 >= ax0:
            d_iw[0] = -1.0
        if bx1 <= ax1:
            d_iw[2] = 1.0
        if by0 >= ay0:
            d_ih[1] = -1.0
        if by1 <= ay1:
            d_ih[3] = 1.0
    d_inter = d_iw * ih + d_ih * iw
    d_area_b = np.array([-bh, -bw, bh, bw])
    d_union = d_area_b - d_inter

    d_cw = np.zeros(4)
    d_ch = np.zeros(4)
    if bx0 <= ax0:
        d_cw[0] = -1.0
    if bx1 >= ax1:
        d_cw[2] = 1.0
    if by0 <= ay0:
        d_ch[1] = -1.0
    if by1 >= ay1:
        d_ch[3] = 1.0
    d_hull = d_cw * ch + d_ch * cw

    value = inter / union - 1.0 + union / hull
    grad = (
        d_inter / union
        - inter / union**2 * d_union
        + d_union / hull
        - union / hull**2 * d_hull
    )
    return value, grad
