"""Dense array helpers and the numeric kernels shared by the other modules.

Arrays are plain row-major ``numpy.ndarray`` values. :class:`Tensor` is the
validated, immutable wrapper used at serialization boundaries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "GradCheckReport",
    "spatial_mean",
    "hard_sigmoid",
    "linear_map",
    "softmax",
    "log_softmax",
    "finite_diff_grad",
    "check_gradient",
]


class NonFiniteError(ValueError):
    """Raised when an evaluation produces NaN or Inf."""


@dataclass(frozen=True)
class Tensor:
    shape: tuple[int, ...]
    data: tuple[float, ...]

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if any(s < 0 for s in shape):
            raise ValueError(f"negative dimension in shape {shape}")
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if n != len(self.data):
            raise ValueError(f"shape {shape} needs {n} elements, got {len(self.data)}")
        data = tuple(float(v) for v in self.data)
        if not all(np.isfinite(data)):
            raise NonFiniteError("tensor contains non-finite values")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr) -> "Tensor":
        a = np.asarray(arr, dtype=np.float64)
        return cls(a.shape, tuple(a.ravel(order="C").tolist()))

    def to_array(self) -> np.ndarray:
        return np.asarray(self.data, dtype=np.float64).reshape(self.shape)

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "data": list(self.data)}

    @classmethod
    def from_dict(cls, d: dict) -> "Tensor":
        return cls(tuple(d["shape"]), tuple(d["data"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "Tensor":
        return cls.from_dict(json.loads(s))


@dataclass
class GradCheckReport:
    max_abs_err: float
    max_rel_err: float
    per_coordinate: list[tuple[int, float, float]] = field(default_factory=list)

    def ok(self, tol: float = 1e-3) -> bool:
        return self.max_rel_err < tol


def spatial_mean(F) -> np.ndarray:
    """Average ``F[..., H, W, C]`` over its two spatial axes."""
    F = np.asarray(F, dtype=np.float64)
    if F.ndim < 3:
        raise ValueError(f"expected at least [H, W, C], got shape {F.shape}")
    h, w, c = F.shape[-3:]
    if h * w < 1:
        raise ValueError("empty spatial extent")
    return F.reshape(F.shape[:-3] + (h * w, c)).mean(axis=-2)


def hard_sigmoid(x):
    """Piecewise-linear sigmoid ``clip(x / 6 + 1/2, 0, 1)``.

    Works on scalars and arrays; scalars come back as ``float``.
    """
    out = np.clip(np.asarray(x, dtype=np.float64) / 6.0 + 0.5, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def linear_map(v, W, b) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2 or b.shape != (W.shape[1],):
        raise ValueError(f"bad weight/bias shapes {W.shape}, {b.shape}")
    if v.shape[-1] != W.shape[0]:
        raise ValueError(f"channel mismatch: input {v.shape[-1]} vs weight {W.shape[0]}")
    return v @ W + b


def softmax(v, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    z = v - v.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(v, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    z = v - v.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def finite_diff_grad(f: Callable[[np.ndarray], float], x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function at ``x``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + eps
        fp = float(f(x.copy()))
        x.flat[i] = orig - eps
        fm = float(f(x.copy()))
        x.flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            idx = tuple(int(k) for k in np.unravel_index(i, x.shape))
            raise NonFiniteError(f"non-finite function value at coordinate {idx}")
        grad.flat[i] = (fp - fm) / (2.0 * eps)
    return grad


def check_gradient(
    f: Callable[[np.ndarray], float],
    analytic: np.ndarray,
    x,
    eps: float = 1e-5,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare an analytic gradient with :func:`finite_diff_grad`.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``;
    the floor keeps coordinates whose true gradient is ~0 from dominating.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = finite_diff_grad(f, x, eps)
    if analytic.shape != numeric.shape:
        raise ValueError(f"gradient shape {analytic.shape} != input shape {numeric.shape}")
    a, n = analytic.ravel(), numeric.ravel()
    abs_err = np.abs(a - n)
    rel_err = abs_err / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    per = [(i, float(a[i]), float(n[i])) for i in range(a.size)]
    if not per:
        raise ValueError("gradient check on an empty input")
    return GradCheckReport(float(abs_err.max()), float(rel_err.max()), per)


def merge_reports(reports: Sequence[GradCheckReport]) -> GradCheckReport:
    """Worst-case summary over several reports; keeps the worst report's coordinates."""
    worst = max(reports, key=lambda r: r.max_rel_err)
    return GradCheckReport(
        max(r.max_abs_err for r in reports),
        worst.max_rel_err,
        list(worst.per_coordinate),
    )
