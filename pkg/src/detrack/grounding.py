"""Text prompts, token-span targets and the region-text alignment losses.

Categories are concatenated into one whitespace-tokenized prompt; each category
owns a contiguous span of token positions. A prediction's "class" is a
distribution over those positions plus a trailing no-object slot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor_core import log_softmax, softmax

MAX_TOKENS = 256
LOG_EPS = 1e-12
DEFAULT_TEMPERATURE = 0.07

NO_OBJECT = None  # category value meaning the no-object slot


@dataclass(frozen=True)
class TextPrompt:
    categories: tuple[str, ...]
    token_spans: tuple[tuple[int, int], ...]
    token_count: int

    def __post_init__(self):
        if len(self.categories) != len(self.token_spans):
            raise ValueError("one span per category required")
        if self.token_count > MAX_TOKENS:
            raise ValueError(f"prompt has {self.token_count} tokens, limit is {MAX_TOKENS}")
        prev_end = 0
        for name, (s, e) in zip(self.categories, self.token_spans):
            if not (prev_end <= s < e <= self.token_count):
                raise ValueError(f"bad span [{s}, {e}) for {name!r}")
            prev_end = e

    def span(self, category: str) -> tuple[int, int]:
        try:
            return self.token_spans[self.categories.index(category)]
        except ValueError:
            raise KeyError(f"category {category!r} not in prompt") from None

    def __contains__(self, category) -> bool:
        return category in self.categories

    def to_json(self) -> str:
        return json.dumps(
            {"categories": list(self.categories), "spans": [list(s) for s in self.token_spans]}
        )

    @classmethod
    def from_json(cls, s: str) -> "TextPrompt":
        d = json.loads(s)
        spans = tuple(tuple(sp) for sp in d["spans"])
        count = spans[-1][1] if spans else 0
        return cls(tuple(d["categories"]), spans, count)


@dataclass(frozen=True)
class TokenSpanDistribution:
    """Probabilities over ``token_count`` positions plus the no-object slot."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("distribution must be a nonempty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
            raise ValueError("distribution must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def token_count(self) -> int:
        return self.probs.size - 1

    @classmethod
    def from_logits(cls, logits) -> "TokenSpanDistribution":
        return cls(softmax(logits))

    def to_json(self) -> str:
        return json.dumps(self.probs.tolist())


@dataclass(frozen=True)
class AlignmentBatch:
    object_embeds: np.ndarray  # [N_box, D]
    token_embeds: np.ndarray  # [L, D]
    positives: np.ndarray  # bool [N_box, L]; row i is T_i+, column j is O_j+
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        o = np.asarray(self.object_embeds, dtype=np.float64)
        t = np.asarray(self.token_embeds, dtype=np.float64)
        pos = np.asarray(self.positives, dtype=bool)
        if o.ndim != 2 or t.ndim != 2 or o.shape[1] != t.shape[1]:
            raise ValueError(f"embedding shapes {o.shape} and {t.shape} do not agree")
        if o.shape[0] < 1 or t.shape[0] < 1:
            raise ValueError("need at least one object and one token")
        if pos.shape != (o.shape[0], t.shape[0]):
            raise ValueError(f"positives must be {(o.shape[0], t.shape[0])}, got {pos.shape}")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not (np.all(np.isfinite(o)) and np.all(np.isfinite(t))):
            raise ValueError("non-finite embeddings")
        object.__setattr__(self, "object_embeds", o)
        object.__setattr__(self, "token_embeds", t)
        object.__setattr__(self, "positives", pos)

    @classmethod
    def from_sets(cls, object_embeds, token_embeds, token_sets: Sequence[Sequence[int]], temperature=DEFAULT_TEMPERATURE):
        """Build from per-object positive token sets; the per-token sets follow."""
        n, l = len(object_embeds), len(token_embeds)
        pos = np.zeros((n, l), dtype=bool)
        for i, toks in enumerate(token_sets):
            pos[i, list(toks)] = True
        return cls(object_embeds, token_embeds, pos, temperature)


def build_prompt(categories: Sequence[str]) -> TextPrompt:
    if not categories:
        raise ValueError("at least one category required")
    if len(set(categories)) != len(categories):
        raise ValueError("duplicate category names")
    spans = []
    pos = 0
    for name in categories:
        n = len(name.split())
        if n == 0:
            raise ValueError("blank category name")
        spans.append((pos, pos + n))
        pos += n
    if pos > MAX_TOKENS:
        raise ValueError(f"prompt needs {pos} tokens, limit is {MAX_TOKENS}")
    return TextPrompt(tuple(categories), tuple(spans), pos)


def target_distribution(span: tuple[int, int] | None, token_count: int) -> TokenSpanDistribution:
    """Uniform mass over ``span``; ``None`` puts all mass on the no-object slot."""
    p = np.zeros(token_count + 1)
    if span is None:
        p[-1] = 1.0
        return TokenSpanDistribution(p)
    s, e = span
    if e <= s:
        raise ValueError(f"empty span [{s}, {e})")
    if s < 0 or e > token_count:
        raise ValueError(f"span [{s}, {e}) outside [0, {token_count})")
    p[s:e] = 1.0 / (e - s)
    return TokenSpanDistribution(p)


def _stack(dists) -> np.ndarray:
    rows = [d.probs if isinstance(d, TokenSpanDistribution) else np.asarray(d, dtype=np.float64) for d in dists]
    if not rows:
        return np.zeros((0, 0))
    if len({r.size for r in rows}) != 1:
        raise ValueError("token counts differ")
    return np.vstack(rows)


def entropy(p) -> float:
    p = p.probs if isinstance(p, TokenSpanDistribution) else np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def soft_token_loss(pred, targets) -> float:
    """Mean cross-entropy between target and predicted span distributions.

    ``log`` is taken of ``max(p, 1e-12)`` so a zero-probability prediction
    stays finite and an exact one-hot match scores exactly zero.
    """
    P, Q = _stack(pred), _stack(targets)
    if P.shape[0] != Q.shape[0]:
        raise ValueError(f"{P.shape[0]} predictions vs {Q.shape[0]} targets")
    if P.shape[0] == 0:
        return 0.0
    if P.shape != Q.shape:
        raise ValueError("token counts differ")
    return float(-(Q * np.log(np.maximum(P, LOG_EPS))).sum(axis=1).mean())


def soft_token_loss_grad(logits, targets) -> tuple[float, np.ndarray]:
    """Loss and gradient w.r.t. logits, where predictions are ``softmax(logits)``."""
    Z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    Q = _stack(targets)
    if Z.shape != Q.shape:
        raise ValueError(f"logits {Z.shape} vs targets {Q.shape}")
    n = Z.shape[0]
    P = softmax(Z, axis=1)
    clipped = np.maximum(P, LOG_EPS)
    loss = float(-(Q * np.log(clipped)).sum(axis=1).mean())
    # dL/dP, zero where the clip is active
    g = np.where(P > LOG_EPS, -Q / clipped, 0.0) / n
    grad = P * (g - (P * g).sum(axis=1, keepdims=True))
    return loss, grad


def _contrastive_terms(batch: AlignmentBatch):
    O, T, pos = batch.object_embeds, batch.token_embeds, batch.positives
    S = O @ T.T / batch.temperature
    n_tok = pos.sum(axis=1)  # |T_i+|
    n_obj = pos.sum(axis=0)  # |O_j+|
    w_obj = np.where(pos, 1.0 / np.maximum(n_tok, 1)[:, None], 0.0)
    w_tok = np.where(pos, 1.0 / np.maximum(n_obj, 1)[None, :], 0.0)
    l_obj = float(-(w_obj * log_softmax(S, axis=1)).sum())
    l_tok = float(-(w_tok * log_softmax(S, axis=0)).sum())
    return S, w_obj, w_tok, l_obj, l_tok


def contrastive_alignment_loss(batch: AlignmentBatch) -> float:
    """Symmetric object/token contrastive loss ``(L_obj + L_tok) / 2``.

    Each object's term is averaged over its positive tokens and summed over
    objects; the token side mirrors it. Empty positive sets contribute 0.
    """
    if not batch.positives.any():
        raise ValueError("at least one object needs a positive token")
    _, _, _, l_obj, l_tok = _contrastive_terms(batch)
    return 0.5 * (l_obj + l_tok)


def contrastive_alignment_grad(batch: AlignmentBatch) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and gradients w.r.t. ``object_embeds`` and ``token_embeds``."""
    if not batch.positives.any():
        raise ValueError("at least one object needs a positive token")
    S, w_obj, w_tok, l_obj, l_tok = _contrastive_terms(batch)
    dS = -w_obj + w_obj.sum(axis=1, keepdims=True) * softmax(S, axis=1)
    dS += -w_tok + w_tok.sum(axis=0, keepdims=True) * softmax(S, axis=0)
    dS *= 0.5 / batch.temperature
    return 0.5 * (l_obj + l_tok), dS @ batch.token_embeds, dS.T @ batch.object_embeds


def span_scores(pred: TokenSpanDistribution, prompt: TextPrompt) -> np.ndarray:
    if pred.token_count != prompt.token_count:
        raise ValueError(f"distribution has {pred.token_count} tokens, prompt {prompt.token_count}")
    return np.array([pred.probs[s:e].sum() for s, e in prompt.token_spans])


def classify_by_alignment(
    pred: TokenSpanDistribution, prompt: TextPrompt, exclude_no_object: bool = False
) -> tuple[str | None, float]:
    """Pick the category whose span holds the most predicted mass.

    The no-object slot competes unless ``exclude_no_object``; it wins only when
    strictly larger. Ties between categories go to the earliest span.
    """
    scores = span_scores(pred, prompt)
    best = int(np.argmax(scores))  # argmax returns the first maximum
    null = float(pred.probs[-1])
    if not exclude_no_object and null > scores[best]:
        return NO_OBJECT, null
    return prompt.categories[best], float(scores[best])
