"""Minimum-cost bipartite assignment (Kuhn-Munkres, shortest augmenting paths).

Among all optimal matchings the one whose (row, col) pair list sorted by row
is lexicographically smallest is returned, so results never depend on
floating-point accidents of the search order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AssignmentResult:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_preds: list[int] = field(default_factory=list)
    total_cost: float = 0.0

    def pred_for(self, gt_index: int) -> int | None:
        for g, p, _ in self.pairs:
            if g == gt_index:
                return p
        return None

    def check(self, n_preds: int) -> None:
        gts = [g for g, _, _ in self.pairs]
        preds = [p for _, p, _ in self.pairs]
        if len(set(gts)) != len(gts) or len(set(preds)) != len(preds):
            raise ValueError("assignment is not injective")
        if sorted(preds + list(self.unmatched_preds)) != list(range(n_preds)):
            raise ValueError("every prediction must be matched or unmatched exactly once")

    def to_dict(self) -> dict:
        return {
            "pairs": [[g, p, c] for g, p, c in self.pairs],
            "unmatched_preds": list(self.unmatched_preds),
            "total_cost": self.total_cost,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "AssignmentResult":
        d = json.loads(s)
        return cls([(int(g), int(p), float(c)) for g, p, c in d["pairs"]], list(d["unmatched_preds"]), float(d["total_cost"]))


def _solve(cost: list[list[float]]) -> tuple[list[int], list[float], list[float]]:
    """Optimal assignment for ``n <= m``; returns row->col and dual potentials."""
    n = len(cost)
    m = len(cost[0])
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)  # p[j]: row (1-based) matched to column j; column 0 is the root
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = cost[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = [-1] * n
    for j in range(1, m + 1):
        if p[j]:
            assign[p[j] - 1] = j - 1
    return assign, u[1:], v[1:]


def _optimum(C: np.ndarray, rows: list[int], cols: list[int]) -> tuple[float, dict[int, int | None]]:
    """Optimal cost and row->col map (None = unmatched) of a sub-problem."""
    if not rows or not cols:
        return 0.0, {r: None for r in rows}
    sub = C[np.ix_(rows, cols)]
    if len(rows) <= len(cols):
        assign, _, _ = _solve(sub.tolist())
        mapping = {rows[i]: cols[assign[i]] for i in range(len(rows))}
    else:
        assign, _, _ = _solve(sub.T.tolist())
        mapping = {r: None for r in rows}
        for k, i in enumerate(assign):
            mapping[rows[i]] = cols[k]
    total = sum(C[r, c] for r, c in sorted(mapping.items()) if c is not None)
    return float(total), mapping


def hungarian(cost) -> AssignmentResult:
    """Min-cost matching of size ``min(M, N)`` for an ``M x N`` cost matrix.

    Rows are ground-truth objects, columns predictions; unmatched columns
    are listed in ``unmatched_preds``.
    """
    C = np.asarray(cost, dtype=np.float64)
    if C.size == 0:
        n_cols = C.shape[1] if C.ndim == 2 else 0
        return AssignmentResult([], list(range(n_cols)), 0.0)
    if C.ndim != 2:
        raise ValueError(f"cost must be a matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    M, N = C.shape

    # duals of the full problem stay optimal for every residual problem
    # reached by fixing choices that belong to some optimum
    if M <= N:
        assign, u, v = _solve(C.tolist())
        reduced = C - np.asarray(u)[:, None] - np.asarray(v)[None, :]
        row_free_ok = np.zeros(M, dtype=bool)
        current: dict[int, int | None] = {i: assign[i] for i in range(M)}
    else:
        assign, u, v = _solve(C.T.tolist())
        reduced = C - np.asarray(v)[:, None] - np.asarray(u)[None, :]
        current = {i: None for i in range(M)}
        for k, i in enumerate(assign):
            current[i] = k
    best = float(sum(C[i, c] for i, c in sorted(current.items()) if c is not None))
    tol = 1e-9 * max(1.0, float(np.abs(C).max()))
    if M > N:
        row_free_ok = np.asarray(v) >= -tol

    fixed_cost = 0.0
    free_cols = list(range(N))
    for i in range(M):
        rest_rows = list(range(i + 1, M))
        options: list[int | None] = list(free_cols) + [None]
        chosen = current[i]
        for opt in options:
            if opt == chosen:
                break
            if opt is None:
                if not row_free_ok[i] or len(rest_rows) < len(free_cols):
                    continue
                sub_cost, sub_map = _optimum(C, rest_rows, free_cols)
                cand = fixed_cost + sub_cost
            else:
                if reduced[i, opt] > tol:
                    continue
                rest_cols = [c for c in free_cols if c != opt]
                sub_cost, sub_map = _optimum(C, rest_rows, rest_cols)
                cand = fixed_cost + C[i, opt] + sub_cost
            if cand <= best + tol:
                current = {**{r: current[r] for r in range(i)}, i: opt, **sub_map}
                chosen = opt
                break
        if chosen is not None:
            fixed_cost += C[i, chosen]
            free_cols.remove(chosen)

    pairs = [(i, c, float(C[i, c])) for i, c in sorted(current.items()) if c is not None]
    matched = {c for _, c, _ in pairs}
    total = float(sum(c for _, _, c in pairs))
    return AssignmentResult(pairs, [j for j in range(N) if j not in matched], total)
