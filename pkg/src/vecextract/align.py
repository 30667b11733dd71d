"""Assignment of T items onto M slots: order-preserving and unrestricted."""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment


def monotone_assign(cost: np.ndarray) -> np.ndarray:
    """Strictly increasing map rows -> columns minimizing the summed cost.

    ``cost`` is a (T, M) array with T <= M. Among optimal maps the
    lexicographically smallest one is returned. Runs in O(T * M).

    The table ``best[i, k]`` holds the optimal cost of placing rows ``i..T-1``
    onto columns ``k..M-1``; the forward walk takes column ``k`` for row ``i``
    whenever doing so attains ``best[i, k]`` exactly, which yields the
    smallest index at every step.
    """
    cost = np.asarray(cost, dtype=float)
    T, M = cost.shape
    if T > M:
        raise ValueError(f"cannot place {T} rows onto {M} columns monotonically")
    if T == 0:
        return np.zeros(0, dtype=int)
    inf = np.inf
    best = np.full((T + 1, M + 1), inf)
    best[T, :] = 0.0
    for i in range(T - 1, -1, -1):
        row = cost[i]
        nxt = best[i + 1]
        # columns k with k <= M - (T - i) remain feasible
        for k in range(M - (T - i), -1, -1):
            take = row[k] + nxt[k + 1]
            skip = best[i, k + 1]
            best[i, k] = take if take <= skip else skip
    assignment = np.empty(T, dtype=int)
    k = 0
    for i in range(T):
        while cost[i, k] + best[i + 1, k + 1] != best[i, k]:
            k += 1
        assignment[i] = k
        k += 1
    return assignment


def _row_sum(cost, assignment):
    total = 0.0
    for i, j in enumerate(assignment):
        total += float(cost[i, j])
    return total


def _lsa_value(cost, rows, cols):
    if not rows:
        return 0.0
    sub = cost[np.ix_(rows, cols)]
    r, c = linear_sum_assignment(sub)
    return float(sub[r, c].sum())


def injective_assign(cost: np.ndarray, rtol: float = 1e-9, max_nodes: int = 4000) -> np.ndarray:
    """Injective map rows -> columns minimizing the summed cost.

    Optimal assignments whose totals agree within ``rtol`` count as ties
    (l1 costs tie often). Among them the one with the smallest row-order
    sum is returned, then the lexicographically smallest. Candidates are
    enumerated depth first in column order, so the first leaf is already
    the lexicographically smallest tie; ``max_nodes`` caps the search.
    """
    cost = np.asarray(cost, dtype=float)
    T, M = cost.shape
    if T > M:
        raise ValueError(f"cannot place {T} rows onto {M} columns")
    if T == 0:
        return np.zeros(0, dtype=int)
    r, c = linear_sum_assignment(cost)
    opt = float(cost[r, c].sum())
    limit = opt + rtol * max(1.0, abs(opt))
    best = None
    nodes = 0
    assignment = []

    def walk(i, partial, used):
        nonlocal best, nodes
        if i == T:
            cand = (_row_sum(cost, assignment), tuple(assignment))
            if best is None or cand < best:
                best = cand
            return
        rest = list(range(i + 1, T))
        for j in range(M):
            if j in used or nodes >= max_nodes:
                continue
            nodes += 1
            cols = [k for k in range(M) if k not in used and k != j]
            if partial + cost[i, j] + _lsa_value(cost, rest, cols) > limit:
                continue
            assignment.append(j)
            walk(i + 1, partial + cost[i, j], used | {j})
            assignment.pop()

    walk(0, 0.0, frozenset())
    if best is None:  # node cap hit before any leaf
        out = np.empty(T, dtype=int)
        out[r] = c
        return out
    return np.array(best[1], dtype=int)
