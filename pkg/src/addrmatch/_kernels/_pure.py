"""Pure-Python edit-distance kernels.

Fallback used when the compiled extension is unavailable (or when
ADDRMATCH_PURE=1 is set). Same API as ``_speedups``.
"""
from __future__ import annotations

import numpy as np


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (insert/delete/substitute all cost 1)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    cur = [0] * (len(b) + 1)
    for i, ca in enumerate(a, 1):
        cur[0] = i
        for j, cb in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev, cur = cur, prev
    return prev[len(b)]


def levenshtein2(a: str, b: str) -> int:
    """Edit distance with substitution cost 2, insert/delete cost 1.

    Equals len(a)+len(b) minus twice the longest common subsequence.
    """
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    cur = [0] * (len(b) + 1)
    for i, ca in enumerate(a, 1):
        cur[0] = i
        for j, cb in enumerate(b, 1):
            if ca == cb:
                cur[j] = prev[j - 1]
            else:
                cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + 2)
        prev, cur = cur, prev
    return prev[len(b)]


def levenshtein_many(xs: list[str], ys: list[str]) -> np.ndarray:
    if len(xs) != len(ys):
        raise ValueError("input lists must have equal length")
    return np.fromiter((levenshtein(a, b) for a, b in zip(xs, ys)),
                       dtype=np.int64, count=len(xs))


def levenshtein2_many(xs: list[str], ys: list[str]) -> np.ndarray:
    if len(xs) != len(ys):
        raise ValueError("input lists must have equal length")
    return np.fromiter((levenshtein2(a, b) for a, b in zip(xs, ys)),
                       dtype=np.int64, count=len(xs))


def distance_matrix(xs: list[str], ys: list[str], sub_cost: int) -> np.ndarray:
    fn = levenshtein if sub_cost == 1 else levenshtein2
    out = np.empty((len(xs), len(ys)), dtype=np.int32)
    for i, a in enumerate(xs):
        for j, b in enumerate(ys):
            out[i, j] = fn(a, b)
    return out
