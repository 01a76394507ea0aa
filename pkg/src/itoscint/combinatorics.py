"""Permanents and partial pairings of two index sets."""
from __future__ import annotations

import functools
import itertools
import math

import numpy as np

MAX_PERMANENT = 10
MAX_PAIRING = 6


def permanent(a) -> complex:
    """Permanent of a square matrix by Ryser's formula with Gray-code updates."""
    a = np.asarray(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("permanent needs a square matrix")
    if n == 0:
        return 1.0
    if n > MAX_PERMANENT:
        raise ValueError(f"permanent of size {n} exceeds the guard {MAX_PERMANENT}")
    row_sums = np.zeros(n, dtype=np.result_type(a, float))
    total = 0.0
    sign = -1.0 if n % 2 else 1.0  # (-1)**(n - |S|) with |S| = 0
    gray_prev = 0
    for i in range(1, 2 ** n):
        gray = i ^ (i >> 1)
        changed = gray ^ gray_prev
        col = changed.bit_length() - 1
        if gray & changed:
            row_sums = row_sums + a[:, col]
        else:
            row_sums = row_sums - a[:, col]
        sign = -sign
        total += sign * np.prod(row_sums)
        gray_prev = gray
    return total


def permanent_batch(a) -> np.ndarray:
    """Permanents of a stack of square matrices (trailing two axes), by Ryser's formula."""
    a = np.asarray(a)
    n = a.shape[-1]
    if a.shape[-2] != n:
        raise ValueError("permanent needs square matrices")
    if n > MAX_PERMANENT:
        raise ValueError(f"permanent of size {n} exceeds the guard {MAX_PERMANENT}")
    if n == 0:
        return np.ones(a.shape[:-2])
    row_sums = np.zeros(a.shape[:-1], dtype=np.result_type(a, float))
    total = np.zeros(a.shape[:-2], dtype=row_sums.dtype)
    sign = -1.0 if n % 2 else 1.0
    gray_prev = 0
    for i in range(1, 2 ** n):
        gray = i ^ (i >> 1)
        changed = gray ^ gray_prev
        col = changed.bit_length() - 1
        row_sums = row_sums + a[..., :, col] if gray & changed else row_sums - a[..., :, col]
        sign = -sign
        total = total + sign * np.prod(row_sums, axis=-1)
        gray_prev = gray
    return total


def permanent_naive(a) -> complex:
    """Permanent by summing over all ``n!`` permutations."""
    a = np.asarray(a)
    n = a.shape[0]
    return sum(math.prod(a[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n))) if n else 1.0


@functools.lru_cache(maxsize=None)
def partial_matchings(p: int, q: int) -> tuple:
    """All non-empty sets of pairs ``(j, l)`` with distinct ``j`` and distinct ``l``.

    ``j`` ranges over ``range(p)`` and ``l`` over ``range(q)``; there are
    ``sum_m C(p,m) C(q,m) m!`` of them.
    """
    if p > MAX_PAIRING or q > MAX_PAIRING:
        raise ValueError(f"pairings limited to p, q <= {MAX_PAIRING}")
    out = []
    for m in range(1, min(p, q) + 1):
        for rows in itertools.combinations(range(p), m):
            for cols in itertools.permutations(range(q), m):
                out.append(tuple(zip(rows, cols)))
    return tuple(out)


def n_matchings(p: int, q: int) -> int:
    return sum(math.comb(p, m) * math.comb(q, m) * math.factorial(m) for m in range(1, min(p, q) + 1))
