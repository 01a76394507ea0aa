"""Pairing functionals that assemble higher moments from first and second moments."""
from __future__ import annotations

import math

import numpy as np

from ..combinatorics import MAX_PAIRING, partial_matchings, permanent


def _guard(p: int, q: int) -> None:
    if p > MAX_PAIRING or q > MAX_PAIRING:
        raise ValueError(f"pairing functionals limited to p, q <= {MAX_PAIRING}")


def functional_F(h, h_conj, g):
    """Combine ``p`` first moments ``h``, ``q`` conjugate first moments and a ``p x q`` block ``g``.

    Sums ``prod(g - h h') * prod(unpaired h) * prod(unpaired h')`` over every
    non-empty partial pairing, plus the fully unpaired product.
    """
    h = np.asarray(h).ravel()
    hc = np.asarray(h_conj).ravel()
    g = np.asarray(g).reshape(h.size, hc.size)
    p, q = h.size, hc.size
    _guard(p, q)
    total = math.prod(h) * math.prod(hc)
    for pairing in partial_matchings(p, q):
        rows = {j for j, _ in pairing}
        cols = {l for _, l in pairing}
        term = math.prod(g[j, l] - h[j] * hc[l] for j, l in pairing)
        term *= math.prod(h[j] for j in range(p) if j not in rows)
        term *= math.prod(hc[l] for l in range(q) if l not in cols)
        total += term
    return total


def functional_G(h, g):
    """Sum over partial pairings of ``prod(g - h)`` times the permanent of ``h`` on the unpaired indices.

    Adds ``perm(h)`` for the empty pairing.  Algebraically this equals
    ``perm(g)``; the explicit sum is kept because it is how the limit is
    assembled term by term.
    """
    h = np.asarray(h)
    g = np.asarray(g)
    p = h.shape[0]
    if h.shape != (p, p) or g.shape != (p, p):
        raise ValueError("functional_G needs two square matrices of equal size")
    _guard(p, p)
    total = permanent(h)
    for pairing in partial_matchings(p, p):
        rows = [j for j in range(p) if j not in {a for a, _ in pairing}]
        cols = [l for l in range(p) if l not in {b for _, b in pairing}]
        term = math.prod(g[j, l] - h[j, l] for j, l in pairing)
        total += term * permanent(h[np.ix_(rows, cols)])
    return total
