"""Gaussian integrals and quadratic forms for Schell sources with Gaussian envelopes."""
from __future__ import annotations

import math

import numpy as np

from ..source import SourceSpec


def gauss_integral(P: np.ndarray, b: np.ndarray, c: complex = 0.0) -> complex:
    """``int exp(-w.P.w/2 + b.w + c) dw`` for real positive definite ``P`` and complex ``b``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    b = np.asarray(b, dtype=complex).ravel()
    n = P.shape[0]
    chol = np.linalg.cholesky(P)
    y = np.linalg.solve(chol, b)
    quad = np.sum(y * y)  # b.P^-1.b without conjugation
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    val = np.exp(0.5 * quad + c + 0.5 * n * math.log(2 * math.pi) - 0.5 * logdet)
    return complex(val)


def envelope_profile_ft(source: SourceSpec, zeta) -> np.ndarray:
    """Fourier transform of ``r -> Gamma(r, 0) = exp(-2|r|**2/r0**2)``."""
    r0 = source.envelope_r0
    zeta = np.asarray(zeta, dtype=float)
    z2 = zeta ** 2 if source.dim == 1 else np.sum(zeta ** 2, axis=-1)
    return (math.pi * r0 ** 2 / 2) ** (source.dim / 2) * np.exp(-r0 ** 2 * z2 / 8)


def has_gaussian_form(source: SourceSpec) -> bool:
    return source.coherence_kind in ("gaussian", "fully_coherent")


def coherence_precision(source: SourceSpec, pairs, n_points: int) -> np.ndarray:
    """Precision matrix ``P`` with ``prod_k J(x_a, x_b) = exp(-w.P.w/2)`` over ``pairs (a, b)``.

    ``w`` stacks the ``n_points`` points (``d`` coordinates each).
    """
    if not has_gaussian_form(source):
        raise ValueError("Gaussian quadratic form needs gaussian or fully_coherent coherence")
    d = source.dim
    eye = np.eye(d)
    P = np.zeros((n_points * d, n_points * d))
    env = 2.0 / source.envelope_r0 ** 2
    coup = 0.0 if source.coherence_kind == "fully_coherent" else 1.0 / source.coherence_length ** 2
    for a, b in pairs:
        sa, sb = slice(a * d, (a + 1) * d), slice(b * d, (b + 1) * d)
        P[sa, sa] += env * eye
        P[sb, sb] += env * eye
        P[sa, sa] += coup * eye
        P[sb, sb] += coup * eye
        P[sa, sb] -= coup * eye
        P[sb, sa] -= coup * eye
    return P
