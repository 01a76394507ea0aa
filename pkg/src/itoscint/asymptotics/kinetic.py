"""Kinetic-regime ``p + p`` moments for beta = 1 (broad beams at the medium scale).

Every non-empty partial pairing ``k`` of the X and Y indices contributes

    int prod_{(j,l) in k} [Rk(y_l - x_j, zeta_jl) - 1] exp(i zeta . r) H_k_hat(zeta) dzeta / (2 pi)**(m d)

where ``Rk`` is the two-point kernel without its ``exp(-k0**2 R(0) z / 4)``
factor and ``H_k_hat`` is the Fourier transform of the source moment with
the paired points merged into one variable each and the unpaired points
pinned at ``r``.  For Gaussian-form sources ``H_k_hat`` is a sum of complex
Gaussians; the ``zeta`` integral is done on a tensor Gauss-Legendre grid.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .. import medium as med
from ..combinatorics import partial_matchings
from ..source import temporal_kernel
from .gaussian import has_gaussian_form
from .moments import QUAD_RTOL, TRUNCATION, OutOfRangeError, QuadratureError, _gamma0, _source_moment_at_centre

MAX_P = 2
CHUNK = 1 << 18


def _affine(point, m, d, r):
    """Selector ``L`` and offset ``c`` with ``point = L w + c``."""
    L = np.zeros((d, m * d))
    if point == "r":
        return L, np.asarray(r, float)
    L[:, point * d:(point + 1) * d] = np.eye(d)
    return L, np.zeros(d)


def _term_gaussian(source, xs, ys, sigma, m, d, r):
    """``(P, b, c)`` with ``prod_j J(x_j, y_sigma(j)) = exp(-w.P.w/2 + b.w + c)``."""
    P = np.zeros((m * d, m * d))
    b = np.zeros(m * d)
    c = 0.0
    env = 1.0 / source.envelope_r0 ** 2
    coup = 0.0 if source.coherence_kind == "fully_coherent" else 0.5 / source.coherence_length ** 2
    for j, l in enumerate(sigma):
        La, ca = _affine(xs[j], m, d, r)
        Lb, cb = _affine(ys[l], m, d, r)
        for coef, L, cc in ((env, La, ca), (env, Lb, cb), (coup, La - Lb, ca - cb)):
            if coef == 0:
                continue
            P += 2 * coef * L.T @ L
            b += -2 * coef * L.T @ cc
            c += -coef * cc @ cc
    return P, b, c


def _pairing_transform(q, source, pairing, p):
    """Gaussian pieces of ``H_k_hat`` for one pairing: ``(weight, P^-1, b, c, log|P|)``."""
    d = q.dim
    m = len(pairing)
    xs = ["r"] * p
    ys = ["r"] * p
    for k, (j, l) in enumerate(pairing):
        xs[j] = k
        ys[l] = k
    Ft = temporal_kernel(source, q.T[:p, None] - q.T[None, p:])
    pieces = []
    for sigma in itertools.permutations(range(p)):
        weight = math.prod(Ft[j, sigma[j]] for j in range(p))
        if weight == 0:
            continue
        P, b, c = _term_gaussian(source, xs, ys, sigma, m, d, q.r)
        sign, logdet = np.linalg.slogdet(P)
        if sign <= 0:
            raise ValueError("degenerate source quadratic form")
        pieces.append((weight, np.linalg.inv(P), b, c, logdet))
    return pieces


def _piece_value(piece, zeta, m, d):
    """One Gaussian piece of ``H_k_hat`` at the rows of ``zeta``."""
    weight, Pinv, b, c, logdet = piece
    v = b[None, :] - 1j * zeta
    quad = np.einsum("ni,ij,nj->n", v, Pinv, v)
    return weight * np.exp(0.5 * quad + c + 0.5 * m * d * math.log(2 * math.pi) - 0.5 * logdet)


def _kernel_minus_one(q, medium, tau, zeta_blk):
    """``Rk(tau, zeta) - 1`` for each row of ``zeta_blk`` (shape ``(n, d)``)."""
    method = "closed" if medium.kind == "gaussian" else "gl"
    if q.dim == 1:
        lg = med.cal_r_log(medium, float(tau[0]), zeta_blk[:, 0], q.z, 1.0, q.k0, method)
    else:
        lg = med.cal_r_log(medium, np.asarray(tau, float), zeta_blk, q.z, 1.0, q.k0, method)
    return np.expm1(lg)


def _pairing_integral(q, medium, source, pairing, p, floor=0.0, rtol=QUAD_RTOL):
    """Sum over Gaussian pieces, each integrated in its own whitened coordinates.

    The modulus of a piece is a centred Gaussian in ``zeta`` with covariance
    ``P``; substituting ``zeta = chol(P) u`` makes it isotropic so one box
    ``|u_i| <= sqrt(2 ln(1/TRUNCATION))`` serves every direction.
    """
    d = q.dim
    m = len(pairing)
    dims = m * d
    half = math.sqrt(2 * math.log(1 / TRUNCATION))
    taus = [q.Y[l] - q.X[j] for j, l in pairing]
    rr = np.tile(q.r, m)
    total = 0.0
    for piece in _pairing_transform(q, source, pairing, p):
        chol = np.linalg.cholesky(np.linalg.inv(piece[1]))
        jac = float(np.prod(np.diag(chol)))
        n = 32 if dims <= 2 else 12
        n_max = 4096 if dims == 1 else (1024 if dims == 2 else 64)
        prev, history = None, []
        while True:
            x, w = np.polynomial.legendre.leggauss(n)
            x, w = x * half, w * half
            acc = 0.0
            size = n ** dims
            for start in range(0, size, CHUNK):
                idx = np.arange(start, min(size, start + CHUNK))
                digits = np.stack(np.unravel_index(idx, (n,) * dims), axis=-1)
                zeta = x[digits] @ chol.T
                f = _piece_value(piece, zeta, m, d) * np.exp(1j * zeta @ rr)
                for k, tau in enumerate(taus):
                    f = f * _kernel_minus_one(q, medium, tau, zeta[:, k * d:(k + 1) * d])
                acc += np.sum(np.prod(w[digits], axis=-1) * f)
            val = acc * jac / (2 * math.pi) ** dims
            history.append((n, val))
            if prev is not None and abs(val - prev) <= rtol * max(abs(val), floor):
                break
            if 2 * n > n_max:
                raise QuadratureError(f"kinetic pairing integral {pairing}: no convergence; history {history}")
            prev = val
            n *= 2
        total += val
    return total


def kinetic_beta1_mpp(q, medium, source, p: int = None) -> complex:
    """Kinetic ``p + p`` moment for beta = 1, Gaussian-form sources, ``p <= 2``."""
    p = q.p if p is None else p
    if p > MAX_P:
        raise OutOfRangeError(f"kinetic beta=1 moments implemented for p <= {MAX_P}")
    if not has_gaussian_form(source):
        raise OutOfRangeError("kinetic beta=1 moments need a gaussian or fully coherent source")
    damp = math.exp(-p * q.k0 ** 2 * medium.sigma_R2 * q.z / 4)
    total = _source_moment_at_centre(q, source, p)
    floor = 1e-6 * abs(total) if total else 1e-14
    if q.z > 0 and medium.sigma_R2 > 0:
        for pairing in partial_matchings(p, p):
            total += _pairing_integral(q, medium, source, pairing, p, floor)
    return complex(damp * total)


def kinetic_beta1_m22(q, medium, source) -> complex:
    return kinetic_beta1_mpp(q, medium, source, 2)
