"""Lateral covariance of the random medium and incremental phase screens.

Fourier convention: ``R_hat(k) = int R(x) exp(-i k.x) dx``, so
``R(x) = int R_hat(k) exp(i k.x) dk / (2 pi)**d``.
"""
from __future__ import annotations

import csv
import functools
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from .lattice import Grid

CLAMP_TOLERANCE = 1e-6


class TabulatedRangeWarning(RuntimeWarning):
    """Covariance requested beyond the range resolved by a tabulated spectrum."""


@dataclass(frozen=True)
class MediumSpec:
    """Medium covariance model.

    ``kind='gaussian'``: ``R(x) = sigma_R2 * exp(-|x|**2 / (2 ell_m**2))``.
    ``kind='tabulated'``: isotropic spectrum sampled at radial wavenumbers
    ``tabulated_k`` (ascending, starting at 0); ``sigma_R2`` is then derived.
    """

    kind: str = "gaussian"
    sigma_R2: float = 1.0
    ell_m: float = 1.0
    dim: int = 1
    tabulated_k: Optional[tuple] = None
    tabulated_spectrum: Optional[tuple] = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("medium dim must be 1 or 2")
        if self.kind == "gaussian":
            if self.sigma_R2 < 0:
                raise ValueError("sigma_R2 must be >= 0")
            if not self.ell_m > 0:
                raise ValueError("ell_m must be > 0")
        elif self.kind == "tabulated":
            if self.tabulated_k is None or self.tabulated_spectrum is None:
                raise ValueError("tabulated medium needs tabulated_k and tabulated_spectrum")
            k = np.asarray(self.tabulated_k, float)
            s = np.asarray(self.tabulated_spectrum, float)
            if k.shape != s.shape or k.ndim != 1 or k.size < 4:
                raise ValueError("tabulated k and spectrum must be 1-D arrays of equal length >= 4")
            if np.any(np.diff(k) <= 0) or k[0] < 0:
                raise ValueError("tabulated k must be ascending and non-negative")
            if np.any(s < 0):
                raise ValueError("tabulated spectrum must be non-negative")
            object.__setattr__(self, "tabulated_k", tuple(k))
            object.__setattr__(self, "tabulated_spectrum", tuple(s))
            object.__setattr__(self, "sigma_R2", float(_tabulated_r0(self)))
        else:
            raise ValueError(f"unknown medium kind {self.kind!r}")

    @property
    def sigma_m2(self) -> float:
        """Curvature ``sigma_R2 / ell_m**2`` of a Gaussian covariance at 0."""
        if self.kind != "gaussian":
            return float(-hessian_xi(self)[0, 0])
        return self.sigma_R2 / self.ell_m ** 2


def gaussian_medium(sigma_R2=1.0, ell_m=1.0, dim=1) -> MediumSpec:
    return MediumSpec("gaussian", float(sigma_R2), float(ell_m), int(dim))


def no_medium(dim=1) -> MediumSpec:
    return MediumSpec("gaussian", 0.0, 1.0, int(dim))


def load_tabulated_spectrum(path, dim: int = 1) -> MediumSpec:
    """Read a CSV with header columns ``k,spectrum``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"k", "spectrum"} - set(reader.fieldnames):
            raise ValueError(f"{path}: header must contain columns 'k' and 'spectrum'")
        rows = [(float(r["k"]), float(r["spectrum"])) for r in reader]
    k, s = np.array(rows).T
    return MediumSpec("tabulated", dim=dim, tabulated_k=tuple(k), tabulated_spectrum=tuple(s))


# --------------------------------------------------------------------------
# spectrum and covariance

def spectrum(spec: MediumSpec, k) -> np.ndarray:
    """``R_hat`` at wavenumber magnitude(s) ``|k|``."""
    kk = np.abs(np.asarray(k, dtype=float))
    if spec.kind == "gaussian":
        ell = spec.ell_m
        return spec.sigma_R2 * (2 * np.pi * ell ** 2) ** (spec.dim / 2) * np.exp(-0.5 * (ell * kk) ** 2)
    ktab = np.asarray(spec.tabulated_k)
    stab = np.asarray(spec.tabulated_spectrum)
    return np.interp(kk, ktab, stab, right=0.0)


def _radial_weight(spec: MediumSpec, k):
    # int R_hat(k) dk/(2pi)^d as a radial integral
    if spec.dim == 1:
        return 1.0 / np.pi
    return k / (2 * np.pi)


def _tabulated_r0(spec: MediumSpec) -> float:
    k = np.asarray(spec.tabulated_k)
    s = np.asarray(spec.tabulated_spectrum)
    return integrate.trapezoid(s * _radial_weight(spec, k), k)


@functools.lru_cache(maxsize=32)
def _tabulated_interpolant(spec: MediumSpec):
    k = np.asarray(spec.tabulated_k)
    s = np.asarray(spec.tabulated_spectrum)
    dk = np.min(np.diff(k))
    x_max = np.pi / dk
    # about eight nodes per oscillation of the highest tabulated wavenumber
    n = int(np.clip(8 * x_max * k[-1] / (2 * np.pi), 2048, 1 << 15)) + 1
    x = np.linspace(0.0, x_max, n)
    weight = s * _radial_weight(spec, k)
    vals = np.empty(n)
    for start in range(0, n, 512):
        xs = x[start:start + 512]
        kernel = np.cos(np.outer(xs, k)) if spec.dim == 1 else special.j0(np.outer(xs, k))
        vals[start:start + 512] = integrate.trapezoid(kernel * weight, k, axis=1)
    return CubicSpline(x, vals), x_max


def covariance_r(spec: MediumSpec, x) -> np.ndarray:
    """Covariance ``R(x)``; ``x`` has trailing axis of length ``dim`` (or is scalar for d=1)."""
    r = _norm(spec, x)
    if spec.kind == "gaussian":
        return spec.sigma_R2 * np.exp(-0.5 * (r / spec.ell_m) ** 2)
    interp, x_max = _tabulated_interpolant(spec)
    out = np.where(r <= x_max, interp(np.minimum(r, x_max)), 0.0)
    if np.any(r > x_max):
        warnings.warn(f"|x| beyond resolvable range {x_max:g}; R extrapolated as 0",
                      TabulatedRangeWarning, stacklevel=2)
    return out


def q_potential(spec: MediumSpec, x) -> np.ndarray:
    """``Q(x) = R(x) - R(0)``."""
    return covariance_r(spec, x) - spec.sigma_R2


def _norm(spec: MediumSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if spec.dim == 1:
        if x.ndim and x.shape[-1] == 1:
            x = x[..., 0]
        return np.abs(x)
    return np.sqrt(np.sum(x ** 2, axis=-1))


def hessian_xi(spec: MediumSpec) -> np.ndarray:
    """``Xi = grad^2 R(0)`` as a ``dim x dim`` matrix."""
    eye = np.eye(spec.dim)
    if spec.kind == "gaussian":
        return -(spec.sigma_R2 / spec.ell_m ** 2) * eye
    k = np.asarray(spec.tabulated_k)
    s = np.asarray(spec.tabulated_spectrum)
    # isotropic: int k_i k_j R_hat dk/(2pi)^d = delta_ij/d * int |k|^2 R_hat dk/(2pi)^d
    integrand = k ** 2 * s * _radial_weight(spec, k) / spec.dim
    total = integrate.trapezoid(integrand, k)
    tail_start = np.searchsorted(k, 0.9 * k[-1])
    tail = integrate.trapezoid(integrand[tail_start:], k[tail_start:])
    if not np.isfinite(total) or total <= 0 or tail > 1e-3 * total:
        raise ValueError("Xi undefined: second spectral moment of the tabulated spectrum "
                         "does not converge on the supplied range")
    return -total * eye


# --------------------------------------------------------------------------
# Q-kernel

def _erf_diff(u, v):
    """erf(u) - erf(v) without cancellation in the tails."""
    u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    out = special.erf(u) - special.erf(v)
    pos = (u >= 0) & (v >= 0)
    neg = (u <= 0) & (v <= 0)
    out = np.where(pos, special.erfc(v) - special.erfc(u), out)
    out = np.where(neg, special.erfc(-u) - special.erfc(-v), out)
    return out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W
_GL64_X, _GL64_W = np.polynomial.legendre.leggauss(64)
_GL64_X = 0.5 * (_GL64_X + 1.0)
_GL64_W = 0.5 * _GL64_W


def line_average_r(spec: MediumSpec, a, b) -> np.ndarray:
    """Vectorised ``int_0^1 R(a + b s) ds`` for the Gaussian covariance.

    ``a`` and ``b`` broadcast against each other; for ``dim == 2`` their
    trailing axis holds the vector components.
    """
    if spec.kind != "gaussian":
        raise ValueError("closed-form line average only for the gaussian kind")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if spec.dim == 1:
        a2, ab, bn = a ** 2, np.where(b < 0, -a, a), np.abs(b)
        a_par = ab
        a_perp2 = np.zeros_like(a2 + bn)
    else:
        a, b = np.broadcast_arrays(a, b)
        bn = np.sqrt(np.sum(b ** 2, axis=-1))
        a2 = np.sum(a ** 2, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            a_par = np.where(bn > 0, np.sum(a * b, axis=-1) / np.where(bn > 0, bn, 1.0), 0.0)
        a_perp2 = np.maximum(a2 - a_par ** 2, 0.0)
    a_par, bn, a_perp2 = np.broadcast_arrays(a_par, bn, a_perp2)
    ell = spec.ell_m
    s2 = np.sqrt(2.0) * ell
    small = bn < 1e-3 * ell
    with np.errstate(invalid="ignore", divide="ignore"):
        big = (np.exp(-a_perp2 / (2 * ell ** 2)) * ell * np.sqrt(np.pi / 2)
               / np.where(small, 1.0, bn) * _erf_diff((a_par + bn) / s2, a_par / s2))
    if np.any(small):
        pts = a_par[..., None] + bn[..., None] * _GL_X
        gl = np.sum(_GL_W * np.exp(-(pts ** 2 + a_perp2[..., None]) / (2 * ell ** 2)), axis=-1)
        big = np.where(small, gl, big)
    return spec.sigma_R2 * big


def _line_average_quad(spec: MediumSpec, tau, tau_prime, z, k0) -> float:
    tau = np.atleast_1d(np.asarray(tau, float))
    tp = np.atleast_1d(np.asarray(tau_prime, float))
    step = tp * z / k0

    def f(s):
        return float(q_potential(spec, tau + step * s if spec.dim > 1 else (tau + step * s)[0]))

    val, _ = integrate.quad(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def cal_q_log(spec: MediumSpec, tau, tau_prime, z: float, eta: float, k0: float,
              method: str = "quad"):
    """Logarithm of the two-point kernel

    ``(k0**2 z / (4 eta**2)) * int_0^1 Q(tau + tau_prime s z / k0) ds``.

    ``method='quad'`` integrates adaptively (scalar arguments);
    ``method='closed'`` uses the erf form of the Gaussian covariance and
    ``method='gl'`` a fixed 64-node Gauss-Legendre rule; both accept
    broadcast arrays.
    """
    if z < 0 or not eta > 0 or not k0 > 0:
        raise ValueError("need z >= 0, eta > 0, k0 > 0")
    pref = k0 ** 2 * z / (4 * eta ** 2)
    if method == "closed":
        b = np.asarray(tau_prime, float) * (z / k0)
        return pref * (line_average_r(spec, tau, b) - spec.sigma_R2)
    if method == "gl":
        b = np.asarray(tau_prime, float) * (z / k0)
        a = np.asarray(tau, float)
        if spec.dim == 1:
            pts = a[..., None] + b[..., None] * _GL64_X
        else:
            pts = a[..., None, :] + b[..., None, :] * _GL64_X[:, None]
        return pref * np.sum(_GL64_W * q_potential(spec, pts), axis=-1)
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")
    if z == 0:
        return 0.0
    return pref * _line_average_quad(spec, tau, tau_prime, z, k0)


def cal_q(spec: MediumSpec, tau, tau_prime, z: float, eta: float, k0: float, method: str = "quad"):
    """Two-point kernel ``exp(cal_q_log(...))``; bounded by 1 when R peaks at 0."""
    return np.exp(cal_q_log(spec, tau, tau_prime, z, eta, k0, method))


def cal_r_log(spec: MediumSpec, tau, tau_prime, z, eta, k0, method="quad"):
    """Log of ``cal_q * exp(k0**2 R(0) z / (4 eta**2))``."""
    return cal_q_log(spec, tau, tau_prime, z, eta, k0, method) + k0 ** 2 * spec.sigma_R2 * z / (4 * eta ** 2)


def cal_r(spec: MediumSpec, tau, tau_prime, z, eta, k0, method="quad"):
    return np.exp(cal_r_log(spec, tau, tau_prime, z, eta, k0, method))


# --------------------------------------------------------------------------
# phase screens

@functools.lru_cache(maxsize=16)
def screen_filter(spec: MediumSpec, grid: Grid):
    """Per-mode standard deviation of a unit-``dz`` screen and the clamped mass fraction.

    Mode weights are ``R_hat(k) / L**d`` (Poisson summation of the
    periodised covariance).
    """
    if grid.dim != spec.dim:
        raise ValueError("grid and medium dimensions differ")
    kmag = np.sqrt(grid.k2())
    c = spectrum(spec, kmag) / grid.extent ** grid.dim
    neg = c < 0
    clamped = float(-c[neg].sum())
    total = float(np.abs(c).sum())
    frac = clamped / total if total > 0 else 0.0
    if frac > CLAMP_TOLERANCE:
        raise ValueError(f"clamped negative spectral mass {frac:.2e} exceeds {CLAMP_TOLERANCE:g}")
    c = np.where(neg, 0.0, c)
    return np.sqrt(c), frac


def _complex_screen(spec: MediumSpec, grid: Grid, dz: float, rng: np.random.Generator) -> np.ndarray:
    amp, _ = screen_filter(spec, grid)
    noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return np.fft.ifftn(np.sqrt(dz) * amp * noise) * grid.size


def sample_phase_screen(spec: MediumSpec, grid: Grid, dz: float, rng: np.random.Generator) -> np.ndarray:
    """Real Gaussian increment with covariance ``dz * R`` (periodised)."""
    if not dz > 0:
        raise ValueError("dz must be positive")
    return _complex_screen(spec, grid, dz, rng).real


def sample_phase_screen_pair(spec: MediumSpec, grid: Grid, dz: float, rng: np.random.Generator):
    """Two independent screens from one transform (real and imaginary parts)."""
    if not dz > 0:
        raise ValueError("dz must be positive")
    b = _complex_screen(spec, grid, dz, rng)
    return b.real, b.imag
