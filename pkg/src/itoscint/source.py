"""Partially coherent Schell-model sources.

A source realisation is a mean-zero circular complex Gaussian field
``u0(x; t)`` with covariance ``F((t - t')/tau_s) * J_eps(x, y)`` where
``J_eps(x, y) = J(eps**beta * x, eps**beta * y)`` and
``J(x, y) = f(x) f(y) g(x - y)``.  Fields are laid out in physical
coordinates, so the envelope is ``eps**-beta`` times wider than ``r0``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import j0

from .combinatorics import MAX_PERMANENT, permanent
from .lattice import ComplexField, Grid

COHERENCE_KINDS = ("gaussian", "bessel", "fully_coherent")
TEMPORAL_KINDS = ("exponential", "tabulated")
PADDING_TAU = 6.0


@dataclass(frozen=True)
class SourceSpec:
    envelope_r0: float = 1.0
    coherence_kind: str = "gaussian"
    coherence_rw: float = 1.0
    theta: float = 1.0
    beta: float = 1.0
    tau_s: float = 1.0
    temporal_kind: str = "exponential"
    dim: int = 1
    bessel_modes: int = 256
    tabulated_t: Optional[tuple] = None
    tabulated_F: Optional[tuple] = None

    def __post_init__(self):
        if not self.envelope_r0 > 0 or not self.coherence_rw > 0 or not self.tau_s > 0:
            raise ValueError("envelope_r0, coherence_rw and tau_s must be positive")
        if not 0 < self.theta <= 1:
            raise ValueError(f"theta must lie in (0,1], got {self.theta}")
        if not self.beta >= 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if self.coherence_kind not in COHERENCE_KINDS:
            raise ValueError(f"unknown coherence_kind {self.coherence_kind!r}")
        if self.temporal_kind not in TEMPORAL_KINDS:
            raise ValueError(f"unknown temporal_kind {self.temporal_kind!r}")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.coherence_kind == "bessel" and self.dim != 2:
            raise ValueError("bessel coherence requires dim = 2")
        if self.coherence_kind == "bessel" and self.bessel_modes < 64:
            raise ValueError("bessel synthesis needs at least 64 modes")
        if self.temporal_kind == "tabulated":
            if self.tabulated_t is None or self.tabulated_F is None:
                raise ValueError("tabulated temporal kernel needs tabulated_t and tabulated_F")
            object.__setattr__(self, "tabulated_t", tuple(float(v) for v in self.tabulated_t))
            object.__setattr__(self, "tabulated_F", tuple(float(v) for v in self.tabulated_F))
            _validate_kernel_table(np.array(self.tabulated_t), np.array(self.tabulated_F))

    @property
    def coherence_length(self) -> float:
        """Correlation length of ``g`` in source coordinates."""
        return self.theta * self.coherence_rw


def _validate_kernel_table(t: np.ndarray, F: np.ndarray) -> None:
    if t.ndim != 1 or t.shape != F.shape or t.size < 2:
        raise ValueError("kernel table needs matching 1-D t and F columns")
    if t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise ValueError("kernel table t must start at 0 and increase strictly")
    if abs(F[0] - 1.0) > 1e-12:
        raise ValueError("kernel table must have F(0) = 1")
    if np.any(F < 0) or np.any(F > 1 + 1e-12):
        raise ValueError("kernel table violates 0 <= F <= 1")
    # Bochner check on a fine symmetric sampling of the kernel.
    dt = np.min(np.diff(t)) / 2
    n = 1 << int(math.ceil(math.log2(4 * t[-1] / dt + 2)))
    lag = dt * np.minimum(np.arange(n), n - np.arange(n))
    spec = np.fft.fft(np.interp(lag, t, F, right=0.0)).real
    if spec.min() < -1e-6 * spec.max():
        raise ValueError("tabulated kernel has a negative spectrum; it is not a valid covariance")


def load_temporal_kernel(path, **spec_kwargs) -> SourceSpec:
    """SourceSpec with a kernel read from a CSV with columns ``t,F``.

    ``t`` is the dimensionless lag ``dt/tau_s`` (nonnegative); the kernel is
    taken as even and zero beyond the last row.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"t", "F"}:
        raise ValueError(f"{path}: expected CSV header 't,F'")
    t = tuple(float(r["t"]) for r in rows)
    F = tuple(float(r["F"]) for r in rows)
    return SourceSpec(temporal_kind="tabulated", tabulated_t=t, tabulated_F=F, **spec_kwargs)


def envelope(spec: SourceSpec, x) -> np.ndarray:
    """``exp(-|x|**2 / r0**2)``; the last axis of ``x`` holds coordinates when dim > 1."""
    return np.exp(-_norm2(spec, x) / spec.envelope_r0 ** 2)


def coherence_profile(spec: SourceSpec, sep) -> np.ndarray:
    """Coherence function ``g`` evaluated at separation ``sep``."""
    s2 = _norm2(spec, sep)
    if spec.coherence_kind == "fully_coherent":
        return np.ones_like(s2)
    if spec.coherence_kind == "gaussian":
        return np.exp(-s2 / (2 * spec.coherence_length ** 2))
    return j0(np.sqrt(s2) / spec.coherence_length)


def _norm2(spec: SourceSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if spec.dim == 1:
        return x ** 2
    if x.shape[-1] != 2:
        raise ValueError("2-D points need a trailing axis of length 2")
    return np.sum(x ** 2, axis=-1)


def mutual_coherence(spec: SourceSpec, x, y) -> np.ndarray:
    """``J(x, y) = f(x) f(y) g(x - y)`` (real, symmetric)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return envelope(spec, x) * envelope(spec, y) * coherence_profile(spec, x - y)


def gamma(spec: SourceSpec, r, sigma) -> np.ndarray:
    """Centre/difference form: ``J(r + theta*sigma/2, r - theta*sigma/2)``."""
    r = np.asarray(r, dtype=float)
    half = 0.5 * spec.theta * np.asarray(sigma, dtype=float)
    return mutual_coherence(spec, r + half, r - half)


def temporal_kernel(spec: SourceSpec, dt) -> np.ndarray:
    """``F(dt / tau_s)``."""
    s = np.abs(np.asarray(dt, dtype=float)) / spec.tau_s
    if spec.temporal_kind == "exponential":
        return np.exp(-s)
    return np.interp(s, spec.tabulated_t, spec.tabulated_F, right=0.0)


def source_moment(spec: SourceSpec, X, Y, T) -> float:
    """Permanent of ``A[j, l] = F(t_j - t'_l) J(x_j, y_l)``.

    ``X`` and ``Y`` hold ``p`` points each; ``T`` holds ``2p`` instants, the
    first ``p`` paired with ``X`` and the rest with ``Y``.
    """
    X = _points(spec, X)
    Y = _points(spec, Y)
    p = X.shape[0]
    if Y.shape[0] != p:
        raise ValueError("X and Y must hold the same number of points")
    if p < 1 or p > MAX_PERMANENT:
        raise ValueError(f"p must lie in 1..{MAX_PERMANENT}, got {p}")
    T = np.asarray(T, dtype=float).ravel()
    if T.size != 2 * p:
        raise ValueError(f"T must hold 2p = {2 * p} instants")
    A = temporal_kernel(spec, T[:p, None] - T[None, p:]) * mutual_coherence(spec, X[:, None], Y[None, :])
    return float(permanent(A))


s_p = source_moment


def intensity_source_moment(spec: SourceSpec, X) -> float:
    """``S_p(X, X; 0)``: the equal-time intensity moment of the source."""
    X = _points(spec, X)
    return source_moment(spec, X, X, np.zeros(2 * X.shape[0]))


def _points(spec: SourceSpec, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if spec.dim == 1:
        return X.reshape(-1)
    return X.reshape(-1, 2)


@dataclass
class SourceRealization:
    """Stack of source fields, one per sample instant."""

    fields: ComplexField
    times: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.fields.values.shape[0] != self.times.size:
            raise ValueError("field stack and times disagree in length")

    def __len__(self) -> int:
        return self.times.size

    def at(self, i: int) -> ComplexField:
        return ComplexField(self.fields.grid, self.fields.values[i], time_index=i)


def _time_axis(spec: SourceSpec, times: np.ndarray):
    """Uniform spacing and periodic padded length for the temporal synthesis."""
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-D array")
    if times.size == 1:
        return 0.0, 1
    steps = np.diff(times)
    dt = steps.mean()
    if np.any(steps <= 0) or np.max(np.abs(steps - dt)) > 1e-9 * max(dt, 1e-300):
        raise ValueError("times must be sorted and uniformly spaced")
    span = times[-1] - times[0]
    # Every sampled lag stays inside the minimum-image half period, and the
    # period carries at least PADDING_TAU * tau_s beyond the sampled span.
    need = max(2 * span, span + PADDING_TAU * spec.tau_s) / dt + 1
    return dt, 1 << int(math.ceil(math.log2(need)))


def _circulant_weights(kernel_samples: np.ndarray, axes) -> np.ndarray:
    """Eigenvalues of the circulant covariance built from minimum-image samples."""
    lam = np.fft.fftn(kernel_samples, axes=axes).real
    return np.clip(lam, 0.0, None)


def _minimum_image(n: int, spacing: float) -> np.ndarray:
    idx = np.arange(n)
    return spacing * np.minimum(idx, n - idx)


def sample_source_field(spec: SourceSpec, grid: Grid, times, epsilon: float,
                        rng: np.random.Generator) -> SourceRealization:
    """Draw one space-time source realisation on ``grid`` at ``times``."""
    if grid.dim != spec.dim:
        raise ValueError("grid and source dimensions differ")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    dt, n_t = _time_axis(spec, times)
    scale = epsilon ** spec.beta
    coords = grid.coordinates()
    pos = np.stack(coords, axis=-1) if grid.dim > 1 else coords[0]
    env = envelope(spec, scale * pos)
    grid.require_extent(spec.envelope_r0 / scale, factor=4.0)

    if spec.coherence_kind == "fully_coherent":
        values = np.broadcast_to(env, (times.size,) + grid.shape).astype(complex)
        return SourceRealization(ComplexField(grid, values), times)

    if n_t == 1:
        temporal = np.ones(1)
    else:
        temporal = _circulant_weights(temporal_kernel(spec, _minimum_image(n_t, dt)), axes=(0,)) / n_t

    if spec.coherence_kind == "bessel":
        w = _bessel_field(spec, pos, scale, temporal, n_t, times.size, rng)
    else:
        lags = [_minimum_image(grid.n_per_axis, grid.dx)] * grid.dim
        sep = np.stack(np.meshgrid(*lags, indexing="ij"), axis=-1) if grid.dim > 1 else lags[0]
        spatial = _circulant_weights(coherence_profile(spec, scale * sep), axes=tuple(range(grid.dim))) / grid.size
        weights = np.sqrt(temporal.reshape((n_t,) + (1,) * grid.dim) * spatial)
        noise = _complex_noise(rng, (n_t,) + grid.shape)
        w = np.fft.ifftn(weights * noise) * (n_t * grid.size)
        w = w[: times.size]
    return SourceRealization(ComplexField(grid, env * w), times)


def _complex_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Circular complex Gaussian with unit variance ``E|z|**2 = 1``."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)


def _bessel_field(spec, pos, scale, temporal, n_t, n_keep, rng) -> np.ndarray:
    """Ring-spectrum superposition with stratified directions.

    ``w(x, t) = M**-0.5 * sum_m a_m(t) exp(i kappa x . e_m)`` where the
    ``a_m`` are independent unit-variance circular Gaussian series with
    temporal covariance ``F``; then ``E[w(x) w*(y)] = J0(kappa |x - y|)``
    averaged over directions.
    """
    M = spec.bessel_modes
    kappa = scale / spec.coherence_length
    angles = 2 * np.pi * (np.arange(M) + rng.random(M)) / M
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    noise = _complex_noise(rng, (n_t, M))
    amps = np.fft.ifft(np.sqrt(temporal)[:, None] * noise, axis=0) * n_t
    amps = amps[:n_keep] / math.sqrt(M)
    phase = np.exp(1j * kappa * (pos @ dirs.T))  # (..., M)
    return np.einsum("tm,...m->t...", amps, phase)
