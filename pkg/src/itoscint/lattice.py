"""Periodic spatial grids, complex fields and the shared FFT convention.

The forward transform carries no normalisation and the inverse carries
``1/n**d`` (numpy's default).  Every module goes through
:func:`forward_spectrum` / :func:`inverse_spectrum` and
:meth:`Grid.fft_wavenumbers` instead of calling ``numpy.fft`` directly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

BOUNDARY_WARN_LEVEL = 1e-8


class BoundaryIntensityWarning(RuntimeWarning):
    """Field intensity near the periodic boundary is no longer negligible."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n_per_axis`` points along each of ``dim`` axes."""

    dim: int
    n_per_axis: int
    dx: float
    origin: tuple = field(default=())

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        n = self.n_per_axis
        if n < 8 or n & (n - 1):
            raise ValueError(f"n_per_axis must be a power of two >= 8, got {n}")
        if not self.dx > 0:
            raise ValueError(f"dx must be positive, got {self.dx}")
        origin = np.broadcast_to(np.asarray(self.origin if len(self.origin) else 0.0, dtype=float),
                                 (self.dim,))
        object.__setattr__(self, "origin", tuple(float(o) for o in origin))

    @property
    def shape(self) -> tuple:
        return (self.n_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.n_per_axis ** self.dim

    @property
    def extent(self) -> float:
        return self.n_per_axis * self.dx

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dim

    def axis(self, i: int = 0) -> np.ndarray:
        return self.origin[i] + self.dx * np.arange(self.n_per_axis)

    def coordinates(self) -> list:
        """Coordinate arrays (``indexing='ij'``), one per axis."""
        axes = [self.axis(i) for i in range(self.dim)]
        return list(np.meshgrid(*axes, indexing="ij")) if self.dim > 1 else axes

    def radius2(self, center=None) -> np.ndarray:
        center = np.zeros(self.dim) if center is None else np.broadcast_to(center, (self.dim,))
        return sum((c - c0) ** 2 for c, c0 in zip(self.coordinates(), center))

    def wavenumbers(self, i: int = 0) -> np.ndarray:
        """Sorted wavenumbers ``2*pi*m/(n*dx)`` for ``m = -n/2 .. n/2-1``."""
        n = self.n_per_axis
        return 2.0 * np.pi * np.arange(-n // 2, n // 2) / (n * self.dx)

    def fft_wavenumbers(self) -> list:
        """Wavenumber arrays in FFT order, broadcast to the grid shape."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n_per_axis, d=self.dx)
        if self.dim == 1:
            return [k]
        return list(np.meshgrid(k, k, indexing="ij"))

    def k2(self) -> np.ndarray:
        return sum(k ** 2 for k in self.fft_wavenumbers())

    def require_extent(self, width: float, factor: float = 8.0) -> None:
        if not self.extent > factor * width:
            raise ValueError(
                f"grid extent {self.extent:g} must exceed {factor:g} x beam width {width:g}")


def make_grid(dim: int, n_per_axis: int, dx: float, origin=0.0) -> Grid:
    """Build a :class:`Grid`; ``origin`` is the coordinate of index 0."""
    return Grid(int(dim), int(n_per_axis), float(dx), tuple(np.atleast_1d(origin).astype(float)))


def centered_grid(dim: int, n_per_axis: int, dx: float) -> Grid:
    """Grid whose index ``n/2`` sits at the coordinate origin."""
    return make_grid(dim, n_per_axis, dx, -0.5 * n_per_axis * dx)


@dataclass
class ComplexField:
    """Complex amplitude on a grid.

    ``values`` may carry leading batch axes (e.g. a stack over source
    times); the trailing ``grid.dim`` axes are spatial.
    """

    grid: Grid
    values: np.ndarray
    time_index: Optional[int] = None
    spectral: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape[self.values.ndim - self.grid.dim:] != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} incompatible with grid {self.grid.shape}")

    def norm2(self):
        """``dx**d * sum|u|**2`` over the spatial axes (per batch entry)."""
        axes = tuple(range(-self.grid.dim, 0))
        s = np.sum(np.abs(self.values) ** 2, axis=axes)
        if self.spectral:
            return s * self.grid.cell_volume / self.grid.size
        return s * self.grid.cell_volume

    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def copy(self) -> "ComplexField":
        return ComplexField(self.grid, self.values.copy(), self.time_index, self.spectral)


def _axes(grid: Grid) -> tuple:
    return tuple(range(-grid.dim, 0))


def forward_spectrum(f: ComplexField) -> ComplexField:
    """Unnormalised DFT over the spatial axes."""
    out = np.fft.fftn(f.values, axes=_axes(f.grid))
    return ComplexField(f.grid, out, f.time_index, spectral=True)


def inverse_spectrum(f: ComplexField) -> ComplexField:
    """Inverse of :func:`forward_spectrum` (carries the ``1/n**d`` factor)."""
    out = np.fft.ifftn(f.values, axes=_axes(f.grid))
    return ComplexField(f.grid, out, f.time_index, spectral=False)


def boundary_fraction(f: ComplexField, width: int = 2) -> float:
    """Max boundary-strip intensity relative to the peak intensity."""
    inten = np.abs(f.values) ** 2
    peak = inten.max()
    if peak == 0:
        return 0.0
    edge = 0.0
    for ax in _axes(f.grid):
        lo = np.take(inten, range(width), axis=ax)
        hi = np.take(inten, range(-width, 0), axis=ax)
        edge = max(edge, lo.max(), hi.max())
    return float(edge / peak)


def check_boundary(f: ComplexField, level: float = BOUNDARY_WARN_LEVEL) -> float:
    frac = boundary_fraction(f)
    if frac > level:
        warnings.warn(f"boundary intensity {frac:.2e} of peak exceeds {level:.0e}",
                      BoundaryIntensityWarning, stacklevel=2)
    return frac
