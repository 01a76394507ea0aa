"""Split-step spectral integration of the paraxial Ito-Schrodinger equation.

The equation integrated is

    du = (i eta / (2 k0 eps)) Lap(u) dz - (k0**2 / (8 eta**2)) R(0) u dz
         + (i k0 / (2 eta)) u dB(z, x)

in the coordinates where the medium covariance is ``R`` and the source
envelope has width ``r0 * eps**-beta``.  The Ito damping term is carried by
the unitary screen ``exp(i k0 dB / (2 eta))`` in expectation, so every step
conserves ``int |u|**2`` exactly.

A point ``r`` of the source-scaled frame with a fine offset ``x`` sits at
``eps**-beta * r + eta * x`` here (see :func:`physical_position`).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import medium as med
from .lattice import ComplexField, check_boundary
from .source import SourceRealization

REGIMES = ("kinetic", "diffusive", "custom")


class ScreenPhaseWarning(RuntimeWarning):
    """Phase screen standard deviation exceeds pi per step."""


class PlaneSnapWarning(RuntimeWarning):
    """A requested record plane was moved onto a step boundary."""


@dataclass(frozen=True)
class RegimeScaling:
    epsilon: float
    regime: str = "kinetic"
    eta_custom: Optional[float] = None
    k0: float = 1.0

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if not self.k0 > 0:
            raise ValueError("k0 must be positive")
        if self.regime == "diffusive" and not self.epsilon < math.exp(-math.e):
            raise ValueError("diffusive regime needs epsilon < exp(-e) so that ln ln(1/eps) > 0")
        if self.regime == "custom" and not (self.eta_custom is not None and self.eta_custom > 0):
            raise ValueError("custom regime needs eta_custom > 0")

    def eta(self) -> float:
        if self.regime == "kinetic":
            return 1.0
        if self.regime == "diffusive":
            return 1.0 / math.log(math.log(1.0 / self.epsilon))
        return float(self.eta_custom)


def eta(scaling: RegimeScaling) -> float:
    return scaling.eta()


def physical_position(scaling: RegimeScaling, beta: float, r, x=0.0):
    """Simulation coordinate of the point with source-frame centre ``r`` and fine offset ``x``."""
    return scaling.epsilon ** (-beta) * np.asarray(r, dtype=float) + scaling.eta() * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class PropagationPlan:
    z_final: float
    n_steps: int
    record_planes: tuple = ()

    def __post_init__(self):
        if not self.z_final > 0:
            raise ValueError("z_final must be positive")
        if int(self.n_steps) < 1:
            raise ValueError("n_steps must be >= 1")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        planes = np.asarray(self.record_planes if len(self.record_planes) else [self.z_final], dtype=float)
        if np.any(planes < 0) or np.any(planes > self.z_final * (1 + 1e-12)):
            raise ValueError("record planes must lie in [0, z_final]")
        steps = np.rint(planes / self.dz).astype(int)
        snapped = steps * self.dz
        if np.any(np.abs(snapped - planes) > 1e-9 * self.z_final):
            warnings.warn("record planes snapped to step boundaries", PlaneSnapWarning, stacklevel=3)
        object.__setattr__(self, "record_planes", tuple(float(s) for s in np.unique(snapped)))

    @property
    def dz(self) -> float:
        return self.z_final / self.n_steps

    @property
    def record_steps(self) -> tuple:
        return tuple(int(round(z / self.dz)) for z in self.record_planes)


def default_step(scaling: RegimeScaling, grid, medium: med.MediumSpec) -> float:
    """``min(eps k0 dx**2 n / (8 pi eta), ell_m / 4)``."""
    dz = scaling.epsilon * scaling.k0 * grid.dx ** 2 * grid.n_per_axis / (8 * math.pi * scaling.eta())
    if medium.kind == "gaussian" and medium.sigma_R2 > 0:
        dz = min(dz, medium.ell_m / 4)
    return dz


def plan_for(z_final: float, scaling: RegimeScaling, grid, medium, record_planes=(), dz=None) -> PropagationPlan:
    dz = default_step(scaling, grid, medium) if dz is None else dz
    return PropagationPlan(z_final, max(1, math.ceil(z_final / dz - 1e-9)), tuple(record_planes))


def _free_half(grid, scaling: RegimeScaling, dz: float) -> np.ndarray:
    a = scaling.eta() / (2 * scaling.k0 * scaling.epsilon)
    return np.exp(-0.5j * a * dz * grid.k2())


def _screen_factor(medium, scaling: RegimeScaling, screen: np.ndarray) -> np.ndarray:
    return np.exp(0.5j * scaling.k0 / scaling.eta() * screen)


def _check_phase(medium, scaling: RegimeScaling, dz: float) -> None:
    if medium.sigma_R2 > 0 and 0.5 * scaling.k0 / scaling.eta() * math.sqrt(dz * medium.sigma_R2) > math.pi:
        warnings.warn("screen phase wraps: reduce dz", ScreenPhaseWarning, stacklevel=3)


def split_step(u: ComplexField, medium: med.MediumSpec, scaling: RegimeScaling, dz: float,
               rng: Optional[np.random.Generator] = None, screen: Optional[np.ndarray] = None) -> ComplexField:
    """One Strang step: free half-step, phase screen, free half-step.

    ``screen`` overrides the random increment ``dB`` (e.g. ``V * dz`` for a
    deterministic potential ``V``); otherwise one is drawn from ``rng``.
    """
    if not dz > 0:
        raise ValueError("dz must be positive")
    grid = u.grid
    half = _free_half(grid, scaling, dz)
    axes = tuple(range(-grid.dim, 0))
    v = np.fft.ifftn(half * np.fft.fftn(u.values, axes=axes), axes=axes)
    if screen is None and medium.sigma_R2 > 0:
        _check_phase(medium, scaling, dz)
        screen = med.sample_phase_screen(medium, grid, dz, rng)
    if screen is not None:
        v = v * _screen_factor(medium, scaling, screen)
    v = np.fft.ifftn(half * np.fft.fftn(v, axes=axes), axes=axes)
    return ComplexField(grid, v, u.time_index)


def _screens(medium, grid, dz, rng):
    """Endless supply of screens, two per transform."""
    while True:
        re, im = med.sample_phase_screen_pair(medium, grid, dz, rng)
        yield re
        yield im


def propagate_field(values: np.ndarray, grid, medium: med.MediumSpec, scaling: RegimeScaling,
                    plan: PropagationPlan, rng: Optional[np.random.Generator] = None,
                    screen_fn=None, check: bool = True) -> np.ndarray:
    """Propagate an array (leading batch axes allowed) through one medium realisation.

    Returns an array with a new leading axis over record planes.  Adjacent
    free half-steps are fused into full steps, which is exact.
    ``screen_fn(step_index, z_mid)`` may supply deterministic screens.
    """
    dz = plan.dz
    axes = tuple(range(-grid.dim, 0))
    a = scaling.eta() / (2 * scaling.k0 * scaling.epsilon)
    k2 = grid.k2()
    half = np.exp(-0.5j * a * dz * k2)
    full = half * half
    random_medium = screen_fn is None and medium.sigma_R2 > 0
    if random_medium:
        _check_phase(medium, scaling, dz)
        supply = _screens(medium, grid, dz, rng)
    record = plan.record_steps
    out = np.empty((len(record),) + values.shape, dtype=complex)
    slot = {s: i for i, s in enumerate(record)}
    if 0 in slot:
        out[slot[0]] = values
    spec = np.fft.fftn(values, axes=axes)
    pending_half = False
    for step in range(plan.n_steps):
        spec = spec * (full if pending_half else half)
        if random_medium:
            screen = next(supply)
        elif screen_fn is not None:
            screen = screen_fn(step, (step + 0.5) * dz)
        else:
            screen = None
        if screen is not None:
            x = np.fft.ifftn(spec, axes=axes) * _screen_factor(medium, scaling, screen)
            spec = np.fft.fftn(x, axes=axes)
        pending_half = True
        if step + 1 in slot:
            out[slot[step + 1]] = np.fft.ifftn(spec * half, axes=axes)
    if check:
        for i in range(len(record)):
            check_boundary(ComplexField(grid, out[i]))
    return out


def propagate(source_realization: SourceRealization, medium: med.MediumSpec, scaling: RegimeScaling,
              plan: PropagationPlan, rng: Optional[np.random.Generator] = None) -> list:
    """Fields at each record plane, shape ``(n_times, *grid.shape)`` per plane.

    All source-time samples see the same screens (frozen medium).
    """
    grid = source_realization.fields.grid
    out = propagate_field(source_realization.fields.values, grid, medium, scaling, plan, rng)
    return [ComplexField(grid, out[i]) for i in range(out.shape[0])]


def free_gaussian(grid, scaling: RegimeScaling, width: float, z: float, center=0.0) -> np.ndarray:
    """Free evolution of ``exp(-|x - c|**2 / width**2)`` on the infinite line/plane."""
    a = scaling.eta() / (2 * scaling.k0 * scaling.epsilon)
    q = width ** 2 + 4j * a * z
    return (width ** 2 / q) ** (grid.dim / 2) * np.exp(-grid.radius2(center) / q)
