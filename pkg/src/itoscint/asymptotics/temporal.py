"""Detector time-averaging factors built from the source temporal kernel."""
from __future__ import annotations

import math
from typing import Callable, Union

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from ..combinatorics import permanent_batch
from ..source import SourceSpec, temporal_kernel

Kernel = Union[str, SourceSpec, Callable]


def kernel_function(kernel: Kernel) -> Callable:
    """Kernel as a function of the dimensionless lag ``dt / tau_s``."""
    if kernel == "exponential":
        return lambda s: np.exp(-np.abs(s))
    if isinstance(kernel, SourceSpec):
        spec = kernel
        return lambda s: temporal_kernel(spec, np.asarray(s, dtype=float) * spec.tau_s)
    if callable(kernel):
        return kernel
    raise ValueError(f"unsupported kernel {kernel!r}")


def f_T_exponential(tau_s: float, T: float) -> float:
    """Closed form ``(tau_s/T) (1 - (tau_s/2T)(1 - exp(-2T/tau_s)))``."""
    if T == 0:
        return 1.0
    x = 2.0 * T / tau_s
    if x < 1e-3:
        return 1.0 - x / 3 + x * x / 12 - x ** 3 / 60
    return 2.0 * (x + math.expm1(-x)) / (x * x)


def f_T(tau_s: float, T: float, kernel: Kernel = "exponential", method: str = "quad") -> float:
    """Mean of ``F((t1 - t2)/tau_s)**2`` over ``[0, T]**2``.

    ``method``: ``'closed'`` (exponential kernel), ``'quad'`` (1-D reduction in
    the lag) or ``'dblquad'`` (the double integral itself).
    """
    if T < 0 or not tau_s > 0:
        raise ValueError("need T >= 0 and tau_s > 0")
    if T == 0:
        return 1.0
    if math.isinf(T):
        return 0.0
    if method == "closed":
        if kernel != "exponential":
            raise ValueError("closed form only for the exponential kernel")
        return f_T_exponential(tau_s, T)
    F = kernel_function(kernel)
    a = T / tau_s
    if method == "dblquad":
        # lower triangle of the unit square, doubled; the inner variable is the lag
        val, _ = integrate.dblquad(lambda lag, u: float(F(a * lag)) ** 2, 0.0, 1.0, 0.0, lambda u: u,
                                   epsabs=1e-13, epsrel=1e-11)
        return 2.0 * val
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")
    # the double integral depends only on |t1 - t2|: 2 int_0^1 (1 - v) F(a v)^2 dv
    cut = min(1.0, 50.0 / a)
    val = 0.0
    for lo, hi in ((0.0, cut), (cut, 1.0)):
        if hi > lo:
            val += integrate.quad(lambda v: (1 - v) * float(F(a * v)) ** 2, lo, hi,
                                  epsabs=1e-15, epsrel=1e-12, limit=500)[0]
    return 2.0 * val


def f_p_estimate(p: int, T: float, tau_s: float, kernel: Kernel = "exponential",
                 qmc_points: int = 2 ** 14, replicates: int = 16, seed: int = 0) -> tuple:
    """``(value, error)`` for the normalised permanent average of ``F**2`` over ``[0, T]**p``.

    By symmetry the cube integral equals ``p!`` times the ordered simplex; with
    gaps ``v`` between successive times it becomes
    ``p! int_{v >= 0, sum v <= 1} (1 - sum v) perm(A(T v)) dv``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if T < 0 or not tau_s > 0:
        raise ValueError("need T >= 0 and tau_s > 0")
    if T == 0:
        return float(math.factorial(p)), 0.0
    if math.isinf(T) or p == 1:
        return 1.0, 0.0
    if p > 4:
        raise ValueError("f_p quadrature supports p <= 4 (limits are available for any p)")
    F = kernel_function(kernel)
    a = T / tau_s
    if p == 2:
        return 1.0 + f_T(tau_s, T, kernel), 1e-12
    if p == 3:
        def integrand(v2, v1):
            f12 = float(F(a * v1)) ** 2
            f23 = float(F(a * v2)) ** 2
            f13 = float(F(a * (v1 + v2))) ** 2
            perm = 1 + f12 ** 2 + f23 ** 2 + f13 ** 2 + 2 * f12 * f23 * f13
            return (1 - v1 - v2) * perm
        # split off the boundary layer of width ~ 1/a where the kernel is O(1)
        cut = min(1.0, 30.0 / a)
        total, err = 0.0, 0.0
        for lo, hi in ((0.0, cut), (cut, 1.0)) if cut < 1 else ((0.0, 1.0),):
            val, e = integrate.dblquad(integrand, lo, hi, 0.0, lambda v1: 1.0 - v1,
                                       epsabs=1e-11, epsrel=1e-9)
            total += val
            err += e
        return 6.0 * total, 6.0 * err
    return _f4_qmc(F, a, qmc_points, replicates, seed)


def _f4_qmc(F, a, n, replicates, seed):
    """Scrambled Sobol estimate over the 3-simplex of gaps."""
    estimates = []
    for rep in range(replicates):
        u = qmc.Sobol(3, scramble=True, seed=seed + rep).random(n)
        # uniform simplex points from sorted uniforms
        s = np.sort(u, axis=1)
        v = np.diff(np.concatenate([np.zeros((n, 1)), s], axis=1), axis=1)
        t = np.concatenate([np.zeros((n, 1)), np.cumsum(v, axis=1)], axis=1)
        lag = np.abs(t[:, :, None] - t[:, None, :])
        A = np.asarray(F(a * lag)) ** 2
        perms = permanent_batch(A)
        weight = 1.0 - v.sum(axis=1)
        estimates.append(np.mean(weight * perms) / 6.0)
    estimates = np.array(estimates)
    val = 24.0 * estimates.mean()
    err = 24.0 * estimates.std(ddof=1) / math.sqrt(replicates)
    return float(val), float(err)


def f_p(p: int, T: float, tau_s: float, kernel: Kernel = "exponential") -> float:
    return f_p_estimate(p, T, tau_s, kernel)[0]


def f_p_limit(p: int, which: str) -> float:
    """``p!`` for ``T -> 0`` (``which='short'``) and ``1`` for ``T -> inf`` (``'long'``)."""
    if which == "short":
        return float(math.factorial(p))
    if which == "long":
        return 1.0
    raise ValueError("which must be 'short' or 'long'")
