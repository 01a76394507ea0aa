"""Time-averaged scintillation index and its closed-form Gaussian and Bessel examples."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import i0e

from .. import medium as med
from ..source import SourceSpec, coherence_profile
from .gaussian import has_gaussian_form
from .moments import TRUNCATION, MomentQuery, chi, mean_intensity, query
from .temporal import f_T

S_T_UPPER = 3.0


def chi_ratio_gaussian(z, sigma_m2, r0, rw, theta, d) -> np.ndarray:
    """``chi / E[I]**2`` for the Gaussian-correlated beam with ``Xi = -sigma_m2 I``.

    Equals ``((1 + a/r0**2) / (1 + a/rs**2))**(d/2)`` with ``a = sigma_m2 z**3 / 3``
    and ``1/rs**2 = 1/r0**2 + 1/(theta rw)**2``.
    """
    if d not in (1, 2):
        raise ValueError("d must be 1 or 2")
    z = np.asarray(z, dtype=float)
    a = sigma_m2 * z ** 3 / 3
    inv_rs2 = 1 / r0 ** 2 + 1 / (theta * rw) ** 2
    return ((1 + a / r0 ** 2) / (1 + a * inv_rs2)) ** (d / 2)


def chi_ratio_gaussian_limit(r0, rw, theta, d) -> float:
    """``z -> inf`` value ``(theta**2 rw**2 / (r0**2 + theta**2 rw**2))**(d/2)``."""
    return ((theta * rw) ** 2 / (r0 ** 2 + (theta * rw) ** 2)) ** (d / 2)


def chi_ratio_bessel(z, sigma_m2, r0, rw, theta) -> np.ndarray:
    """``I0(x) exp(-x)`` with ``x = R(z)**2 / (2 theta**2 rw**2)``, ``1/R**2 = 1/r0**2 + 3/(sigma_m2 z**3)``."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore"):
        R2 = 1.0 / (1.0 / r0 ** 2 + 3.0 / (sigma_m2 * z ** 3))
    return i0e(R2 / (2 * (theta * rw) ** 2))


def chi_ratio_bessel_limit(r0, rw, theta) -> float:
    return float(i0e(r0 ** 2 / (2 * (theta * rw) ** 2)))


def _sigma_m2(medium: med.MediumSpec) -> float:
    xi = np.atleast_2d(med.hessian_xi(medium))
    return float(-xi[0, 0])


def chi_ratio(q: MomentQuery, medium: med.MediumSpec, source: SourceSpec, method: str = "auto") -> float:
    """``chi / E[I]**2`` at ``(z, r)``."""
    if q.beta_case == "beta_gt_1":
        return 1.0
    if q.beta_case == "beta_eq_1_theta_to_0":
        return 0.0
    if method == "auto" and np.all(q.r == 0) and medium.kind == "gaussian":
        sm2 = _sigma_m2(medium)
        if source.coherence_kind == "gaussian":
            return float(chi_ratio_gaussian(q.z, sm2, source.envelope_r0, source.coherence_rw,
                                            source.theta, source.dim))
        if source.coherence_kind == "bessel":
            return float(chi_ratio_bessel(q.z, sm2, source.envelope_r0, source.coherence_rw, source.theta))
        if source.coherence_kind == "fully_coherent":
            return 1.0
    m = mean_intensity(q, medium, source)
    return chi(q, medium, source, "auto" if method == "auto" else method) / m ** 2


def _f_T(source: SourceSpec, T: float) -> float:
    method = "closed" if source.temporal_kind == "exponential" else "quad"
    return f_T(source.tau_s, T, "exponential" if method == "closed" else source, method=method)


def scint_T(q: MomentQuery, medium: med.MediumSpec, source: SourceSpec, T: float, method: str = "auto") -> float:
    """Limiting scintillation index of the intensity averaged over a window ``T``."""
    ft = _f_T(source, T)
    if q.beta_case == "beta_gt_1":
        return 1.0 + 2.0 * ft
    if q.beta_case == "beta_eq_1_theta_to_0":
        return ft
    return ft + chi_ratio(q, medium, source, method) * (1.0 + ft)


def difference_integral(source: SourceSpec, method: str = "quad") -> float:
    """``int exp(-theta**2 |s|**2 / r0**2) g(theta s)**2 ds``."""
    th, r0, d = source.theta, source.envelope_r0, source.dim
    if method == "closed":
        if source.coherence_kind == "gaussian":
            return (math.pi / (th ** 2 / r0 ** 2 + 1 / source.coherence_rw ** 2)) ** (d / 2)
        if source.coherence_kind == "fully_coherent":
            return (math.pi * r0 ** 2 / th ** 2) ** (d / 2)
        raise ValueError("closed form only for gaussian and fully coherent sources")
    kappa = th ** 2 / r0 ** 2
    s_max = math.sqrt(math.log(1 / TRUNCATION) / kappa)

    def g2(s):
        pt = th * s if d == 1 else np.array([th * s, 0.0])
        return float(coherence_profile(source, pt)) ** 2

    jac = (lambda s: 2.0) if d == 1 else (lambda s: 2 * math.pi * s)
    val, _ = integrate.quad(lambda s: jac(s) * math.exp(-kappa * s * s) * g2(s), 0, s_max,
                            epsabs=0, epsrel=1e-12, limit=4000)
    return val


def saturation_ratio(source: SourceSpec, method: str = "quad") -> float:
    """``theta**d int Gamma**2 / (int Gamma(., 0))**2`` (the ``z -> inf`` value of ``chi/E[I]**2``)."""
    d, r0 = source.dim, source.envelope_r0
    centre = (math.pi * r0 ** 2 / 4) ** (d / 2)
    mass = (math.pi * r0 ** 2 / 2) ** (d / 2)
    return source.theta ** d * centre * difference_integral(source, method) / mass ** 2


def scint_T_limit(source: SourceSpec, T: float, beta_case: str = "beta_eq_1", method: str = "quad") -> float:
    """``z -> inf`` value of :func:`scint_T`."""
    ft = _f_T(source, T)
    if beta_case == "beta_gt_1":
        return 1.0 + 2.0 * ft
    if beta_case == "beta_eq_1_theta_to_0":
        return ft
    return ft + saturation_ratio(source, method) * (1.0 + ft)


@dataclass
class ScintillationCurve:
    abscissa: np.ndarray
    s_T: np.ndarray
    chi_ratio: np.ndarray
    mean_intensity: np.ndarray
    params: dict = field(default_factory=dict)

    def within_bounds(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.s_T >= -tol) and np.all(self.s_T <= S_T_UPPER + tol))


def scintillation_curve(z_values, medium: med.MediumSpec, source: SourceSpec, T: float,
                        beta_case: str = "beta_eq_1", r=0.0, k0: float = 1.0,
                        method: str = "auto") -> ScintillationCurve:
    """Scintillation versus propagation distance; the abscissa is ``sigma_m2 z**3``."""
    z_values = np.asarray(z_values, dtype=float)
    sm2 = _sigma_m2(medium)
    s, c, m = [], [], []
    for z in z_values:
        q = query("diffusive", beta_case, z, r, k0=k0, dim=source.dim)
        ratio = chi_ratio(q, medium, source, method)
        ft = _f_T(source, T)
        if beta_case == "beta_gt_1":
            s.append(1 + 2 * ft)
        elif beta_case == "beta_eq_1_theta_to_0":
            s.append(ft)
        else:
            s.append(ft + ratio * (1 + ft))
        c.append(ratio)
        m.append(mean_intensity(q, medium, source))
    params = {
        "beta_case": beta_case, "theta": source.theta, "tau_over_T": source.tau_s / T if T else math.inf,
        "d": source.dim, "sigma_m2": sm2, "r0": source.envelope_r0, "rw": source.coherence_rw, "k0": k0,
        "coherence_kind": source.coherence_kind,
    }
    return ScintillationCurve(sm2 * z_values ** 3, np.array(s), np.array(c), np.array(m), params)
