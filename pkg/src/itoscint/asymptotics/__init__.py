"""Limiting statistics of the wave field and of the (time-averaged) intensity."""
from .functionals import functional_F, functional_G
from .moments import (MomentQuery, OutOfRangeError, QuadratureError, chi, heat_covariance,
                      intensity_moment, intensity_moment_estimate, m11_diffusive, m11_kinetic,
                      mean_intensity, mpp_limit, query, time_avg_intensity_moment)
from .scintillation import (ScintillationCurve, chi_ratio, chi_ratio_bessel, chi_ratio_gaussian,
                            scint_T, scint_T_limit, scintillation_curve)
from .temporal import f_p, f_p_estimate, f_p_limit, f_T

__all__ = [
    "MomentQuery", "OutOfRangeError", "QuadratureError", "ScintillationCurve", "chi", "chi_ratio",
    "chi_ratio_bessel", "chi_ratio_gaussian", "f_T", "f_p", "f_p_estimate", "f_p_limit",
    "functional_F", "functional_G", "heat_covariance", "intensity_moment", "intensity_moment_estimate",
    "m11_diffusive", "m11_kinetic", "mean_intensity", "mpp_limit", "query", "scint_T", "scint_T_limit",
    "scintillation_curve", "time_avg_intensity_moment",
]
