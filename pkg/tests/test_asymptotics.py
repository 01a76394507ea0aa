import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from itoscint import medium as med
from itoscint.asymptotics import (OutOfRangeError, chi, chi_ratio, chi_ratio_bessel, chi_ratio_gaussian, f_p,
                                  f_p_estimate, f_p_limit, f_T, heat_covariance, intensity_moment, m11_diffusive,
                                  m11_kinetic, mean_intensity, mpp_limit, query, scint_T, scint_T_limit,
                                  scintillation_curve, time_avg_intensity_moment)
from itoscint.asymptotics.scintillation import chi_ratio_bessel_limit, chi_ratio_gaussian_limit, saturation_ratio
from itoscint.source import SourceSpec, gamma

M1 = med.gaussian_medium(1.0, 1.0, 1)
M2 = med.gaussian_medium(1.0, 1.0, 2)
S1 = SourceSpec(1.0, "gaussian", 1.0, 0.5, dim=1)
S2 = SourceSpec(1.0, "gaussian", 1.0, 0.5, dim=2)


# ---- detector averaging factors

def test_f_T_worked_value():
    assert f_T(1.0, 1.0, method="closed") == pytest.approx(0.5 + 0.5 * math.exp(-2), abs=1e-15)
    assert f_T(1.0, 1.0, method="quad") == pytest.approx(0.5676676416183064, abs=1e-10)


def test_f_T_limits():
    assert f_T(1.0, 1e-7, method="closed") == pytest.approx(1.0, abs=1e-6)
    assert f_T(1.0, 1e7, method="closed") == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("ratio", [0.01, 0.1, 1, 10, 100])
def test_f_T_closed_vs_double_integral(ratio):
    assert abs(f_T(ratio, 1.0, method="closed") - f_T(ratio, 1.0, method="dblquad")) <= 1e-8


def test_f_T_unknown_method():
    with pytest.raises(ValueError):
        f_T(1.0, 1.0, method="simpson")


def test_f_p_relations():
    assert f_p(2, 0.7, 1.3) == pytest.approx(1 + f_T(1.3, 0.7, method="closed"), rel=1e-8)
    assert f_p_limit(3, "short") == 6 and f_p_limit(5, "long") == 1
    assert f_p(1, 3.0, 1.0) == pytest.approx(1.0)
    assert f_p(3, 100.0, 1.0) == pytest.approx(1.0, rel=0.02)
    assert f_p(2, 1e-3, 1.0) == pytest.approx(2.0, abs=1e-3)


def test_f_p_short_window_expansion():
    # F_3 = 6 - 8 T/tau + O(T^2): at T/tau = 1e-3 the gap to 3! is about 8e-3
    assert f_p(3, 1e-3, 1.0) == pytest.approx(6 - 8e-3, abs=2e-5)


def test_f_p_four_reports_error():
    val, err = f_p_estimate(4, 1.0, 1.0)
    assert 1 < val < 24 and 0 <= err < 1e-2 * val


def test_f_p_range():
    with pytest.raises(ValueError):
        f_p(5, 1.0, 1.0)


# ---- second moments

def test_kinetic_coincident_and_far():
    q = query("kinetic", "beta_gt_1", 1.5, 0.3, X=0.2, Y=0.2, k0=1.0)
    assert m11_kinetic(q, M1, S1) == pytest.approx(float(gamma(S1, 0.3, 0.0)))
    far = query("kinetic", "beta_gt_1", 1.5, 0.3, X=0.0, Y=80.0, k0=1.0)
    assert m11_kinetic(far, M1, S1).real == pytest.approx(float(gamma(S1, 0.3, 0.0)) * math.exp(-1.5 / 4), rel=1e-10)


@pytest.mark.parametrize("case", ["beta_gt_1", "beta_eq_1"])
def test_zero_distance_is_source(case):
    q = query("kinetic", case, 0.0, 0.2, X=0.1, Y=0.1, T=[0.0, 0.5])
    assert m11_kinetic(q, M1, S1).real == pytest.approx(math.exp(-0.5) * float(gamma(S1, 0.2, 0.0)), rel=1e-12)


def test_diffusive_decay_rate():
    m = med.gaussian_medium(2.0, 0.5, 1)
    z, k0 = 1.3, 1.7
    q0 = query("diffusive", "beta_gt_1", z, 0.0, X=0.0, Y=0.0, k0=k0)
    q1 = query("diffusive", "beta_gt_1", z, 0.0, X=0.0, Y=0.6, k0=k0)
    rate = -math.log(m11_diffusive(q1, m, S1).real / m11_diffusive(q0, m, S1).real) / 0.36
    assert rate == pytest.approx(k0 ** 2 * z * 2.0 / (8 * 0.25), rel=1e-12)
    assert m11_diffusive(q0, m, S1).real == pytest.approx(1.0)


@pytest.mark.parametrize("d", [1, 2])
def test_diffusive_beta1_closed_vs_quadrature(d):
    m, s = (M1, S1) if d == 1 else (M2, S2)
    q = query("diffusive", "beta_eq_1", 0.9, 0.2, X=0.1, Y=-0.3, k0=1.3, dim=d)
    a = m11_diffusive(q, m, s, "closed")
    b = m11_diffusive(q, m, s, "quadrature")
    assert abs(a - b) <= 1e-8 * abs(a)


def test_mean_intensity_convolution_oracle():
    z, r = 1.2, 0.4
    q = query("diffusive", "beta_eq_1", z, r)
    var = -heat_covariance(z, M1)[0, 0] * -1
    kernel = lambda u: math.exp(-u * u / (2 * var)) / math.sqrt(2 * math.pi * var)
    val, _ = integrate.quad(lambda v: kernel(r - v) * math.exp(-2 * v * v), -20, 20, epsabs=1e-14, epsrel=1e-13)
    assert mean_intensity(q, M1, S1) == pytest.approx(val, rel=1e-10)


def test_heat_kernel_by_fourier_inversion():
    z, x = 1.1, 0.7
    xi = -1.0
    val, _ = integrate.quad(lambda k: math.exp(z ** 3 / 24 * xi * k * k) * math.cos(k * x), 0, 60, epsabs=1e-14)
    var = heat_covariance(z, M1)[0, 0]
    assert val / math.pi == pytest.approx(math.exp(-x * x / (2 * var)) / math.sqrt(2 * math.pi * var), rel=1e-10)


def test_mean_intensity_limits():
    assert mean_intensity(query("diffusive", "beta_eq_1", 0.0, 0.3), M1, S1) == pytest.approx(math.exp(-0.18))
    assert mean_intensity(query("diffusive", "beta_gt_1", 4.0, 0.3), M1, S1) == pytest.approx(math.exp(-0.18))
    assert mean_intensity(query("diffusive", "beta_eq_1", 1e-4, 0.3), M1, S1) == pytest.approx(math.exp(-0.18), rel=1e-8)


# ---- chi and scintillation

@pytest.mark.parametrize("d", [1, 2])
def test_chi_closed_vs_quadrature(d):
    m, s = (M1, S1) if d == 1 else (M2, S2)
    q = query("diffusive", "beta_eq_1", 1.0, 0.0, dim=d)
    assert chi(q, m, s, "quadrature") == pytest.approx(chi(q, m, s, "closed"), rel=1e-6)


def test_chi_vanishes_as_theta_shrinks():
    vals = [chi(query("diffusive", "beta_eq_1", 1.0, 0.0), M1, SourceSpec(1.0, "gaussian", 1.0, th))
            for th in (1e-2, 1e-4, 1e-6)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-5
    assert chi(query("diffusive", "beta_eq_1_theta_to_0", 1.0, 0.0), M1, S1) == 0.0


def test_chi_at_zero_distance():
    assert chi(query("diffusive", "beta_eq_1", 0.0, 0.4), M1, S1) == pytest.approx(math.exp(-0.64))


def test_gaussian_ratio_values():
    assert chi_ratio_gaussian(0.0, 1.0, 1.0, 1.0, 0.5, 2) == 1.0
    assert chi_ratio_gaussian(1e4, 1.0, 1.0, 1.0, 0.5, 2) == pytest.approx(0.2, rel=1e-4)
    assert chi_ratio_gaussian_limit(1.0, 1.0, 0.5, 2) == pytest.approx(0.2)
    big = chi_ratio_gaussian(2.0, 1.0, 1e9, 1.0, 0.5, 2)
    assert big == pytest.approx(1 / (1 + 8 / (3 * 0.25)), rel=1e-8)
    with pytest.raises(ValueError):
        chi_ratio_gaussian(1.0, 1.0, 1.0, 1.0, 0.5, 3)


def test_gaussian_ratio_matches_chi():
    for z in (0.3, 1.0, 2.5):
        q = query("diffusive", "beta_eq_1", z, 0.0, dim=2)
        direct = chi(q, M2, S2, "quadrature") / mean_intensity(q, M2, S2) ** 2
        assert chi_ratio_gaussian(z, 1.0, 1.0, 1.0, 0.5, 2) == pytest.approx(direct, rel=1e-6)


def test_bessel_ratio_values():
    assert chi_ratio_bessel(1e-6, 1.0, 1.0, 1.0, 1.0) == pytest.approx(1.0, abs=1e-6)
    assert chi_ratio_bessel(1e5, 1.0, 1.0, 1.0, 0.3) == pytest.approx(chi_ratio_bessel_limit(1.0, 1.0, 0.3), rel=1e-4)
    # x = 50 in the scaled Bessel function
    rw = 1.0 / 10.0
    assert chi_ratio_bessel_limit(1.0, rw, 1.0) == pytest.approx(1 / math.sqrt(2 * math.pi * 50), rel=5e-3)


def test_bessel_ratio_matches_chi():
    source = SourceSpec(1.0, "bessel", 1.0, 0.6, dim=2)
    q = query("diffusive", "beta_eq_1", 1.5, 0.0, dim=2)
    direct = chi(q, M2, source, "quadrature") / mean_intensity(q, M2, source) ** 2
    assert chi_ratio_bessel(1.5, 1.0, 1.0, 1.0, 0.6) == pytest.approx(direct, rel=1e-5)


def test_scintillation_cases():
    q = query("diffusive", "beta_gt_1", 1.0, 0.0)
    assert scint_T(q, M1, S1, 1e-9) == pytest.approx(3.0, abs=1e-8)
    q0 = query("diffusive", "beta_eq_1_theta_to_0", 1.0, 0.0)
    assert scint_T(q0, M1, S1, 1e6) == pytest.approx(0.0, abs=1e-5)
    q1 = query("diffusive", "beta_eq_1", 1.0, 0.0)
    ratio = chi_ratio(q1, M1, S1)
    assert scint_T(q1, M1, S1, 1e-10) == pytest.approx(1 + 2 * ratio, abs=1e-8)


def test_saturation_generic_matches_gaussian_example():
    T = 0.8
    ft = f_T(1.0, T, method="closed")
    generic = scint_T_limit(S2, T, method="quad")
    example = ft + chi_ratio_gaussian_limit(1.0, 1.0, 0.5, 2) * (1 + ft)
    assert generic == pytest.approx(example, rel=1e-8)
    assert saturation_ratio(S2, "closed") == pytest.approx(saturation_ratio(S2, "quad"), rel=1e-10)


def test_curve_reaches_limit():
    z = np.array([0.5, 1.0, 1e2])
    curve = scintillation_curve(z, M2, S2, 1.0)
    assert curve.within_bounds()
    assert curve.s_T[-1] == pytest.approx(scint_T_limit(S2, 1.0), abs=1e-3)
    np.testing.assert_allclose(curve.abscissa, z ** 3)


# ---- higher moments

def test_mpp_p1_matches_second_moment():
    for regime, case in [("kinetic", "beta_gt_1"), ("kinetic", "beta_eq_1"), ("diffusive", "beta_gt_1"),
                         ("diffusive", "beta_eq_1"), ("diffusive", "beta_eq_1_theta_to_0")]:
        q = query(regime, case, 0.8, 0.1, X=0.2, Y=-0.1, T=[0.0, 0.3])
        dedicated = m11_kinetic(q, M1, S1) if regime == "kinetic" else m11_diffusive(q, M1, S1)
        assert mpp_limit(q, M1, S1) == pytest.approx(dedicated, rel=1e-10)


def test_mpp_unbalanced_is_zero():
    q = query("diffusive", "beta_gt_1", 1.0, 0.0, X=np.zeros((2, 1)), Y=np.zeros((1, 1)))
    assert mpp_limit(q, M1, S1) == 0


def test_mpp_coincident_values():
    zeros = np.zeros((2, 1))
    q = query("diffusive", "beta_eq_1_theta_to_0", 1.2, 0.3, X=zeros, Y=zeros)
    assert mpp_limit(q, M1, S1).real == pytest.approx(2 * mean_intensity(q, M1, S1) ** 2, rel=1e-10)
    q = query("diffusive", "beta_gt_1", 1.2, 0.3, X=zeros, Y=zeros)
    assert mpp_limit(q, M1, S1).real == pytest.approx(4 * float(gamma(S1, 0.3, 0.0)) ** 2, rel=1e-10)


def test_mpp_out_of_range():
    zeros = np.zeros((3, 1))
    q = query("kinetic", "beta_eq_1", 1.0, 0.0, X=zeros, Y=zeros)
    with pytest.raises(OutOfRangeError):
        mpp_limit(q, M1, S1)


def test_intensity_moments():
    q = query("diffusive", "beta_eq_1", 1.0, 0.2)
    ei = mean_intensity(q, M1, S1)
    assert intensity_moment(q, M1, S1, 1) == pytest.approx(ei)
    q0 = query("diffusive", "beta_eq_1_theta_to_0", 1.0, 0.2)
    assert intensity_moment(q0, M1, S1, 3) == pytest.approx(6 * ei ** 3)
    second = intensity_moment(q, M1, S1, 2)
    assert second == pytest.approx(2 * (ei ** 2 + chi(q, M1, S1)), rel=1e-8)


def test_time_averaged_moment_limits():
    q = query("diffusive", "beta_eq_1", 1.0, 0.0)
    ip = intensity_moment(q, M1, S1, 2)
    assert time_avg_intensity_moment(q, M1, S1, 2, 1e-9) == pytest.approx(ip, rel=1e-6)
    assert time_avg_intensity_moment(q, M1, S1, 2, 1e8) == pytest.approx(ip / 2, rel=1e-6)
    assert time_avg_intensity_moment(q, M1, S1, 1, 3.0) == pytest.approx(mean_intensity(q, M1, S1))


# ---- properties

sources = st.builds(SourceSpec, st.floats(0.3, 3), st.just("gaussian"), st.floats(0.3, 3), st.floats(0.01, 1),
                    tau_s=st.floats(0.05, 20))


@settings(max_examples=60, deadline=None)
@given(sources, st.floats(0.01, 5), st.floats(-2, 2))
def test_chi_bound_chain(source, z, r):
    q = query("diffusive", "beta_eq_1", z, r)
    c = chi(q, M1, source)
    assert 0 <= c <= mean_intensity(q, M1, source) ** 2 * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(sources, st.floats(0.01, 5), st.floats(0.01, 50), st.sampled_from(["beta_gt_1", "beta_eq_1", "beta_eq_1_theta_to_0"]))
def test_scintillation_in_range(source, z, T, case):
    s = scint_T(query("diffusive", case, z, 0.0), M1, source, T)
    assert -1e-12 <= s <= 3 + 1e-12


@settings(max_examples=40, deadline=None)
@given(sources, st.floats(0.01, 5), st.floats(0.01, 20), st.floats(1.01, 10))
def test_scintillation_nonincreasing_in_window(source, z, T, factor):
    q = query("diffusive", "beta_eq_1", z, 0.0)
    assert scint_T(q, M1, source, T * factor) <= scint_T(q, M1, source, T) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32), st.sampled_from(["beta_gt_1", "beta_eq_1_theta_to_0", "beta_eq_1"]))
def test_mpp_permutation_symmetry(seed, case):
    gen = np.random.default_rng(seed)
    p = 2
    X, Y, T = gen.normal(size=(p, 1)), gen.normal(size=(p, 1)), gen.uniform(0, 1, 2 * p)
    q = query("diffusive", case, 0.7, 0.1, X=X, Y=Y, T=T)
    base = mpp_limit(q, M1, S1)
    perm = [1, 0]
    q2 = query("diffusive", case, 0.7, 0.1, X=X[perm], Y=Y, T=np.concatenate([T[:p][perm], T[p:]]))
    q3 = query("diffusive", case, 0.7, 0.1, X=X, Y=Y[perm], T=np.concatenate([T[:p], T[p:][perm]]))
    assert mpp_limit(q2, M1, S1) == pytest.approx(base, rel=1e-9, abs=1e-14)
    assert mpp_limit(q3, M1, S1) == pytest.approx(base, rel=1e-9, abs=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.1, 3), st.floats(0.1, 3), st.floats(0.05, 1), st.sampled_from([1, 2]))
def test_gaussian_ratio_limit(sm2, r0, rw, th, d):
    # the relative gap to the limit is about r0**2 / (sm2 z**3 / 3)
    z = (3 * r0 ** 2 * 1e4 / sm2) ** (1 / 3)
    got = chi_ratio_gaussian(z, sm2, r0, rw, th, d)
    assert got == pytest.approx(chi_ratio_gaussian_limit(r0, rw, th, d), rel=1e-4)


def test_kinetic_fourth_moment_without_propagation():
    from itoscint.source import s_p
    X, Y, T = np.array([[0.1], [-0.2]]), np.array([[0.3], [0.0]]), np.array([0.0, 0.2, 0.1, 0.4])
    q = query("kinetic", "beta_gt_1", 0.0, 0.2, X=X, Y=Y, T=T)
    # beta > 1 collapses spatial structure onto Gamma(r, 0)
    expected = float(gamma(S1, 0.2, 0.0)) ** 2 * s_p(SourceSpec(1e6, "fully_coherent", tau_s=S1.tau_s), [0, 0], [0, 0], T)
    assert mpp_limit(q, M1, S1).real == pytest.approx(expected, rel=1e-10)


def test_kinetic_beta1_fourth_moment_small_distance_continuity():
    zeros = np.zeros((2, 1))
    at0 = mpp_limit(query("kinetic", "beta_eq_1", 0.0, 0.0, X=zeros, Y=zeros), M1, S1).real
    near = mpp_limit(query("kinetic", "beta_eq_1", 1e-3, 0.0, X=zeros, Y=zeros), M1, S1).real
    assert near == pytest.approx(at0, rel=1e-2)
