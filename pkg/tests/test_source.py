import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from itoscint import source as src
from itoscint.combinatorics import permanent_naive
from itoscint.lattice import centered_grid
from itoscint.streams import stream

GAUSS = src.SourceSpec(1.0, "gaussian", 1.0, 1.0)


def test_coincident_points():
    x = 0.7
    assert src.mutual_coherence(GAUSS, x, x) == pytest.approx(src.envelope(GAUSS, x) ** 2)


def test_symmetric_in_arguments():
    assert src.mutual_coherence(GAUSS, 0.3, -1.2) == src.mutual_coherence(GAUSS, -1.2, 0.3)


def test_worked_value():
    # envelope exp(-0.25) twice, coherence exp(-1/2) at separation 1
    assert src.mutual_coherence(GAUSS, 0.5, -0.5) == pytest.approx(math.exp(-1.0), rel=1e-15)


def test_bessel_coherence():
    spec = src.SourceSpec(2.0, "bessel", 1.5, 0.5, dim=2)
    x, y = np.array([0.3, 0.1]), np.array([-0.2, 0.4])
    from scipy.special import j0
    expected = math.exp(-(x @ x + y @ y) / 4) * j0(np.linalg.norm(x - y) / 0.75)
    assert float(src.mutual_coherence(spec, x, y)) == pytest.approx(expected, rel=1e-14)


def test_bessel_needs_plane():
    with pytest.raises(ValueError):
        src.SourceSpec(coherence_kind="bessel", dim=1)


def test_theta_range():
    with pytest.raises(ValueError, match=r"theta must lie in \(0,1\]"):
        src.SourceSpec(theta=1.5)


def test_gamma_centre_difference_form():
    spec = src.SourceSpec(1.3, "gaussian", 0.8, 0.4)
    r, s = 0.2, 0.9
    assert src.gamma(spec, r, s) == pytest.approx(src.mutual_coherence(spec, r + 0.2 * s, r - 0.2 * s))
    assert src.gamma(spec, r, -s) == pytest.approx(src.gamma(spec, r, s))


def test_temporal_kernel_values():
    spec = src.SourceSpec(tau_s=2.0)
    assert src.temporal_kernel(spec, 0.0) == 1.0
    assert src.temporal_kernel(spec, 2.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert src.temporal_kernel(spec, 1e4) == 0.0
    assert src.temporal_kernel(spec, -1e4) == 0.0


def test_tabulated_kernel(tmp_path):
    t = np.linspace(0, 10, 201)
    path = tmp_path / "k.csv"
    path.write_text("t,F\n" + "\n".join(f"{a},{math.exp(-a)}" for a in t))
    spec = src.load_temporal_kernel(path, tau_s=2.0)
    assert float(src.temporal_kernel(spec, 2.0)) == pytest.approx(math.exp(-1), rel=2e-3)
    assert float(src.temporal_kernel(spec, -2.0)) == float(src.temporal_kernel(spec, 2.0))


@pytest.mark.parametrize("F", [(1.0, 1.2, 0.0), (0.9, 0.5, 0.0), (1.0, -0.1, 0.0)])
def test_invalid_kernel_tables(F):
    with pytest.raises(ValueError):
        src.SourceSpec(temporal_kind="tabulated", tabulated_t=(0.0, 1.0, 2.0), tabulated_F=F)


def test_non_covariance_kernel_rejected():
    # a box kernel has a sinc spectrum with negative lobes
    with pytest.raises(ValueError, match="negative spectrum"):
        src.SourceSpec(temporal_kind="tabulated", tabulated_t=(0.0, 0.99, 1.0, 5.0), tabulated_F=(1.0, 1.0, 0.0, 0.0))


def test_s_p_small_cases(rng):
    spec = src.SourceSpec(1.2, "gaussian", 0.9, 0.6, tau_s=0.7)
    x, y, t, tp = 0.3, -0.4, 0.1, 0.5
    expected = src.temporal_kernel(spec, t - tp) * src.mutual_coherence(spec, x, y)
    assert src.s_p(spec, [x], [y], [t, tp]) == pytest.approx(float(expected), rel=1e-14)
    X, Y, T = rng.normal(size=2), rng.normal(size=2), rng.normal(size=4)
    A = src.temporal_kernel(spec, T[:2, None] - T[None, 2:]) * src.mutual_coherence(spec, X[:, None], Y[None, :])
    assert src.s_p(spec, X, Y, T) == pytest.approx(A[0, 0] * A[1, 1] + A[0, 1] * A[1, 0], rel=1e-13)


def test_s_p_against_enumeration(rng):
    spec = src.SourceSpec(1.2, "gaussian", 0.9, 0.6, tau_s=0.7)
    X, Y, T = rng.normal(size=5), rng.normal(size=5), rng.normal(size=10)
    A = src.temporal_kernel(spec, T[:5, None] - T[None, 5:]) * src.mutual_coherence(spec, X[:, None], Y[None, :])
    assert src.s_p(spec, X, Y, T) == pytest.approx(permanent_naive(A), rel=1e-12)


def test_s_p_guard():
    with pytest.raises(ValueError):
        src.s_p(GAUSS, np.zeros(11), np.zeros(11), np.zeros(22))


def test_fully_coherent_is_deterministic():
    spec = src.SourceSpec(1.0, "fully_coherent")
    grid = centered_grid(1, 64, 0.5)
    a = src.sample_source_field(spec, grid, [0.0, 1.0], 0.5, stream(1, 0))
    b = src.sample_source_field(spec, grid, [0.0, 1.0], 0.5, stream(2, 0))
    assert np.array_equal(a.fields.values, b.fields.values)
    np.testing.assert_allclose(a.fields.values[0], np.exp(-(0.5 * grid.axis()) ** 2))


def _draws(spec, grid, times, n, eps=0.5):
    gen = stream(11, 5)
    return np.array([src.sample_source_field(spec, grid, times, eps, gen).fields.values for _ in range(n)])


def test_sampled_covariance_and_circularity():
    spec = src.SourceSpec(2.0, "gaussian", 1.0, 0.5, tau_s=1.0)
    grid = centered_grid(1, 64, 0.5)
    eps = 0.5
    u = _draws(spec, grid, [0.0, 0.5], 10000, eps)
    i, j = 34, 36  # x = 1.0, 2.0
    x = grid.axis()
    target = src.mutual_coherence(spec, eps * x[i], eps * x[i])
    power = np.abs(u[:, 0, i]) ** 2
    assert abs(power.mean() - target) < 3 * power.std() / 100
    cross = u[:, 0, i] * np.conj(u[:, 1, j])
    target = src.temporal_kernel(spec, -0.5) * src.mutual_coherence(spec, eps * x[i], eps * x[j])
    assert abs(cross.real.mean() - target) < 3 * cross.real.std() / 100
    pseudo = u[:, 0, i] * u[:, 1, j]
    for part in (pseudo.real, pseudo.imag):
        assert abs(part.mean()) < 3 * part.std() / 100


def test_bessel_sampled_covariance():
    spec = src.SourceSpec(1.0, "bessel", 1.0, 1.0, dim=2)
    grid = centered_grid(2, 16, 0.6)
    u = _draws(spec, grid, [0.0], 2000)
    a, b = (8, 8), (10, 9)
    x = 0.6 * np.array([2.0, 1.0]) * 0.5
    target = float(src.mutual_coherence(spec, np.zeros(2), x))
    cross = u[:, 0, a[0], a[1]] * np.conj(u[:, 0, b[0], b[1]])
    assert abs(cross.real.mean() - target) < 3 * cross.real.std() / math.sqrt(2000) + 0.02


def test_times_must_be_uniform():
    with pytest.raises(ValueError):
        src.sample_source_field(GAUSS, centered_grid(1, 32, 0.5), [0.0, 0.1, 0.5], 0.5, stream(0))


points = st.lists(st.floats(-3, 3), min_size=1, max_size=5)
specs = st.builds(src.SourceSpec, st.floats(0.3, 3), st.just("gaussian"), st.floats(0.3, 3), st.floats(0.05, 1),
                  tau_s=st.floats(0.1, 5))


@settings(max_examples=60, deadline=None)
@given(specs, st.integers(1, 5).flatmap(lambda p: st.tuples(*[st.floats(-3, 3)] * (4 * p))), st.randoms())
def test_row_permutation_invariance(spec, flat, rnd):
    p = len(flat) // 4
    X, Y, T = np.array(flat[:p]), np.array(flat[p:2 * p]), np.array(flat[2 * p:])
    order = list(range(p))
    rnd.shuffle(order)
    T2 = np.concatenate([T[:p][order], T[p:]])
    base = src.s_p(spec, X, Y, T)
    # Ryser's formula cancels, so tiny permanents carry absolute roundoff
    assert src.s_p(spec, X[order], Y, T2) == pytest.approx(base, rel=1e-10, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(specs, points)
def test_intensity_moment_nonnegative(spec, xs):
    assert src.intensity_source_moment(spec, np.array(xs)) >= -1e-15


@settings(max_examples=60, deadline=None)
@given(specs, st.floats(-4, 4), st.floats(-4, 4))
def test_cauchy_schwarz(spec, x, y):
    j = src.mutual_coherence(spec, x, y)
    assert j ** 2 <= src.mutual_coherence(spec, x, x) * src.mutual_coherence(spec, y, y) * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 10), st.floats(-100, 100))
def test_kernel_bounds(tau, dt):
    spec = src.SourceSpec(tau_s=tau)
    f = src.temporal_kernel(spec, dt)
    assert 0 <= f <= 1
    assert f == src.temporal_kernel(spec, -dt)
