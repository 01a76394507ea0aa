import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from itoscint.asymptotics import functional_F, functional_G
from itoscint.combinatorics import n_matchings, partial_matchings, permanent, permanent_batch, permanent_naive


def _cplx(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_permanent_small():
    assert permanent(np.array([[2.0]])) == 2.0
    assert permanent(np.array([[1.0, 2.0], [3.0, 4.0]])) == pytest.approx(10.0)
    assert permanent(np.ones((4, 4))) == pytest.approx(24.0)
    assert permanent(np.zeros((0, 0))) == 1.0


@pytest.mark.parametrize("n", range(1, 7))
def test_ryser_matches_enumeration(rng, n):
    a = _cplx(rng, n, n)
    assert permanent(a) == pytest.approx(permanent_naive(a), rel=1e-12)


def test_batch_matches_scalar(rng):
    a = _cplx(rng, 5, 4, 4)
    np.testing.assert_allclose(permanent_batch(a), [permanent(m) for m in a], rtol=1e-12)


def test_permanent_guard():
    with pytest.raises(ValueError):
        permanent(np.ones((11, 11)))
    with pytest.raises(ValueError):
        permanent(np.ones((2, 3)))


def test_matching_counts():
    assert n_matchings(2, 2) == 6
    assert len(partial_matchings(2, 2)) == 6
    assert n_matchings(3, 2) == len(partial_matchings(3, 2)) == 12
    assert n_matchings(6, 6) == sum(math.comb(6, m) ** 2 * math.factorial(m) for m in range(1, 7))
    with pytest.raises(ValueError):
        partial_matchings(7, 1)


def test_F_single():
    assert functional_F([0.3], [0.7], [[1.9]]) == pytest.approx(1.9)


def test_F_factorised(rng):
    h, hc = _cplx(rng, 3), _cplx(rng, 2)
    g = np.outer(h, hc)
    assert functional_F(h, hc, g) == pytest.approx(np.prod(h) * np.prod(hc), rel=1e-12)


def test_F_two_by_two_expansion(rng):
    h, hc, g = _cplx(rng, 2), _cplx(rng, 2), _cplx(rng, 2, 2)
    c = g - np.outer(h, hc)
    terms = [
        h[0] * h[1] * hc[0] * hc[1],
        c[0, 0] * h[1] * hc[1], c[0, 1] * h[1] * hc[0], c[1, 0] * h[0] * hc[1], c[1, 1] * h[0] * hc[0],
        c[0, 0] * c[1, 1], c[0, 1] * c[1, 0],
    ]
    assert functional_F(h, hc, g) == pytest.approx(sum(terms), rel=1e-12)


def test_F_is_gaussian_moment(rng):
    # For jointly Gaussian (u, v) with means h, h' and cross-covariances c and
    # no other correlations, E[prod u prod v] is the pairing sum.
    h, hc = _cplx(rng, 2), _cplx(rng, 1)
    g = _cplx(rng, 2, 1)
    c = g - np.outer(h, hc)
    expected = h[0] * h[1] * hc[0] + c[0, 0] * h[1] + c[1, 0] * h[0]
    assert functional_F(h, hc, g) == pytest.approx(expected, rel=1e-12)


def test_G_cases(rng):
    assert functional_G([[0.4]], [[1.3]]) == pytest.approx(1.3)
    h = _cplx(rng, 3, 3)
    assert functional_G(h, h) == pytest.approx(permanent(h), rel=1e-12)
    h, g = _cplx(rng, 2, 2), _cplx(rng, 2, 2)
    c = g - h
    direct = (h[0, 0] * h[1, 1] + h[0, 1] * h[1, 0]
              + c[0, 0] * h[1, 1] + c[0, 1] * h[1, 0] + c[1, 0] * h[0, 1] + c[1, 1] * h[0, 0]
              + c[0, 0] * c[1, 1] + c[0, 1] * c[1, 0])
    assert functional_G(h, g) == pytest.approx(direct, rel=1e-12)


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_G_equals_permanent_of_g(rng, p):
    h, g = _cplx(rng, p, p), _cplx(rng, p, p)
    assert functional_G(h, g) == pytest.approx(permanent(g), rel=1e-11)


matrices = st.integers(1, 6).flatmap(
    lambda n: st.lists(st.floats(-2, 2), min_size=n * n, max_size=n * n).map(lambda v: np.reshape(v, (n, n))))


@settings(max_examples=80, deadline=None)
@given(matrices, st.randoms())
def test_permanent_row_and_column_symmetry(a, rnd):
    n = a.shape[0]
    rows, cols = list(range(n)), list(range(n))
    rnd.shuffle(rows)
    rnd.shuffle(cols)
    scale = math.factorial(n) * max(1.0, np.abs(a).max()) ** n
    assert abs(permanent(a[rows][:, cols]) - permanent(a)) <= 1e-12 * scale
    assert abs(permanent(a.T) - permanent(a)) <= 1e-12 * scale


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 32))
def test_F_symmetric_under_relabelling(p, q, seed):
    gen = np.random.default_rng(seed)
    h, hc, g = _cplx(gen, p), _cplx(gen, q), _cplx(gen, p, q)
    rp, rq = gen.permutation(p), gen.permutation(q)
    a = functional_F(h, hc, g)
    b = functional_F(h[rp], hc[rq], g[np.ix_(rp, rq)])
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))
