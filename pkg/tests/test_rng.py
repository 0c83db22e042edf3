import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numba import njit
from scipy import stats

from brwre import rng

u64 = st.integers(0, 2**64 - 1)
site = st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=5)


@given(u64)
def test_mix64_matches_reference(z):
    assert int(rng.mix64(np.uint64(z))) == rng.mix64_ref(z)


@given(u64, st.integers(0, 10**6), site, st.integers(0, 7))
def test_stream_key_matches_reference(seed, t, x, extra):
    # numba hands uint64 back as Python ints; re-wrap before passing them in
    base = np.uint64(rng.seed_base(np.uint64(seed), np.uint64(rng.DOMAIN_DIRECTION)))
    digest = np.uint64(rng.site_digest(np.int64(t), np.array(x, dtype=np.int64)))
    key = rng.stream_key(base, digest, np.uint64(extra))
    assert int(key) == rng.stream_key_ref(seed, rng.DOMAIN_DIRECTION, t, x, extra)


@given(u64, st.integers(1, 1000))
def test_uniform_in_unit_interval(key, ctr):
    u = float(rng.uniform(np.uint64(key), np.int64(ctr)))
    assert 0.0 <= u < 1.0
    assert u == rng.uniform_ref(key, ctr)


def test_env_uniforms_match_reference():
    coords = np.array([[0, 0], [1, -1], [-3, 5]], dtype=np.int64)
    got = rng.env_uniforms(np.uint64(42), np.int64(7), coords)
    for row, u in zip(coords.tolist(), got):
        key = rng.stream_key_ref(42, rng.DOMAIN_ENV, 7, row, 0)
        assert u == rng.uniform_ref(key, 1)


def test_site_digest_is_dimension_tagged():
    # (t=0, x=(0,)) and (t=0, x=(0, 0)) must not collide
    assert rng.site_digest_ref(0, (0,)) != rng.site_digest_ref(0, (0, 0))


def test_domains_are_distinct():
    doms = [rng.DOMAIN_ENV, rng.DOMAIN_DIRECTION, rng.DOMAIN_OFFSPRING, rng.DOMAIN_ORACLE, rng.DOMAIN_SEEDS]
    assert len(set(doms)) == len(doms)
    keys = {rng.stream_key_ref(1, d, 0, (0,)) for d in doms}
    assert len(keys) == len(doms)


def test_uniforms_are_uniform():
    key = rng.stream_key_ref(3, rng.DOMAIN_ORACLE, 0, (0,))
    u = np.array([rng.uniform_ref(key, c) for c in range(1, 20001)])
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_derive_seed_positional():
    a = [rng.derive_seed(9, i, 0) for i in range(10)]
    b = [rng.derive_seed(9, i, 0) for i in range(5, 10)]
    assert a[5:] == b
    assert len(set(a)) == 10
    assert rng.derive_seed(9, 0, 0) != rng.derive_seed(9, 0, 1)


@njit
def _draws(n, p, key, size):
    out = np.empty(size, np.int64)
    ctr = 0
    for i in range(size):
        out[i], ctr = rng.binomial_exact(n, p, key, ctr)
    return out


@pytest.mark.parametrize(
    "n,p", [(10, 0.3), (30, 0.4), (100, 0.2), (5000, 0.01), (10**6, 0.37), (10**9, 0.01), (10**12, 0.5)]
)
def test_binomial_exact_matches_scipy(n, p):
    key = np.uint64(rng.stream_key_ref(n, rng.DOMAIN_ORACLE, 2, (1,)))
    draws = _draws(np.int64(n), p, key, 10**6)
    assert draws.min() >= 0 and draws.max() <= n
    # chi-square on up to 200 quantile bins of the exact law
    edges = np.unique(stats.binom.ppf(np.linspace(0, 1, 201)[1:-1], n, p))
    cdf = np.concatenate([[0.0], stats.binom.cdf(edges, n, p), [1.0]])
    expected = np.diff(cdf) * draws.size
    observed = np.bincount(np.searchsorted(edges, draws, side="left"), minlength=expected.size)
    res = stats.chisquare(observed, expected * observed.sum() / expected.sum())
    assert res.pvalue > 1e-6


def test_binomial_mean_and_variance_moderate_n():
    key = np.uint64(rng.stream_key_ref(0, rng.DOMAIN_ORACLE, 3, (0,)))
    d = _draws(np.int64(10**7), 0.3, key, 10**5).astype(float)
    mu, var = 3e6, 10**7 * 0.3 * 0.7
    assert abs(d.mean() - mu) < 5 * math.sqrt(var / d.size)
    assert abs(d.var() / var - 1) < 0.03


@given(st.integers(0, 2**50), st.floats(0, 1), u64)
def test_binomial_exact_range(n, p, key):
    k, _ = rng.binomial_sample(n, p, key, 0)
    assert 0 <= k <= n
    if p == 0:
        assert k == 0
    if p == 1:
        assert k == n


def test_binomial_range_guard():
    with pytest.raises(ValueError):
        rng.binomial_sample(2**50 + 1, 0.5, 1, 0)


@given(st.integers(0, 2**128 - 1), st.integers(0, 2**128 - 1))
def test_add128(a, b):
    hi, lo, over = rng.add128(np.uint64(a >> 64), np.uint64(a & rng.MASK64), np.uint64(b >> 64), np.uint64(b & rng.MASK64))
    s = a + b
    assert bool(over) == (s >= 2**128)
    assert (int(hi) << 64 | int(lo)) == s % 2**128


@given(st.integers(0, 2**128 - 1), st.integers(0, 2**31 - 1))
def test_mul128_small(a, k):
    hi, lo, over = rng.mul128_small(np.uint64(a >> 64), np.uint64(a & rng.MASK64), k)
    prod = a * k
    assert bool(over) == (prod >= 2**128)
    if not over:
        assert (int(hi) << 64 | int(lo)) == prod


@given(st.integers(0, 2**128 - 1), st.integers(0, 2**128 - 1))
def test_sub_less128(a, b):
    a, b = max(a, b), min(a, b)
    hi, lo = rng.sub128(np.uint64(a >> 64), np.uint64(a & rng.MASK64), np.uint64(b >> 64), np.uint64(b & rng.MASK64))
    assert (int(hi) << 64 | int(lo)) == a - b
    assert bool(rng.less128(np.uint64(b >> 64), np.uint64(b & rng.MASK64), np.uint64(a >> 64), np.uint64(a & rng.MASK64))) == (b < a)


def test_counter_stream_large_n_normal_approximation():
    s = rng.CounterStream.for_site(5, rng.DOMAIN_OFFSPRING, 0, (0,))
    n = 10**30
    draws = []
    for _ in range(2000):
        k, approx = s.binomial(n, 0.25)
        assert approx
        draws.append(k)
    draws = np.array(draws, dtype=float)
    sd = math.sqrt(n * 0.25 * 0.75)
    z = (draws - n * 0.25) / sd
    assert abs(z.mean()) < 5 / math.sqrt(2000)
    assert abs(z.std() - 1) < 0.1


def test_counter_stream_strict_mode_refuses_huge_n():
    s = rng.CounterStream(1)
    with pytest.raises(ValueError):
        s.binomial(2**60, 0.5, threshold=math.inf)
    k, approx = s.binomial(2**40, 0.5, threshold=math.inf)
    assert not approx and 0 <= k <= 2**40
