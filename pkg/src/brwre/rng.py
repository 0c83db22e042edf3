"""Counter-based random streams and binomial samplers.

Every random number in a simulation is a pure function of
``(seed, domain, t, site, extra, counter)``.  Keys are built by absorbing
64-bit words into a splitmix64-style mixer; the ``j``-th uniform of a stream
is ``mix64(key + j * GOLDEN) >> 11`` scaled to ``[0, 1)``.

Site encoding: the word sequence ``(t, d, x_1, ..., x_d)`` where each
coordinate is the two's-complement 64-bit pattern of a signed integer
(the little-endian int64 byte layout read as one word).  Nothing depends on
host byte order or dictionary iteration order.

Domains
-------
``DOMAIN_ENV``        which offspring law sits at ``(t, x)``; keyed by env_seed
``DOMAIN_DIRECTION``  split of the particles at ``(t, x)`` over the 2d moves
``DOMAIN_OFFSPRING``  offspring sum of the group leaving ``(t, x)`` along a
                      direction (extra word = direction index)
``DOMAIN_ORACLE``     per-particle draws of the naive reference simulator
"""

import math

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB

DOMAIN_ENV = 0x454E56
DOMAIN_DIRECTION = 0x444952
DOMAIN_OFFSPRING = 0x4F4646
DOMAIN_ORACLE = 0x4F5243
DOMAIN_SEEDS = 0x534544

# Largest n handed to the exact sampler; beyond this double precision can no
# longer resolve the log-density ratios in the rejection test.
EXACT_MAX_N = 1 << 50

# numba-side constants
_U_GOLDEN = np.uint64(GOLDEN)
_U_C1 = np.uint64(_C1)
_U_C2 = np.uint64(_C2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


# ---------------------------------------------------------------------------
# pure-Python reference (documentation of the bit-level contract)


def mix64_ref(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _C1) & MASK64
    z = ((z ^ (z >> 27)) * _C2) & MASK64
    return z ^ (z >> 31)


def absorb_ref(h: int, w: int) -> int:
    return mix64_ref(h ^ mix64_ref((w & MASK64) + GOLDEN))


def site_digest_ref(t: int, x) -> int:
    h = absorb_ref(0, t)
    h = absorb_ref(h, len(x))
    for xi in x:
        h = absorb_ref(h, int(xi))
    return h


def seed_base_ref(seed: int, domain: int) -> int:
    return mix64_ref(mix64_ref(seed) ^ mix64_ref(domain + GOLDEN))


def stream_key_ref(seed: int, domain: int, t: int, x, extra: int = 0) -> int:
    base = seed_base_ref(seed, domain)
    return absorb_ref(mix64_ref(base ^ site_digest_ref(t, x)), extra)


def uniform_ref(key: int, counter: int) -> float:
    return (mix64_ref(key + counter * GOLDEN) >> 11) * _INV53


def derive_seed(master: int, index: int, purpose: int) -> int:
    """Positional seed split: run ``index`` gets a seed independent of how many
    runs precede or follow it."""
    return absorb_ref(absorb_ref(mix64_ref(master ^ DOMAIN_SEEDS), index), purpose)


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _U_C1
    z = (z ^ (z >> _S27)) * _U_C2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def absorb(h, w):
    return mix64(h ^ mix64(w + _U_GOLDEN))


@njit(cache=True)
def seed_base(seed, domain):
    return mix64(mix64(np.uint64(seed)) ^ mix64(np.uint64(domain) + _U_GOLDEN))


@njit(cache=True)
def site_digest(t, row):
    h = absorb(np.uint64(0), np.uint64(t))
    h = absorb(h, np.uint64(row.shape[0]))
    for i in range(row.shape[0]):
        h = absorb(h, np.uint64(row[i]))
    return h


@njit(cache=True, inline="always")
def stream_key(base, digest, extra):
    return absorb(mix64(base ^ digest), np.uint64(extra))


@njit(cache=True, inline="always")
def uniform(key, counter):
    return np.float64(mix64(key + np.uint64(counter) * _U_GOLDEN) >> _S11) * _INV53


@njit(cache=True)
def env_uniforms(env_seed, t, coords):
    """First uniform of the environment stream at each site of ``coords``."""
    base = seed_base(env_seed, np.uint64(DOMAIN_ENV))
    out = np.empty(coords.shape[0])
    for i in range(coords.shape[0]):
        out[i] = uniform(stream_key(base, site_digest(t, coords[i]), 0), 1)
    return out


# --- exact binomial --------------------------------------------------------


@njit(cache=True)
def _stirling_tail(x):
    # log(x!) - [(x + 1/2) log x - x + log(2 pi)/2], accurate for x >= 16
    x2 = x * x
    return (1.0 / 12.0 - (1.0 / 360.0 - 1.0 / (1260.0 * x2)) / x2) / x


@njit(cache=True)
def log_factorial_diff(a, b):
    """log(a!) - log(b!) without cancellation for large, close a and b."""
    if a < 16 or b < 16:
        return math.lgamma(a + 1.0) - math.lgamma(b + 1.0)
    fa = float(a)
    fb = float(b)
    delta = float(a - b)
    return (
        delta * (math.log(fb) - 1.0)
        + (fa + 0.5) * math.log1p(delta / fb)
        + _stirling_tail(fa)
        - _stirling_tail(fb)
    )


@njit(cache=True)
def _binomial_inversion(n, p, key, ctr):
    q = 1.0 - p
    qn = math.exp(n * math.log1p(-p))
    np_ = n * p
    bound = min(n, int(np_ + 10.0 * math.sqrt(np_ * q + 1.0)))
    ctr += 1
    u = uniform(key, ctr)
    x = 0
    px = qn
    while u > px:
        x += 1
        if x > bound:
            x = 0
            px = qn
            ctr += 1
            u = uniform(key, ctr)
        else:
            u -= px
            px = px * (n - x + 1) * p / (x * q)
    return x, ctr


@njit(cache=True)
def _binomial_btrs(n, p, key, ctr):
    # Hormann (1993) transformed rejection with squeeze; needs n p >= 10
    q = 1.0 - p
    spq = math.sqrt(n * p * q)
    b = 1.15 + 2.53 * spq
    a = -0.0873 + 0.0248 * b + 0.01 * p
    c = n * p + 0.5
    v_r = 0.92 - 4.2 / b
    alpha = (2.83 + 5.1 / b) * spq
    lpq = math.log(p / q)
    m = int(math.floor((n + 1) * p))
    while True:
        ctr += 1
        u = uniform(key, ctr) - 0.5
        ctr += 1
        v = uniform(key, ctr)
        us = 0.5 - abs(u)
        kf = np.floor((2.0 * a / us + b) * u + c)
        if kf < 0.0 or kf > n:
            continue
        k = int(kf)
        if us >= 0.07 and v <= v_r:
            return k, ctr
        if v <= 0.0:
            continue
        v = math.log(v * alpha / (a / (us * us) + b))
        # log f(k) - log f(m)
        h = (
            log_factorial_diff(m, k)
            + log_factorial_diff(n - m, n - k)
            + (k - m) * lpq
        )
        if v <= h:
            return k, ctr


@njit(cache=True)
def binomial_exact(n, p, key, ctr):
    """Exact Binomial(n, p) on the counter stream ``key``; returns (k, ctr)."""
    if n <= 0 or p <= 0.0:
        return 0, ctr
    if p >= 1.0:
        return n, ctr
    flip = p > 0.5
    pp = 1.0 - p if flip else p
    if n * pp < 10.0:
        k, ctr = _binomial_inversion(n, pp, key, ctr)
    else:
        k, ctr = _binomial_btrs(n, pp, key, ctr)
    if flip:
        k = n - k
    return k, ctr


@njit(cache=True)
def standard_normal(key, ctr):
    ctr += 1
    u1 = uniform(key, ctr)
    ctr += 1
    u2 = uniform(key, ctr)
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2), ctr


# ---------------------------------------------------------------------------
# public wrappers (used by tests and the reference simulator)


def binomial_sample(n: int, p: float, key: int, counter: int = 0):
    """Exact draw from Binomial(n, p) at a given stream position.

    Returns ``(k, counter)`` where ``counter`` is the advanced stream position.
    """
    if n > EXACT_MAX_N:
        raise ValueError(f"n={n} exceeds the exact-sampler range 2**50")
    k, ctr = binomial_exact(np.int64(n), float(p), np.uint64(key), np.int64(counter))
    return int(k), int(ctr)


# --- 128-bit counts as (hi, lo) uint64 pairs --------------------------------

_U0 = np.uint64(0)
_U1 = np.uint64(1)
_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_TWO64 = 18446744073709551616.0

FLAG_APPROX = 1
FLAG_EXACT_RANGE = 2
FLAG_OVERFLOW = 4


@njit(cache=True, inline="always")
def add128(a_hi, a_lo, b_hi, b_lo):
    """Returns (hi, lo, overflowed)."""
    lo = a_lo + b_lo
    carry = _U1 if lo < a_lo else _U0
    hi = a_hi + b_hi
    over = hi < a_hi
    hi2 = hi + carry
    over = over or hi2 < hi
    return hi2, lo, over


@njit(cache=True, inline="always")
def sub128(a_hi, a_lo, b_hi, b_lo):
    # caller guarantees a >= b
    borrow = _U1 if a_lo < b_lo else _U0
    return a_hi - b_hi - borrow, a_lo - b_lo


@njit(cache=True, inline="always")
def mul128_small(hi, lo, k):
    """(hi, lo) * k for 0 <= k < 2**31; returns (hi, lo, overflowed)."""
    uk = np.uint64(k)
    if uk == _U0:
        return _U0, _U0, False
    p0 = (lo & _M32) * uk
    p1 = (lo >> _S32) * uk + (p0 >> _S32)
    new_lo = (p0 & _M32) | ((p1 & _M32) << _S32)
    carry = p1 >> _S32
    over = False
    if hi != _U0 and hi > (np.uint64(0xFFFFFFFFFFFFFFFF) - carry) // uk:
        over = True
    new_hi = hi * uk + carry
    return new_hi, new_lo, over


@njit(cache=True, inline="always")
def less128(a_hi, a_lo, b_hi, b_lo):
    return a_hi < b_hi or (a_hi == b_hi and a_lo < b_lo)


@njit(cache=True, inline="always")
def to_float128(hi, lo):
    return np.float64(hi) * _TWO64 + np.float64(lo)


@njit(cache=True)
def from_float128(x):
    if x < _TWO64:
        return _U0, np.uint64(x)
    h = np.floor(x / _TWO64)
    return np.uint64(h), np.uint64(x - h * _TWO64)


@njit(cache=True)
def binomial128(n_hi, n_lo, p, key, ctr, threshold):
    """Binomial(n, p) for a 128-bit n.

    Draws with n <= threshold are exact; larger n use a rounded, clamped
    normal with matched mean and variance.  Returns (hi, lo, ctr, flags).
    """
    if (n_hi == _U0 and n_lo == _U0) or p <= 0.0:
        return _U0, _U0, ctr, 0
    if p >= 1.0:
        return n_hi, n_lo, ctr, 0
    nf = to_float128(n_hi, n_lo)
    small = n_hi == _U0 and n_lo <= np.uint64(EXACT_MAX_N)
    if small and nf <= threshold:
        k, ctr = binomial_exact(np.int64(n_lo), p, key, ctr)
        return _U0, np.uint64(k), ctr, 0
    if threshold == math.inf:
        return _U0, _U0, ctr, FLAG_EXACT_RANGE
    z, ctr = standard_normal(key, ctr)
    x = np.floor(nf * p + math.sqrt(nf * p * (1.0 - p)) * z + 0.5)
    if x <= 0.0:
        return _U0, _U0, ctr, FLAG_APPROX
    d_hi, d_lo = from_float128(min(x, nf))
    if less128(n_hi, n_lo, d_hi, d_lo):
        d_hi, d_lo = n_hi, n_lo
    return d_hi, d_lo, ctr, FLAG_APPROX


class CounterStream:
    """Python-side handle on one counter-based stream (tests, reference code)."""

    def __init__(self, key: int, counter: int = 0):
        self.key = key & MASK64
        self.counter = counter

    @classmethod
    def for_site(cls, seed: int, domain: int, t: int, x, extra: int = 0):
        return cls(stream_key_ref(seed, domain, t, x, extra))

    def uniform(self) -> float:
        self.counter += 1
        return uniform_ref(self.key, self.counter)

    def binomial(self, n: int, p: float, threshold: float = float(1 << 32)):
        """Returns (draw, approximated).  n may exceed 64 bits."""
        if n < 0 or n >= 1 << 128:
            raise ValueError("n must lie in [0, 2**128)")
        hi, lo, ctr, flags = binomial128(
            np.uint64(n >> 64), np.uint64(n & MASK64), float(p),
            np.uint64(self.key), np.int64(self.counter), float(threshold),
        )
        if flags & FLAG_EXACT_RANGE:
            raise ValueError(f"n={n} is beyond the exact sampler and no threshold is set")
        self.counter = int(ctr)
        return (int(hi) << 64) | int(lo), bool(flags & FLAG_APPROX)
