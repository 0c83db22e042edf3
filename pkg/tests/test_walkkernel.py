import itertools
import math
from fractions import Fraction

import pytest
from scipy import integrate, special

from brwre.walkkernel import (
    ResourceGuardError, max_truncation, pi_d, return_prob, return_probs, step_kernel, t0_epsilon,
)


@pytest.mark.parametrize("d", range(1, 9))
def test_step_kernel_sums_to_one(d):
    k = step_kernel(d)
    assert len(k) == 2 * d
    assert math.fsum(k.values()) == 1.0
    assert all(sum(map(abs, e)) == 1 for e in k)


def test_step_kernel_examples():
    assert step_kernel(1) == {(1,): 0.5, (-1,): 0.5}
    assert set(step_kernel(3).values()) == {1 / 6}


def test_return_prob_examples():
    assert return_prob(1, 1) == 0.5
    assert return_prob(1, 2) == 0.375
    assert return_prob(3, 2, exact=True) == Fraction(90, 1296)


def _closed_paths(d, steps):
    moves = list(step_kernel(d))
    count = 0
    for path in itertools.product(moves, repeat=steps):
        if all(sum(c) == 0 for c in zip(*path)):
            count += 1
    return Fraction(count, (2 * d) ** steps)


@pytest.mark.parametrize("d,l", [(2, 1), (2, 2), (3, 1), (3, 2), (4, 1)])
def test_return_prob_brute_force(d, l):
    assert return_prob(d, l, exact=True) == _closed_paths(d, 2 * l)


def test_return_prob_one_dim_closed_form():
    r = return_probs(1, 16, exact=True)
    assert r == [Fraction(math.comb(2 * l, l), 4**l) for l in range(1, 17)]


def test_return_prob_two_dim_closed_form():
    # P_{2l}(0,0) = (C(2l, l) / 4^l)^2 in d = 2
    r = return_probs(2, 10, exact=True)
    assert r == [Fraction(math.comb(2 * l, l), 4**l) ** 2 for l in range(1, 11)]


def test_float_matches_exact():
    ex = return_probs(3, 12, exact=True)
    fl = return_probs(3, 12)
    assert all(abs(float(a) - b) < 1e-15 for a, b in zip(ex, fl))


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_return_probs_positive_nonincreasing(d):
    r = return_probs(d, 12)
    assert all(v > 0 for v in r)
    assert all(a >= b for a, b in zip(r, r[1:]))


def test_resource_guard():
    with pytest.raises(ResourceGuardError, match="asymptotic"):
        return_prob(8, 10)


def test_local_limit_ratio_d3():
    r = return_probs(3, 64)
    scaled = [r[l - 1] * l**1.5 for l in range(32, 65)]
    ratios = [b / a for a, b in zip(scaled, scaled[1:])]
    assert all(0.95 <= x <= 1.05 for x in ratios)


def _watson_pi(d):
    # u_d = int_0^inf exp(-t) I_0(t/d)^d dt, pi_d = 1 - 1/u_d
    u, _ = integrate.quad(lambda t: special.ive(0, t / d) ** d, 0, math.inf, limit=500)
    return 1 - 1 / u


def test_pi_low_dimensions():
    for d in (1, 2):
        diag = pi_d(d)
        assert (diag.pi_d, diag.error_bound) == (1.0, 0.0)


def test_pi3_value():
    diag = pi_d(3)
    assert diag.truncation == 64
    assert 0.335 <= diag.pi_d <= 0.346
    assert abs(diag.pi_d - 0.3405) <= 0.002
    ref = _watson_pi(3)
    assert abs(diag.pi_d - ref) <= max(3 * diag.error_bound, 5e-4)


@pytest.mark.parametrize("d", [4, 5, 6])
def test_pi_high_dimensions_against_green_function(d):
    diag = pi_d(d)
    assert diag.pi_d < 1
    assert abs(diag.pi_d - _watson_pi(d)) < 2e-3


def test_pi_requires_room_for_fit():
    with pytest.raises(ValueError):
        pi_d(3, L=3)


def test_max_truncation():
    assert max_truncation(3) == 64
    L = max_truncation(5)
    assert (2 * L + 1) ** 5 <= 10**7 < (2 * L + 3) ** 5


def test_t0_epsilon_examples():
    assert t0_epsilon(22.63, 3) == (0.1, 1)
    assert t0_epsilon(1.25, 3) is None
    eps, t0 = t0_epsilon(1.25, 1)
    # smallest t0 with partial sum >= 2 / 0.25
    s = [float(x) for x in return_probs(1, t0)]
    assert sum(s) >= 8 > sum(s[:-1])
    assert eps == 1.0


def test_t0_epsilon_rejects_alpha_le_one():
    with pytest.raises(ValueError):
        t0_epsilon(1.0, 3)


def test_t0_epsilon_d3_minimal_t0():
    # (1 + 0.01) / (alpha - 1) just above r_1 = 1/6 forces t0 = 2, where eps = 0.1 holds
    alpha = 1 + 1.01 / (1 / 6 + 0.005)
    eps, t0 = t0_epsilon(alpha, 3)
    assert t0 == 2 and eps == 0.1
