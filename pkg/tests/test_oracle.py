import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brwre import oracle, rng
from brwre.engine import PopulationState, run
from brwre.envmodel import EnvironmentLaw, sample_law

from test_engine import _check_state


def test_particle_run_delta2():
    env = EnvironmentLaw.deterministic({2: 1})
    traj = oracle.particle_run(1, env, 1, 2, 2)
    assert [p.t for p in traj] == [0, 1, 2]
    last = traj[-1]
    assert len(last.particles) == 4
    assert set(last.histogram()) <= {(-2,), (0,), (2,)}


def test_particle_run_critical_delta_is_a_walk():
    env = EnvironmentLaw.deterministic({1: 1})
    traj = oracle.particle_run(2, env, 1, 2, 50)
    pos = [tuple(p.particles[0]) for p in traj]
    assert all(len(p.particles) == 1 for p in traj)
    assert all(sum(abs(a - b) for a, b in zip(x, y)) == 1 for x, y in zip(pos, pos[1:]))


@given(st.integers(1, 3), st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
@settings(max_examples=25)
def test_particle_histograms_are_valid_states(d, es, rs):
    env = EnvironmentLaw.mixture([(0.5, {0: 0.2, 1: 0.3, 2: 0.5}), (0.5, {1: 0.5, 3: 0.5})])
    for p in oracle.particle_run(d, env, es, rs, 8):
        s = PopulationState.from_counts(p.t, p.histogram(), d)
        assert s.total == len(p.particles)
        _check_state(s)


def test_particle_guard():
    with pytest.raises(oracle.GuardExceeded):
        oracle.particle_run(1, EnvironmentLaw.deterministic({10: 1}), 0, 0, 10, guard=10**5)


def _children_from_env(env, env_seed, t, hist):
    ks = [law.support[0] for law in env.laws]
    return sum(n * ks[sample_law(env, env_seed, t, x)] for x, n in hist.items())


def test_oracle_and_engine_share_environment():
    # with point-mass components, N_{t+1} is fixed by the law at each occupied site
    env = EnvironmentLaw.mixture([(0.5, {1: 1}), (0.5, {2: 1})])
    es = 77
    traj = oracle.particle_run(2, env, es, 1, 10)
    for a, b in zip(traj, traj[1:]):
        assert len(b.particles) == _children_from_env(env, es, a.t, a.histogram())
    _, _, states = run(2, env, es, 2, 10, keep_states=True)
    for a, b in zip(states, states[1:]):
        assert b.total == _children_from_env(env, es, a.t, a.counts)


def test_enumerate_delta2():
    law = oracle.enumerate_exact(1, EnvironmentLaw.deterministic({2: 1}), 1)
    assert law.outcomes == {(((1,), 2),): Fraction(1, 2), (((-1,), 2),): Fraction(1, 2)}


def test_enumerate_E1(E1):
    one = oracle.enumerate_exact(1, E1, 1)
    assert one.marginal(oracle.config_total) == {1: Fraction(1, 2), 3: Fraction(1, 2)}
    two = oracle.enumerate_exact(1, E1, 2)
    assert two.total_mass() == 1
    assert two.expectation(oracle.config_total) == 4


@st.composite
def tiny_envs(draw):
    n = draw(st.integers(1, 2))
    comps = []
    for _ in range(n):
        ks = draw(st.lists(st.integers(0, 2), min_size=1, max_size=2, unique=True))
        ws = draw(st.lists(st.integers(1, 4), min_size=len(ks), max_size=len(ks)))
        comps.append((Fraction(1, n), {k: Fraction(w, sum(ws)) for k, w in zip(ks, ws)}))
    env = EnvironmentLaw.mixture(comps)
    if all(law.exact_mean == 0 for law in env.laws):
        env = EnvironmentLaw.mixture([(Fraction(1, n), {1: 1})] * n)
    return env


@given(tiny_envs(), st.integers(1, 2), st.integers(0, 2))
@settings(max_examples=30)
def test_exact_law_martingale(env, d, t):
    law = oracle.enumerate_exact(d, env, t)
    m = sum(w * l.exact_mean for w, l in zip(env.exact_weights, env.laws))
    assert law.total_mass() == 1
    assert law.expectation(oracle.config_total) == m**t


def test_enumerate_guards(E4):
    with pytest.raises(oracle.GuardExceeded):
        oracle.enumerate_exact(3, E4, 2)
    with pytest.raises(ValueError):
        oracle.enumerate_exact(1, E4, 3)


def _resample(law, n, gen):
    keys = list(law.outcomes)
    p = np.array([float(law.outcomes[k]) for k in keys])
    return [keys[i] for i in gen.choice(len(keys), size=n, p=p / p.sum())]


def test_null_calibration_goodness_of_fit(E1):
    law = oracle.enumerate_exact(1, E1, 2)
    gen = np.random.default_rng(1)
    rejects = sum(oracle.compare_distributions(_resample(law, 2000, gen), law)[1] < 1e-3 for _ in range(1000))
    # expected 1 in 1000
    assert rejects <= 5


def test_null_calibration_two_sample(binary):
    law = oracle.enumerate_exact(1, binary, 2)
    gen = np.random.default_rng(2)
    rejects = sum(
        oracle.compare_distributions(_resample(law, 1000, gen), _resample(law, 1000, gen))[1] < 1e-3
        for _ in range(1000)
    )
    assert rejects <= 5


def test_engine_against_own_resample(binary):
    a = oracle.engine_samples(1, binary, 2, 3000, 1)
    b = oracle.engine_samples(1, binary, 2, 3000, 2)
    assert oracle.compare_distributions(a, b)[1] > 1e-3


def test_comparison_has_power(binary, delta2):
    exact = oracle.enumerate_exact(1, EnvironmentLaw.mixture([(0.5, {1: 1}), (0.5, {2: 1})]), 2)
    # deterministic q(1)=q(2)=1/2 differs from the mixture only through sibling correlations
    samples = oracle.engine_samples(1, binary, 2, 20000, 3)
    assert oracle.compare_distributions(samples, exact)[1] < 1e-6
    assert oracle.compare_distributions(oracle.engine_samples(1, delta2, 2, 2000, 4), exact)[1] < 1e-6
    # a configuration outside the exact support is an immediate rejection
    stat, p = oracle.compare_distributions(oracle.engine_samples(1, EnvironmentLaw.deterministic({3: 1}), 2, 1000, 5), exact)
    assert p == 0.0 and stat == math.inf


def test_comparison_errors(E1):
    law = oracle.enumerate_exact(1, E1, 1)
    with pytest.raises(ValueError, match="1000"):
        oracle.compare_distributions(_resample(law, 10, np.random.default_rng(0)), law)
    one = oracle.ExactLaw({((((0,), 1),)): Fraction(1)})
    with pytest.raises(ValueError, match="degenerate"):
        oracle.compare_distributions([(((0,), 1),)] * 1000, one)


def test_canonical_config_is_sorted():
    c = oracle.canonical_config({(1, 0): 2, (-1, 3): 1, (0, 0): 0})
    assert c == (((-1, 3), 1), ((1, 0), 2))
    assert oracle.coarse_bins(c) == (3, 2)
