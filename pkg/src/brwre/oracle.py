"""Reference implementations used to validate the count-based engine.

Nothing here shares code with :mod:`brwre.engine` except the environment
stream (:func:`brwre.envmodel.sample_law_many`), so agreement between the
two is evidence rather than tautology.

Configurations are canonicalized as a tuple of ``(site, count)`` pairs
sorted by site, with sites as tuples of Python ints.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from . import rng
from .envmodel import EnvironmentLaw, sample_law_many

PARTICLE_GUARD = 10**6
OUTCOME_GUARD = 10**7

Config = tuple  # tuple[(site tuple, count), ...]


class GuardExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ParticleList:
    t: int
    particles: np.ndarray  # (P, d) int64, one row per particle

    def histogram(self) -> dict[tuple[int, ...], int]:
        return dict(Counter(map(tuple, self.particles.tolist())))

    def config(self) -> Config:
        return canonical_config(self.histogram())


@dataclass(frozen=True)
class ExactLaw:
    outcomes: dict  # Config -> Fraction

    def total_mass(self) -> Fraction:
        return sum(self.outcomes.values(), Fraction(0))

    def expectation(self, fn: Callable[[Config], object]) -> Fraction:
        return sum((p * fn(c) for c, p in self.outcomes.items()), Fraction(0))

    def marginal(self, fn: Callable[[Config], object]) -> dict:
        out = defaultdict(Fraction)
        for c, p in self.outcomes.items():
            out[fn(c)] += p
        return dict(out)


def canonical_config(counts) -> Config:
    items = counts.items() if hasattr(counts, "items") else counts
    return tuple(sorted((tuple(int(v) for v in x), int(n)) for x, n in items if n))


def config_total(config: Config) -> int:
    return sum(n for _, n in config)


def _moves(d: int) -> np.ndarray:
    out = np.zeros((2 * d, d), dtype=np.int64)
    for j in range(2 * d):
        out[j, j // 2] = 1 if j % 2 == 0 else -1
    return out


# ---------------------------------------------------------------------------
# per-particle simulator


def particle_run(d: int, env: EnvironmentLaw, env_seed: int, run_seed: int, t_max: int,
                 guard: int = PARTICLE_GUARD) -> list[ParticleList]:
    """Literal per-particle dynamics; returns the particle lists for t = 0..t_max."""
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([run_seed & rng.MASK64, rng.DOMAIN_ORACLE])))
    moves = _moves(d)
    cdfs = [np.cumsum(law.probs) for law in env.laws]
    supports = [np.array(law.support, dtype=np.int64) for law in env.laws]
    particles = np.zeros((1, d), dtype=np.int64)
    out = [ParticleList(0, particles)]
    for t in range(t_max):
        P = particles.shape[0]
        if P == 0:
            out.append(ParticleList(t + 1, particles))
            continue
        law_idx = sample_law_many(env, env_seed, t, particles)
        dest = particles + moves[gen.integers(0, 2 * d, size=P)]
        u = gen.random(P)
        kids = np.empty(P, dtype=np.int64)
        for c, (cdf, sup) in enumerate(zip(cdfs, supports)):
            sel = law_idx == c
            if sel.any():
                kids[sel] = sup[np.minimum(np.searchsorted(cdf, u[sel], side="right"), len(sup) - 1)]
        if int(kids.sum()) > guard:
            raise GuardExceeded(f"particle population exceeds {guard} at t={t + 1}")
        particles = np.repeat(dest, kids, axis=0)
        out.append(ParticleList(t + 1, particles))
    return out


# ---------------------------------------------------------------------------
# exhaustive enumeration


def _merge_configs(a: Config, b: Config) -> Config:
    acc = dict(a)
    for x, n in b:
        acc[x] = acc.get(x, 0) + n
    return canonical_config(acc)


def _convolve(da: dict, db: dict) -> dict:
    out = defaultdict(Fraction)
    for ca, pa in da.items():
        for cb, pb in db.items():
            out[_merge_configs(ca, cb)] += pa * pb
    return out


def _site_law(x: tuple, n: int, env: EnvironmentLaw, d: int) -> dict:
    """Exact law of the children produced by the n particles at one site."""
    step_p = Fraction(1, 2 * d)
    mixed = defaultdict(Fraction)
    for w, law in zip(env.exact_weights, env.laws):
        single = defaultdict(Fraction)
        for j in range(2 * d):
            y = list(x)
            y[j // 2] += 1 if j % 2 == 0 else -1
            y = tuple(y)
            for k, q in zip(law.support, law.exact_probs):
                single[((y, k),) if k else ()] += step_p * q
        acc = {(): Fraction(1)}
        for _ in range(n):
            acc = _convolve(acc, single)
        for c, p in acc.items():
            mixed[c] += w * p
    return mixed


def outcome_bound(d: int, env: EnvironmentLaw, t_max: int) -> int:
    """Product over (worst-case) particles of 2d * |support| * |components|."""
    per = 2 * d * max(len(l.support) for l in env.laws) * env.n_components
    particles = sum(env.k_max**s for s in range(t_max))
    return per**particles


def enumerate_exact(d: int, env: EnvironmentLaw, t_max: int, guard: int = OUTCOME_GUARD) -> ExactLaw:
    """Exact annealed law of the configuration at time ``t_max`` (<= 2)."""
    if not 0 <= t_max <= 2:
        raise ValueError("exact enumeration is limited to t_max <= 2")
    if outcome_bound(d, env, t_max) > guard:
        raise GuardExceeded(f"outcome count bound exceeds {guard}")
    dist = {(((0,) * d, 1),): Fraction(1)}
    for _ in range(t_max):
        new = defaultdict(Fraction)
        for config, p in dist.items():
            acc = {(): Fraction(1)}
            for x, n in config:
                acc = _convolve(acc, _site_law(x, n, env, d))
            for c, q in acc.items():
                new[c] += p * q
        dist = dict(new)
    return ExactLaw(dist)


# ---------------------------------------------------------------------------
# goodness of fit


def _pool(keys: list, expected: np.ndarray, min_expected: float):
    """Greedily merge bins (smallest first) until every bin reaches min_expected."""
    order = np.argsort(expected)
    groups = []
    acc, members = 0.0, []
    for i in order:
        members.append(keys[i])
        acc += expected[i]
        if acc >= min_expected:
            groups.append(members)
            acc, members = 0.0, []
    if members:
        if groups:
            groups[-1].extend(members)
        else:
            groups.append(members)
    return groups


def compare_distributions(samples: Sequence[Config], reference, bins: Callable | None = None,
                          min_expected: float = 5.0) -> tuple[float, float]:
    """Chi-square test of ``samples`` against an :class:`ExactLaw` (goodness of
    fit) or against a second sample list (two-sample homogeneity).

    ``bins`` maps a configuration to a coarser key, e.g. ``(N_t, occupied)``.
    Returns ``(statistic, p_value)``.
    """
    if len(samples) < 1000:
        raise ValueError("need at least 1000 samples")
    key = bins or (lambda c: c)
    obs = Counter(key(c) for c in samples)
    n = len(samples)

    if isinstance(reference, ExactLaw):
        probs = defaultdict(float)
        for c, p in reference.outcomes.items():
            probs[key(c)] += float(p)
        impossible = [k for k in obs if probs.get(k, 0.0) == 0.0]
        if impossible:
            return math.inf, 0.0
        keys = list(probs)
        expected = np.array([n * probs[k] for k in keys])
        groups = _pool(keys, expected, min_expected)
        if len(groups) < 2:
            raise ValueError("degenerate binning: fewer than two bins after pooling")
        f_obs = np.array([sum(obs.get(k, 0) for k in g) for g in groups], dtype=float)
        f_exp = np.array([sum(n * probs[k] for k in g) for g in groups])
        f_exp *= f_obs.sum() / f_exp.sum()
        res = stats.chisquare(f_obs, f_exp)
        return float(res.statistic), float(res.pvalue)

    other = Counter(key(c) for c in reference)
    if len(reference) < 1000:
        raise ValueError("need at least 1000 reference samples")
    keys = sorted(set(obs) | set(other), key=repr)
    combined = np.array([obs.get(k, 0) + other.get(k, 0) for k in keys], dtype=float)
    groups = _pool(keys, combined, 2 * min_expected)
    if len(groups) < 2:
        raise ValueError("degenerate binning: fewer than two bins after pooling")
    table = np.array(
        [[sum(obs.get(k, 0) for k in g) for g in groups],
         [sum(other.get(k, 0) for k in g) for g in groups]],
        dtype=float,
    )
    res = stats.chi2_contingency(table, correction=False)
    return float(res.statistic), float(res.pvalue)


def coarse_bins(config: Config) -> tuple[int, int]:
    """(N_t, occupied sites)."""
    return config_total(config), len(config)


# ---------------------------------------------------------------------------
# sample generation


def engine_samples(d: int, env: EnvironmentLaw, t: int, n: int, master_seed: int,
                   threshold: float = float("inf")) -> list[Config]:
    from .engine import final_state

    out = []
    for i in range(n):
        s = final_state(d, env, rng.derive_seed(master_seed, i, 0), rng.derive_seed(master_seed, i, 1), t, threshold)
        out.append(canonical_config(s.counts))
    return out


def particle_samples(d: int, env: EnvironmentLaw, t: int, n: int, master_seed: int) -> list[Config]:
    out = []
    for i in range(n):
        traj = particle_run(d, env, rng.derive_seed(master_seed, i, 2), rng.derive_seed(master_seed, i, 3), t)
        out.append(traj[-1].config())
    return out
