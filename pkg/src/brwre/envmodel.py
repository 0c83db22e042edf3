"""Offspring laws, the i.i.d. time-space environment, and moment diagnostics."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import rng

NORMALIZATION_TOL = 1e-12
DEFAULT_K_MAX = 1 << 16


class InvalidLawError(ValueError):
    """Invalid offspring law or environment."""


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    # repr() of a float is the shortest decimal that round-trips, so 0.1 -> 1/10
    return Fraction(repr(float(value)))


@dataclass(frozen=True)
class OffspringLaw:
    """Finite-support pmf on {0, 1, 2, ...}.

    Build with :meth:`from_pmf`; the raw constructor expects already
    validated, sorted, normalized data.
    """

    support: tuple[int, ...]
    exact_probs: tuple[Fraction, ...]
    probs: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.exact_probs))

    @classmethod
    def from_pmf(cls, pmf: Mapping[int, object], k_max: int = DEFAULT_K_MAX) -> "OffspringLaw":
        if not pmf:
            raise InvalidLawError("offspring law needs at least one support point")
        items = []
        for k, p in pmf.items():
            k = int(k)
            if k < 0 or k > k_max:
                raise InvalidLawError(f"offspring value {k} outside [0, {k_max}]")
            fp = _as_fraction(p)
            if fp < 0:
                raise InvalidLawError(f"negative probability {p} at k={k}")
            if fp > 0:
                items.append((k, fp))
        items.sort()
        total = sum(p for _, p in items)
        if not items or abs(float(total) - 1.0) > NORMALIZATION_TOL:
            raise InvalidLawError(f"offspring probabilities sum to {float(total)!r}, not 1")
        return cls(tuple(k for k, _ in items), tuple(p / total for _, p in items))

    @classmethod
    def point_mass(cls, k: int) -> "OffspringLaw":
        return cls.from_pmf({k: 1})

    @property
    def exact_mean(self) -> Fraction:
        return sum(k * q for k, q in zip(self.support, self.exact_probs))

    def moment(self, p: int) -> float:
        return law_moments(self, p)

    @property
    def mean(self) -> float:
        return law_moments(self, 1)

    def pmf(self, k: int) -> float:
        try:
            return self.probs[self.support.index(k)]
        except ValueError:
            return 0.0

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.support, self.probs))


def law_moments(law: OffspringLaw, p: int) -> float:
    """``sum_k k**p q(k)`` over the finite support."""
    if p not in (1, 2, 3):
        raise ValueError("moment order must be 1, 2 or 3")
    return float(sum(Fraction(k) ** p * q for k, q in zip(law.support, law.exact_probs)))


@dataclass(frozen=True)
class EnvironmentLaw:
    """Finite mixture Q of offspring laws, assigned i.i.d. to every (t, x)."""

    weights: tuple[float, ...]
    laws: tuple[OffspringLaw, ...]
    exact_weights: tuple[Fraction, ...] = field(repr=False, default=())

    def __post_init__(self):
        if not self.laws or len(self.laws) != len(self.weights):
            raise InvalidLawError("environment needs matching weights and laws, at least one")
        if not self.exact_weights:
            object.__setattr__(self, "exact_weights", tuple(_as_fraction(w) for w in self.weights))
        for w in self.exact_weights:
            if not 0 < w <= 1:
                raise InvalidLawError(f"component weight {float(w)} outside (0, 1]")
        total = sum(self.exact_weights)
        if abs(float(total) - 1.0) > NORMALIZATION_TOL:
            raise InvalidLawError(f"environment weights sum to {float(total)!r}, not 1")
        ew = tuple(w / total for w in self.exact_weights)
        object.__setattr__(self, "exact_weights", ew)
        object.__setattr__(self, "weights", tuple(float(w) for w in ew))

    @classmethod
    def mixture(cls, components: Sequence[tuple[object, OffspringLaw | Mapping[int, object]]]):
        ws, laws = [], []
        for w, law in components:
            if not isinstance(law, OffspringLaw):
                law = OffspringLaw.from_pmf(law)
            ws.append(_as_fraction(w))
            laws.append(law)
        return cls(tuple(float(w) for w in ws), tuple(laws), tuple(ws))

    @classmethod
    def deterministic(cls, law: OffspringLaw | Mapping[int, object]):
        return cls.mixture([(1, law)])

    @property
    def n_components(self) -> int:
        return len(self.laws)

    @property
    def means(self) -> tuple[float, ...]:
        return tuple(law.mean for law in self.laws)

    @property
    def has_zero_offspring(self) -> bool:
        return any(law.support[0] == 0 for law in self.laws)

    @property
    def k_max(self) -> int:
        return max(law.support[-1] for law in self.laws)

    def means_all_equal(self) -> bool:
        return len({law.exact_mean for law in self.laws}) == 1

    def cumulative_weights(self) -> np.ndarray:
        cum = np.cumsum(np.array(self.weights, dtype=np.float64))
        cum[-1] = 1.0
        return cum


def env_moments(env: EnvironmentLaw) -> tuple[float, float, float, float]:
    """Annealed moments ``(m, m2, m3, alpha)`` with ``alpha = Q[m_{t,x}^2] / m^2``."""
    m = float(sum(w * law.exact_mean for w, law in zip(env.exact_weights, env.laws)))
    if m <= 0:
        raise InvalidLawError("annealed mean offspring m is zero")
    m2 = sum(w * law.moment(2) for w, law in zip(env.weights, env.laws))
    m3 = sum(w * law.moment(3) for w, law in zip(env.weights, env.laws))
    alpha = sum(w * law.mean**2 for w, law in zip(env.weights, env.laws)) / m**2
    return m, m2, m3, alpha


def quenched_mean_power(env: EnvironmentLaw, p: int) -> float:
    """``Q[m_{t,x}^p]``, the p-th moment of the site mean under Q."""
    return sum(w * law.mean**p for w, law in zip(env.weights, env.laws))


def entropy_criterion(env: EnvironmentLaw, d: int) -> tuple[float, float, bool]:
    m = env_moments(env)[0]
    value = 0.0
    for w, law in zip(env.weights, env.laws):
        r = law.mean / m
        if r > 0:
            value += w * r * math.log(r)
    threshold = math.log(2 * d)
    return value, threshold, value > threshold


def c0(env: EnvironmentLaw) -> float:
    """``-ln Q[sum_{k>=1} q(k)/k]``; requires q(0) = 0 in every component."""
    if env.has_zero_offspring:
        raise InvalidLawError("c0 requires q(0) = 0 in every component law")
    inv = sum(
        w * sum(q / k for k, q in zip(law.support, law.exact_probs))
        for w, law in zip(env.exact_weights, env.laws)
    )
    return -math.log(inv)


def sample_law(env: EnvironmentLaw, env_seed: int, t: int, x: Sequence[int]) -> int:
    """Index of the component law sitting at time-space location (t, x)."""
    if env.n_components == 1:
        return 0
    key = rng.stream_key_ref(env_seed, rng.DOMAIN_ENV, t, [int(v) for v in x])
    u = rng.uniform_ref(key, 1)
    return _component_from_uniform(env.cumulative_weights(), u)


def _component_from_uniform(cum: np.ndarray, u: float) -> int:
    return int(min(np.searchsorted(cum, u, side="right"), len(cum) - 1))


def sample_law_many(env: EnvironmentLaw, env_seed: int, t: int, coords: np.ndarray) -> np.ndarray:
    """Vectorized :func:`sample_law` over the rows of an (S, d) int64 array."""
    coords = np.ascontiguousarray(coords, dtype=np.int64)
    if env.n_components == 1:
        return np.zeros(coords.shape[0], dtype=np.int64)
    u = rng.env_uniforms(np.uint64(env_seed & rng.MASK64), np.int64(t), coords)
    cum = env.cumulative_weights()
    return np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1).astype(np.int64)


class Regime(enum.Enum):
    SURVIVES_WD = "SurvivesWD"
    DELOCALIZED_WD2 = "DelocalizedWD2"
    LOCALIZED_A1 = "LocalizedA1"
    LOCALIZED_A2 = "LocalizedA2"
    LOCALIZED_A3 = "LocalizedA3"
    INDETERMINATE = "Indeterminate"

    @property
    def localized(self) -> bool:
        return self.name.startswith("LOCALIZED")


@dataclass(frozen=True)
class RegimeReport:
    d: int
    m: float
    m2: float
    m3: float
    alpha: float
    entropy: float
    ln2d: float
    c0: float | None
    pi_d: float | None
    alpha_threshold: float | None
    predicted_regime: Regime
    # (epsilon, t0) when alpha > 1 and such a pair exists; filled by the harness
    t0_epsilon: tuple[float, int] | None = None

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["predicted_regime"] = self.predicted_regime.value
        return out


def classify_regime(env: EnvironmentLaw, d: int, walk_diag=None) -> RegimeReport:
    """Evaluate the growth phase-transition conditions in order (a1), (a2), (a3), (WD2).

    ``walk_diag`` is a ``(pi_d, error_bound)`` pair or a ``WalkDiagnostics``;
    when omitted it is computed with the default truncation.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    m, m2, m3, alpha = env_moments(env)
    entropy, ln2d, a3 = entropy_criterion(env, d)
    c0_val = None if env.has_zero_offspring else c0(env)
    if walk_diag is None:
        from .walkkernel import pi_d as _pi_d

        walk_diag = _pi_d(d)
    if hasattr(walk_diag, "pi_d"):
        pi = float(walk_diag.pi_d)
    elif isinstance(walk_diag, tuple):
        pi = float(walk_diag[0])
    else:
        pi = float(walk_diag)
    threshold = 1.0 / pi if d >= 3 else None

    disordered = not env.means_all_equal()
    if d == 1 and disordered:
        regime = Regime.LOCALIZED_A1
    elif d == 2 and disordered:
        regime = Regime.LOCALIZED_A2
    elif d >= 3 and a3:
        regime = Regime.LOCALIZED_A3
    elif d >= 3 and m > 1 and math.isfinite(m2) and alpha < threshold:
        regime = Regime.DELOCALIZED_WD2
    else:
        regime = Regime.INDETERMINATE
    return RegimeReport(
        d=d,
        m=m,
        m2=m2,
        m3=m3,
        alpha=alpha,
        entropy=entropy,
        ln2d=ln2d,
        c0=c0_val,
        pi_d=pi,
        alpha_threshold=threshold,
        predicted_regime=regime,
    )


# reference environments used by the experiments and the test-suite
_NAMED = {
    "E1": [(Fraction(1, 2), {1: 1}), (Fraction(1, 2), {3: 1})],
    "E3": [(Fraction(9, 10), {1: 1}), (Fraction(1, 10), {2: 1})],
    "E4": [(Fraction(49, 50), {1: 1}), (Fraction(1, 50), {100: 1})],
    "BINARY": [(1, {1: Fraction(1, 2), 2: Fraction(1, 2)})],
}


def named_environment(name: str) -> EnvironmentLaw:
    try:
        return EnvironmentLaw.mixture(_NAMED[name.upper()])
    except KeyError:
        raise KeyError(f"unknown environment {name!r}; known: {sorted(_NAMED)}") from None
