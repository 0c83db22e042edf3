"""Count-based simulator of a branching random walk in random environment.

State is a sparse, canonically ordered list of occupied sites with 128-bit
counts (two uint64 columns).  One step costs
O(occupied sites * (2d + support size)) regardless of the population size.

Per occupied site ``x`` at time ``t`` with ``n`` particles:

1. the offspring law is read from the environment stream at ``(t, x)``;
2. ``n`` is split over the 2d moves ``(+e_1, -e_1, +e_2, ...)`` by
   sequential conditional binomials on the direction stream at ``(t, x)``;
3. each direction group of size ``g`` is replaced by the sum of ``g``
   i.i.d. offspring counts, drawn as a multinomial over the law's support on
   the offspring stream at ``(t, x, direction)``.

Children of one parent never separate, so offspring are summed per
direction group.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import rng
from .envmodel import EnvironmentLaw, env_moments
from .observables import ObservableRecord, _overlap_kernel

DEFAULT_GAUSSIAN_THRESHOLD = float(1 << 32)
MAX_COUNT = 1 << 128


# ---------------------------------------------------------------------------
# state


@dataclass(frozen=True, eq=False)
class PopulationState:
    t: int
    coords: np.ndarray  # (S, d) int64, rows in lexicographic order
    hi: np.ndarray  # (S,) uint64
    lo: np.ndarray  # (S,) uint64
    total: int
    ln_total: float = field(default=0.0)

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    @property
    def occupied(self) -> int:
        return self.coords.shape[0]

    @property
    def counts(self) -> dict[tuple[int, ...], int]:
        out = {}
        for row, h, l in zip(self.coords.tolist(), self.hi.tolist(), self.lo.tolist()):
            out[tuple(row)] = (h << 64) | l
        return out

    @classmethod
    def from_counts(cls, t: int, counts: dict, d: int | None = None) -> "PopulationState":
        items = sorted((tuple(int(v) for v in x), int(n)) for x, n in counts.items() if n)
        if d is None:
            d = len(items[0][0]) if items else 1
        coords = np.array([x for x, _ in items], dtype=np.int64).reshape(len(items), d)
        hi = np.array([n >> 64 for _, n in items], dtype=np.uint64)
        lo = np.array([n & rng.MASK64 for _, n in items], dtype=np.uint64)
        total = sum(n for _, n in items)
        return cls(t, coords, hi, lo, total, math.log(total) if total else -math.inf)

    def __eq__(self, other):
        return (
            isinstance(other, PopulationState)
            and self.t == other.t
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.hi, other.hi)
            and np.array_equal(self.lo, other.lo)
        )


def init_state(d: int) -> PopulationState:
    """One particle at the origin at t = 0."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return PopulationState(
        0,
        np.zeros((1, d), dtype=np.int64),
        np.zeros(1, dtype=np.uint64),
        np.ones(1, dtype=np.uint64),
        1,
        0.0,
    )


class Status(enum.Enum):
    COMPLETED = "Completed"
    EXTINCT = "Extinct"
    OVERFLOW = "Overflow"


@dataclass(frozen=True)
class RunStatus:
    kind: Status
    t: int | None = None
    detail: str = ""

    def __str__(self):
        return self.kind.value if self.t is None else f"{self.kind.value}({self.t})"


class OverflowError128(ArithmeticError):
    def __init__(self, t: int, detail: str):
        super().__init__(f"t={t}: {detail}")
        self.t = t
        self.detail = detail


# ---------------------------------------------------------------------------
# environment tables handed to the kernel


@dataclass(frozen=True)
class _EnvTables:
    cum: np.ndarray
    start: np.ndarray
    length: np.ndarray
    k: np.ndarray
    p_cond: np.ndarray
    k_max: int


@functools.lru_cache(maxsize=64)
def _tables(env: EnvironmentLaw) -> _EnvTables:
    start, length, ks, pcs = [], [], [], []
    for law in env.laws:
        start.append(len(ks))
        length.append(len(law.support))
        tail = sum(law.exact_probs)
        for k, q in zip(law.support, law.exact_probs):
            ks.append(k)
            pcs.append(float(q / tail) if tail else 1.0)
            tail -= q
    return _EnvTables(
        env.cumulative_weights(),
        np.array(start, dtype=np.int64),
        np.array(length, dtype=np.int64),
        np.array(ks, dtype=np.int64),
        np.array(pcs, dtype=np.float64),
        env.k_max,
    )


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _step_kernel(coords, hi, lo, t, env_base, dir_base, off_base,
                 cum, start, length, ks, pcs, threshold):
    S, d = coords.shape
    nd = 2 * d
    n_comp = cum.shape[0]
    out_coords = np.empty((S * nd, d), dtype=np.int64)
    out_hi = np.empty(S * nd, dtype=np.uint64)
    out_lo = np.empty(S * nd, dtype=np.uint64)
    zero = np.uint64(0)
    n_out = 0
    flags = 0
    for i in range(S):
        row = coords[i]
        dig = rng.site_digest(t, row)
        c = 0
        if n_comp > 1:
            u = rng.uniform(rng.stream_key(env_base, dig, 0), 1)
            while c < n_comp - 1 and u >= cum[c]:
                c += 1
        s0 = start[c]
        sl = length[c]
        dkey = rng.stream_key(dir_base, dig, 0)
        dctr = 0
        r_hi = hi[i]
        r_lo = lo[i]
        for j in range(nd):
            if r_hi == zero and r_lo == zero:
                break
            if j < nd - 1:
                g_hi, g_lo, dctr, f = rng.binomial128(r_hi, r_lo, 1.0 / (nd - j), dkey, dctr, threshold)
                flags |= f
                r_hi, r_lo = rng.sub128(r_hi, r_lo, g_hi, g_lo)
            else:
                g_hi = r_hi
                g_lo = r_lo
            if g_hi == zero and g_lo == zero:
                continue
            # offspring of the g particles moving along direction j
            ch_hi = zero
            ch_lo = zero
            m_hi = g_hi
            m_lo = g_lo
            if sl > 1:
                okey = rng.stream_key(off_base, dig, j)
                octr = 0
                for s in range(sl - 1):
                    if m_hi == zero and m_lo == zero:
                        break
                    c_hi, c_lo, octr, f = rng.binomial128(m_hi, m_lo, pcs[s0 + s], okey, octr, threshold)
                    flags |= f
                    m_hi, m_lo = rng.sub128(m_hi, m_lo, c_hi, c_lo)
                    k = ks[s0 + s]
                    if k > 0 and (c_hi != zero or c_lo != zero):
                        p_hi, p_lo, over = rng.mul128_small(c_hi, c_lo, k)
                        ch_hi, ch_lo, over2 = rng.add128(ch_hi, ch_lo, p_hi, p_lo)
                        if over or over2:
                            flags |= rng.FLAG_OVERFLOW
            k = ks[s0 + sl - 1]
            if k > 0 and (m_hi != zero or m_lo != zero):
                p_hi, p_lo, over = rng.mul128_small(m_hi, m_lo, k)
                ch_hi, ch_lo, over2 = rng.add128(ch_hi, ch_lo, p_hi, p_lo)
                if over or over2:
                    flags |= rng.FLAG_OVERFLOW
            if ch_hi == zero and ch_lo == zero:
                continue
            for a in range(d):
                out_coords[n_out, a] = row[a]
            if j % 2 == 0:
                out_coords[n_out, j // 2] += 1
            else:
                out_coords[n_out, j // 2] -= 1
            out_hi[n_out] = ch_hi
            out_lo[n_out] = ch_lo
            n_out += 1
    return out_coords[:n_out], out_hi[:n_out], out_lo[:n_out], flags


@njit(cache=True)
def _pack_order(coords, bits):
    S, d = coords.shape
    off = np.int64(1) << np.int64(bits - 1)
    keys = np.zeros(S, dtype=np.int64)
    for i in range(S):
        key = np.int64(0)
        for a in range(d):
            key = (key << np.int64(bits)) | (coords[i, a] + off)
        keys[i] = key
    return np.argsort(keys, kind="mergesort")


@njit(cache=True)
def _merge(coords, hi, lo, order):
    S, d = coords.shape
    m_coords = np.empty((S, d), dtype=np.int64)
    m_hi = np.empty(S, dtype=np.uint64)
    m_lo = np.empty(S, dtype=np.uint64)
    t_hi = np.uint64(0)
    t_lo = np.uint64(0)
    overflow = False
    n = -1
    for idx in range(S):
        i = order[idx]
        same = n >= 0
        if same:
            for a in range(d):
                if coords[i, a] != m_coords[n, a]:
                    same = False
                    break
        if same:
            m_hi[n], m_lo[n], over = rng.add128(m_hi[n], m_lo[n], hi[i], lo[i])
            overflow = overflow or over
        else:
            n += 1
            for a in range(d):
                m_coords[n, a] = coords[i, a]
            m_hi[n] = hi[i]
            m_lo[n] = lo[i]
        t_hi, t_lo, over = rng.add128(t_hi, t_lo, hi[i], lo[i])
        overflow = overflow or over
    n += 1
    return m_coords[:n], m_hi[:n], m_lo[:n], t_hi, t_lo, overflow


def canonical_order(coords: np.ndarray) -> np.ndarray:
    """Row order sorting sites lexicographically (first coordinate major)."""
    S, d = coords.shape
    if S == 0:
        return np.zeros(0, dtype=np.int64)
    bits = 63 // d
    reach = int(np.abs(coords).max())
    if reach < (1 << (bits - 1)) - 1:
        return _pack_order(coords, bits)
    return np.lexsort(coords.T[::-1]).astype(np.int64)


# ---------------------------------------------------------------------------
# public operations


def _stream(n_or_key):
    return n_or_key if isinstance(n_or_key, rng.CounterStream) else rng.CounterStream(int(n_or_key))


def multinomial_split(n: int, probs, stream, threshold: float = DEFAULT_GAUSSIAN_THRESHOLD):
    """Multinomial(n, probs) by sequential conditional binomials.

    ``stream`` is a :class:`rng.CounterStream` (or a key).  Returns
    ``(counts, approximated)``.
    """
    stream = _stream(stream)
    probs = [float(p) for p in probs]
    if abs(sum(probs) - 1.0) > 1e-12:
        raise ValueError("probabilities must sum to 1")
    out = [0] * len(probs)
    rem = int(n)
    tail = 1.0
    approx = False
    for i, p in enumerate(probs[:-1]):
        if rem == 0:
            break
        pc = min(1.0, p / tail) if tail > 0 else 1.0
        out[i], a = stream.binomial(rem, pc, threshold)
        approx |= a
        rem -= out[i]
        tail -= p
    out[-1] += rem
    return out, approx


def offspring_sum(n: int, law, stream, threshold: float = DEFAULT_GAUSSIAN_THRESHOLD):
    """Sum of ``n`` i.i.d. draws from ``law``; returns ``(total, approximated)``."""
    counts, approx = multinomial_split(n, law.probs, stream, threshold)
    total = sum(k * c for k, c in zip(law.support, counts))
    if total >= MAX_COUNT:
        raise OverflowError128(-1, "offspring sum exceeds 128 bits")
    return total, approx


@functools.lru_cache(maxsize=4096)
def _base(seed: int, domain: int) -> np.uint64:
    return np.uint64(rng.seed_base_ref(seed, domain))


class _Stepper:
    """Environment tables and stream bases bound once per run."""

    __slots__ = ("tab", "env_base", "dir_base", "off_base", "threshold")

    def __init__(self, env, env_seed, run_seed, threshold):
        self.tab = _tables(env)
        self.env_base = np.uint64(rng.seed_base_ref(env_seed, rng.DOMAIN_ENV))
        self.dir_base = np.uint64(rng.seed_base_ref(run_seed, rng.DOMAIN_DIRECTION))
        self.off_base = np.uint64(rng.seed_base_ref(run_seed, rng.DOMAIN_OFFSPRING))
        self.threshold = float(threshold)

    def __call__(self, state: PopulationState):
        tab = self.tab
        t = state.t
        c_coords, c_hi, c_lo, flags = _step_kernel(
            state.coords, state.hi, state.lo, np.int64(t),
            self.env_base, self.dir_base, self.off_base,
            tab.cum, tab.start, tab.length, tab.k, tab.p_cond, self.threshold,
        )
        if flags & rng.FLAG_EXACT_RANGE:
            raise OverflowError128(t + 1, "draw exceeds exact-sampler range 2**50 in strict-exact mode")
        if flags & rng.FLAG_OVERFLOW:
            raise OverflowError128(t + 1, "count exceeds 128 bits")
        approx = bool(flags & rng.FLAG_APPROX)
        if c_coords.shape[0] == 0:
            return _extinct(t + 1, state.d), approx
        order = canonical_order(c_coords)
        coords, hi, lo, t_hi, t_lo, over = _merge(c_coords, c_hi, c_lo, order)
        if over:
            raise OverflowError128(t + 1, "total exceeds 128 bits")
        total = (int(t_hi) << 64) | int(t_lo)
        return PopulationState(t + 1, coords, hi, lo, total, math.log(total)), approx


def _extinct(t: int, d: int) -> PopulationState:
    return PopulationState(t, np.zeros((0, d), np.int64), np.zeros(0, np.uint64),
                           np.zeros(0, np.uint64), 0, -math.inf)


def step(state: PopulationState, env: EnvironmentLaw, env_seed: int, run_seed: int,
         threshold: float = DEFAULT_GAUSSIAN_THRESHOLD):
    """Advance one time unit.  Returns ``(new_state, approximated)``.

    Raises :class:`OverflowError128` when a count leaves the 128-bit range, or
    when a draw is beyond the exact sampler while no gaussian threshold is set.
    """
    if state.total <= 0:
        raise ValueError("cannot step an extinct population")
    return _Stepper(env, env_seed, run_seed, threshold)(state)


def _record(state: PopulationState, log_m: float, V: float, V32: float, approx: bool):
    if state.total == 0:
        return ObservableRecord(state.t, -math.inf, -math.inf, None, None, V, 0, approx, V32)
    R, rho_star = _overlap_kernel(state.hi, state.lo, float(state.total))
    return ObservableRecord(
        state.t, state.ln_total, state.ln_total - state.t * log_m, rho_star, R,
        V + R, state.occupied, approx, V32 + R**1.5,
    )


def run(d: int, env: EnvironmentLaw, env_seed: int, run_seed: int, t_max: int,
        threshold: float = DEFAULT_GAUSSIAN_THRESHOLD, record_every: int = 1,
        keep_states: bool = False):
    """Simulate t = 1..t_max.

    Returns ``(records, status)`` or, with ``keep_states``,
    ``(records, status, states)`` where ``states`` holds every state
    including t = 0.  Records are emitted every ``record_every`` steps and at
    the last step; V is accumulated on every step.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    log_m = math.log(env_moments(env)[0])
    stepper = _Stepper(env, env_seed, run_seed, threshold)
    state = init_state(d)
    states = [state] if keep_states else None
    records = []
    V = 0.0
    V32 = 0.0
    approx = False
    status = RunStatus(Status.COMPLETED)
    for t in range(1, t_max + 1):
        try:
            state, a = stepper(state)
        except OverflowError128 as exc:
            status = RunStatus(Status.OVERFLOW, exc.t, exc.detail)
            break
        approx = approx or a
        rec = _record(state, log_m, V, V32, approx)
        V, V32 = rec.V, rec.V_three_halves
        if keep_states:
            states.append(state)
        if state.total == 0:
            records.append(rec)
            status = RunStatus(Status.EXTINCT, t)
            break
        if t % record_every == 0 or t == t_max:
            records.append(rec)
    if keep_states:
        return records, status, states
    return records, status


def final_state(d: int, env: EnvironmentLaw, env_seed: int, run_seed: int, t: int,
                threshold: float = DEFAULT_GAUSSIAN_THRESHOLD) -> PopulationState:
    """State at time ``t`` without observables (an extinct state stays empty)."""
    stepper = _Stepper(env, env_seed, run_seed, threshold)
    state = init_state(d)
    while state.t < t:
        if state.total == 0:
            return _extinct(t, d)
        state, _ = stepper(state)
    return state
