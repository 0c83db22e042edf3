"""Simple random walk on Z^d: step kernel, return probabilities, pi_d.

``r_l = P_{2l}(0, 0)`` is computed by convolving the one-step kernel on the
box ``[-l, l]^d`` and using ``P_{2l}(0, 0) = sum_y P_l(0, y)^2`` (SRW is
symmetric).  The walk cannot leave that box in ``l`` steps, so there is no
truncation error.  Exact mode keeps integer path counts scaled by
``(2d)^l``; float mode keeps probabilities in float64.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

BOX_GUARD = 10**8
DEFAULT_BOX = 10**7
EPSILON_GRID = (1.0, 0.5, 0.1, 0.01)
SMALL_EPSILON_GRID = (0.1, 0.01)


class ResourceGuardError(RuntimeError):
    pass


@dataclass(frozen=True)
class WalkDiagnostics:
    d: int
    r: tuple[float, ...]
    pi_d: float
    truncation: int
    tail_estimate: float
    error_bound: float


def step_kernel(d: int) -> dict[tuple[int, ...], float]:
    """Unit-neighbour offsets of Z^d, each with probability 1/(2d)."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    out = {}
    for axis in range(d):
        for sign in (1, -1):
            e = [0] * d
            e[axis] = sign
            out[tuple(e)] = 1.0 / (2 * d)
    return out


def _check_box(d: int, l: int) -> None:
    if (2 * l + 1) ** d > BOX_GUARD:
        raise ResourceGuardError(
            f"(2l+1)^d = {(2 * l + 1) ** d} exceeds {BOX_GUARD}; use the l^(-d/2) tail "
            f"asymptotics (pi_d with a smaller truncation) instead"
        )


def _walk_distributions(d: int, L: int, exact: bool):
    """Yield ``P_l(0, .)`` (or path counts) on ``[-L, L]^d`` for l = 1..L."""
    _check_box(d, L)
    shape = (2 * L + 1,) * d
    dtype = object if exact else np.float64
    cur = np.zeros(shape, dtype=dtype)
    cur[(L,) * d] = 1 if exact else 1.0
    scale = 1.0 / (2 * d)
    for n in range(1, L + 1):
        # after n steps the support is inside [-n, n]^d
        inner = (slice(L - n + 1, L + n),) * d
        outer = (slice(L - n, L + n + 1),) * d
        src = cur[inner]
        nxt = np.zeros(shape, dtype=dtype)
        dst = nxt[outer]
        for axis in range(d):
            plus = [slice(1, -1)] * d
            minus = [slice(1, -1)] * d
            plus[axis] = slice(2, None)
            minus[axis] = slice(0, -2)
            dst[tuple(plus)] += src
            dst[tuple(minus)] += src
        if not exact:
            dst *= scale
        cur = nxt
        yield cur


def return_probs(d: int, L: int, exact: bool = False) -> list:
    """``[r_1, ..., r_L]``; Fractions when ``exact``, floats otherwise."""
    if d < 1 or L < 1:
        raise ValueError("need d >= 1 and L >= 1")
    out = []
    for l, dist in enumerate(_walk_distributions(d, L, exact), start=1):
        if exact:
            closed = sum(int(v) * int(v) for v in dist.flat if v)
            out.append(Fraction(closed, (2 * d) ** (2 * l)))
        else:
            out.append(float(np.sum(dist * dist)))
    return out


def return_prob(d: int, l: int, exact: bool = False):
    """``r_l = P_{2l}(0, 0)`` for the simple random walk on Z^d."""
    return return_probs(d, l, exact=exact)[-1]


def _tail_fit(r: np.ndarray, d: int, n_fit: int = 10):
    """Fit log r_l = log c - (d/2) log l on the last ``n_fit`` terms.

    Returns (c, residual rms).  The slope is pinned to -d/2.
    """
    ls = np.arange(len(r) - n_fit + 1, len(r) + 1, dtype=float)
    y = np.log(r[-n_fit:]) + 0.5 * d * np.log(ls)
    log_c = float(np.mean(y))
    resid = float(np.sqrt(np.mean((y - log_c) ** 2)))
    return math.exp(log_c), resid


def _hurwitz_tail(s: float, start: int) -> float:
    """``sum_{l >= start} l^{-s}`` via Euler-Maclaurin (s > 1)."""
    a = float(start)
    return a ** (1 - s) / (s - 1) + 0.5 * a**-s + s * a ** (-s - 1) / 12.0


def max_truncation(d: int, cap: int = 64, budget: int = DEFAULT_BOX) -> int:
    """Largest L <= cap whose box (2L+1)^d fits in ``budget`` cells."""
    L = cap
    while L > 1 and (2 * L + 1) ** d > budget:
        L -= 1
    return L


@functools.lru_cache(maxsize=32)
def pi_d(d: int, L: int | None = None, tol: float = 1e-3) -> WalkDiagnostics:
    """Return probability of SRW on Z^d.

    d = 1, 2: the series of return probabilities diverges, pi_d = 1.
    d >= 3: ``S = sum_{l<=L} r_l + c * sum_{l>L} l^{-d/2}`` and
    ``pi_d = S / (1 + S)``.  The error bound combines the tail-fit residual
    and the drift of the fitted constant between halves of the fit window.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if d <= 2:
        return WalkDiagnostics(d, (), 1.0, 0, math.inf, 0.0)
    if L is None:
        L = 64 if d == 3 else max(max_truncation(d), max_truncation(d, budget=BOX_GUARD) if d > 6 else 0)
    if L < 4:
        raise ValueError("truncation L must be >= 4 for the tail fit")
    _check_box(d, L)
    r = np.array(return_probs(d, L))
    n_fit = max(2, min(10, L // 2))
    c, resid = _tail_fit(r, d, n_fit)
    tail = c * _hurwitz_tail(d / 2, L + 1)
    c_early, _ = _tail_fit(r[: -max(1, n_fit // 2)], d, n_fit)
    tail_spread = abs(c - c_early) * _hurwitz_tail(d / 2, L + 1) + resid * tail
    S = float(np.sum(r)) + tail
    pi = S / (1 + S)
    # dpi/dS = 1/(1+S)^2
    err = tail_spread / (1 + S) ** 2
    if err > tol:
        warnings.warn(f"pi_d error bound {err:.2e} exceeds tol {tol:.1e}; increase L")
    return WalkDiagnostics(d, tuple(r.tolist()), pi, L, tail, err)


def t0_epsilon(alpha: float, d: int, L: int = 2000):
    """Smallest t0 <= L and largest grid epsilon with sum_{s<=t0} r_s >= (1+eps)/(alpha-1).

    For d = 1, 2 epsilon is fixed at 1 (the series diverges, so only t0
    matters).  For d >= 3 only small epsilons {0.1, 0.01} qualify.  Returns
    ``None`` when no pair exists within the truncation.
    """
    if alpha <= 1:
        raise ValueError("t0/epsilon condition needs alpha > 1")
    grid = (1.0,) if d <= 2 else SMALL_EPSILON_GRID
    need_min = (1 + min(grid)) / (alpha - 1)
    if d >= 3:
        pi = pi_d(d).pi_d
        if need_min > pi / (1 - pi):
            return None
    if d <= 2:
        # r_l = (C(2l, l) / 4^l)^d, by the factorization of the 2d walk into two 1d walks
        l = np.arange(1, L + 1, dtype=float)
        r1 = np.cumprod((2 * l - 1) / (2 * l))
        sums = np.cumsum(r1**d)
        hit = np.nonzero(sums >= need_min)[0]
        return (1.0, int(hit[0]) + 1) if hit.size else None
    partial = None
    span = min(16, L)
    while partial is None:
        if (2 * span + 1) ** d > BOX_GUARD:
            return None
        sums = np.cumsum(return_probs(d, span))
        hit = np.nonzero(sums >= need_min)[0]
        if hit.size:
            t0 = int(hit[0]) + 1
            partial = float(sums[hit[0]])
        elif span >= L:
            return None
        else:
            span = min(2 * span, L)
    for eps in grid:
        if partial >= (1 + eps) / (alpha - 1):
            return eps, t0
    return None
