"""Densities, replica overlap and the per-step statistics built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np
from numba import njit

CSV_FIELDS = ("t", "ln_N", "ln_Nbar", "rho_star", "overlap", "V", "occupied", "approx")


class ExtinctError(ValueError):
    pass


@dataclass(frozen=True)
class ObservableRecord:
    t: int
    ln_N: float
    ln_Nbar: float
    rho_star: float | None
    overlap: float | None
    V: float
    occupied: int
    approx_flag: bool
    # cumulative sum of overlap**1.5, same window as V
    V_three_halves: float = 0.0

    @property
    def extinct(self) -> bool:
        return self.overlap is None

    def csv_row(self) -> list[str]:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return [
            str(self.t), fmt(self.ln_N), fmt(self.ln_Nbar), fmt(self.rho_star),
            fmt(self.overlap), fmt(self.V), str(self.occupied), str(int(self.approx_flag)),
        ]

    def to_dict(self) -> dict:
        return asdict(self)


@njit(cache=True)
def _overlap_kernel(hi, lo, total):
    n = hi.shape[0]
    rho = np.empty(n)
    for i in range(n):
        rho[i] = (np.float64(hi[i]) * 18446744073709551616.0 + np.float64(lo[i])) / total
    rho = np.sort(rho)[::-1]
    acc = 0.0
    for i in range(n):
        acc += rho[i] * rho[i]
    return acc, rho[0]


def densities(state) -> dict[tuple[int, ...], float]:
    """``rho_{t,x} = N_{t,x} / N_t`` for every occupied site."""
    if state.total == 0:
        raise ExtinctError("densities undefined for an extinct population")
    total = state.total
    return {x: n / total for x, n in state.counts.items()}


def overlap_and_max(state) -> tuple[float, float]:
    """(R_t, rho*_t): sum of squared densities, summed largest first, and the max."""
    if state.total == 0:
        raise ExtinctError("overlap undefined for an extinct population")
    return _overlap_kernel(state.hi, state.lo, float(state.total))


def log_nbar(ln_N: float, t: int, m: float) -> float:
    if m <= 0:
        raise ValueError("m must be positive")
    return ln_N - t * math.log(m)


def localization_ratio(series: Sequence[ObservableRecord]) -> list[float | None]:
    """``V_{t-1} / (-ln Nbar_t)`` per record; None where ln Nbar_t >= 0 or extinct."""
    out = []
    for rec in series:
        if rec.extinct or not rec.ln_Nbar < 0:
            out.append(None)
        else:
            out.append((rec.V - rec.overlap) / -rec.ln_Nbar)
    return out


def overlap_scaling(series: Sequence[ObservableRecord], d: int) -> list[tuple[int, float | None]]:
    """``(t, t^{d/2} R_t)``."""
    return [
        (rec.t, None if rec.extinct else rec.t ** (d / 2) * rec.overlap) for rec in series
    ]


def growth_rate(series: Sequence[ObservableRecord]) -> list[tuple[int, float]]:
    """``(t, ln N_t / t)`` for t >= 1."""
    return [(rec.t, rec.ln_N / rec.t) for rec in series if rec.t >= 1]


def overlap_power_ratio(series: Sequence[ObservableRecord]) -> float:
    """``sum_s R_s^{3/2} / sum_s R_s`` at the last record with a defined overlap."""
    alive = [rec for rec in series if not rec.extinct]
    if not alive or alive[-1].V <= 0:
        raise ValueError("overlap_power_ratio needs V_t > 0")
    last = alive[-1]
    return last.V_three_halves / last.V


def power_ratio_from_overlaps(overlaps: Sequence[float]) -> float:
    r = np.asarray(overlaps, dtype=float)
    return float(np.sum(r**1.5) / np.sum(r))
