"""T^{d/2} R_T medians over time for the E3 ensemble in d = 3.

    python3 scripts/overlap_scaling.py [--t-max 64] [--runs 200]

Longer horizons show where the 1/N_T counting floor stops dominating R_T.
Cost grows quickly past T = 100.
"""

import argparse
import dataclasses
from pathlib import Path

import numpy as np

from brwre import harness

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--t-max", type=int, default=64)
    ap.add_argument("--runs", type=int, default=200)
    args = ap.parse_args()
    cfg = harness.load_config(ROOT / "configs" / "e3_d3_delocalized.toml")
    cfg = dataclasses.replace(cfg, out=None, t_max=args.t_max, n_runs=args.runs)
    s = harness.run_ensemble(cfg)
    print("T\tmedian T^1.5 R_T\tmedian 1/(N_T R_T)")
    T = 8
    while T <= args.t_max:
        recs = [next(x for x in r.records if x.t == T) for r in s.runs]
        scaled = np.median([T**1.5 * x.overlap for x in recs])
        floor = np.median([1 / (np.exp(x.ln_N) * x.overlap) for x in recs])
        print(f"{T}\t{scaled:.3f}\t{floor:.3f}")
        T *= 2


if __name__ == "__main__":
    main()
