"""Run every config in configs/ (or the ones given) and write outputs plus plot scripts.

    python3 scripts/run_ensembles.py [configs/e3_d1_localized.toml ...] [--out-root out]
"""

import argparse
import dataclasses
import time
from pathlib import Path

from brwre import harness

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("configs", nargs="*", type=Path)
    ap.add_argument("--out-root", type=Path, default=ROOT / "out")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()
    paths = args.configs or sorted((ROOT / "configs").glob("*.toml"))
    for path in paths:
        cfg = harness.load_config(path)
        out = args.out_root / path.stem
        if args.workers:
            cfg = dataclasses.replace(cfg, workers=args.workers)
        t = time.perf_counter()
        summary = harness.run_ensemble(cfg, out=out)
        for kind in harness.PLOT_KINDS:
            harness.emit_plots(summary, kind, out)
        print(f"{path.name}: {summary.n_runs} runs, survival {summary.survival_fraction:.2f}, "
              f"overflow {summary.overflow_fraction:.2f}, {time.perf_counter() - t:.1f}s -> {out}")


if __name__ == "__main__":
    main()
