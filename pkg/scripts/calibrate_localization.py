"""Calibration run for the localization-persistence anchors.

Runs the E3, d = 1 ensemble to t = 500 and prints the quantiles of
max_{t in [250, 500]} R_t and of the overlap power ratio.  The anchors in
tests/test_acceptance.py were fixed from this output.
"""

import dataclasses
from pathlib import Path

import numpy as np

from brwre import harness
from brwre.observables import localization_ratio, overlap_power_ratio

ROOT = Path(__file__).resolve().parent.parent


def main():
    cfg = dataclasses.replace(harness.load_config(ROOT / "configs" / "e3_d1_localized.toml"), out=None)
    s = harness.run_ensemble(cfg)
    max_r, power, band = [], [], []
    for r in s.runs:
        max_r.append(max(x.overlap for x in r.records if 250 <= x.t <= 500))
        power.append(overlap_power_ratio(r.records))
        ratio = dict(zip((x.t for x in r.records), localization_ratio(r.records)))
        a, b = ratio[250], ratio[500]
        band.append(max(a, b) / min(a, b) if a and b else np.nan)
    q = (0, 0.05, 0.5, 0.95)
    print("max R [250,500] quantiles", np.quantile(max_r, q).round(4))
    print("power ratio quantiles    ", np.quantile(power, q).round(4))
    band = np.array(band)
    print(f"loc-ratio band: within 3 in {np.mean(band <= 3):.2f}, undefined {np.isnan(band).mean():.2f}")


if __name__ == "__main__":
    main()
