"""Command line entry point (``brwre``)."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, oracle, walkkernel
from .engine import Status
from .harness import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OVERFLOW = 3
EXIT_REJECT = 4
REJECT_LEVEL = 1e-3


def _load(path: str) -> harness.ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    return harness.parse_config(text)


def _out(args, config=None) -> Path:
    if args.out:
        return Path(args.out)
    if config is not None and config.out:
        return Path(config.out)
    return Path("out")


def cmd_diagnose(args) -> int:
    config = _load(args.config)
    report = harness.diagnose(config)
    print(harness.format_report(report))
    out = _out(args, config)
    out.mkdir(parents=True, exist_ok=True)
    (out / "diagnosis.json").write_text(json.dumps(harness._jsonable(report.to_dict()), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load(args.config)
    res = harness.run_single(config, args.index)
    out = _out(args, config)
    path = harness.write_run_csv(res, out / f"run_{res.index:05d}.csv")
    print(f"{res.status} -> {path}")
    if res.status.kind == Status.OVERFLOW:
        print(f"overflow: {res.status.detail}", file=sys.stderr)
        return EXIT_OVERFLOW
    return EXIT_OK


def cmd_ensemble(args) -> int:
    config = _load(args.config)
    out = _out(args, config)
    summary = harness.run_ensemble(config, out=out, workers=args.workers)
    for kind in args.plots or ():
        harness.emit_plots(summary, kind, out / "plots")
    print(
        f"{summary.n_runs} runs -> {out}: survival {summary.survival_fraction:.3f}, "
        f"overflow {summary.overflow_fraction:.3f}, approx {summary.approx_fraction:.3f}, "
        f"regime {summary.regime['predicted_regime']}"
    )
    return EXIT_OK


def cmd_plot(args) -> int:
    summary = harness.load_summary(args.summary)
    out = Path(args.out) if args.out else Path(args.summary).parent / "plots"
    for kind in args.kind:
        data, script = harness.emit_plots(summary, kind, out)
        print(f"{data}\n{script}")
    return EXIT_OK


def cmd_return_prob(args) -> int:
    r = walkkernel.return_probs(args.dim, args.max_l, exact=args.exact)
    for l, v in enumerate(r, start=1):
        print(f"{l}\t{v}")
    if args.dim >= 3:
        diag = walkkernel.pi_d(args.dim)
        print(f"# pi_{args.dim} = {diag.pi_d:.6f} +- {diag.error_bound:.1e} (L = {diag.truncation})")
    return EXIT_OK


def cmd_oracle_compare(args) -> int:
    config = _load(args.config)
    seed = config.master_seed if config.master_seed is not None else config.env_seed
    d, env = config.dimension, config.env
    try:
        t = min(config.t_max, 2)
        reference = oracle.enumerate_exact(d, env, t)
        label = f"exact enumeration at t={t}"
    except oracle.GuardExceeded:
        t = config.t_max
        reference = oracle.particle_samples(d, env, t, args.samples, seed + 1)
        label = f"per-particle simulator at t={t}"
    samples = oracle.engine_samples(d, env, t, args.samples, seed, config.threshold)
    distinct = len(set(samples))
    bins = oracle.coarse_bins if distinct > args.samples // 20 else None
    try:
        stat, p = oracle.compare_distributions(samples, reference, bins=bins)
    except ValueError as exc:
        print(f"comparison impossible: {exc}", file=sys.stderr)
        return EXIT_REJECT
    verdict = "accept" if p > REJECT_LEVEL else "REJECT"
    print(f"engine vs {label}: chi2 = {stat:.3f}, p = {p:.4g} ({'coarse' if bins else 'full'} bins) -> {verdict}")
    return EXIT_OK if p > REJECT_LEVEL else EXIT_REJECT


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brwre", description="Branching random walks in random environment")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("diagnose", help="moment diagnostics and predicted regime")
    p.add_argument("config")
    p.set_defaults(fn=cmd_diagnose)

    p = sub.add_parser("run", help="single trajectory to CSV")
    p.add_argument("config")
    p.add_argument("--index", type=int, default=0, help="run index within the seed split")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("ensemble", help="seed sweep with summary quantiles")
    p.add_argument("config")
    p.add_argument("--plots", nargs="*", choices=harness.PLOT_KINDS, help="also emit these plots")
    p.set_defaults(fn=cmd_ensemble)

    p = sub.add_parser("plot", help="plot data and gnuplot script from summary.json")
    p.add_argument("summary")
    p.add_argument("--kind", nargs="+", default=list(harness.PLOT_KINDS))
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("return-prob", help="return probabilities r_l of the simple random walk")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--max-l", type=int, required=True)
    p.add_argument("--exact", action="store_true", help="rational output")
    p.set_defaults(fn=cmd_return_prob)

    p = sub.add_parser("oracle-compare", help="chi-square check of the engine against the oracles")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=10**4)
    p.set_defaults(fn=cmd_oracle_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
