"""Experiment configuration, single runs, ensembles, summaries and plot scripts.

Config files are TOML: flat typed keys plus one ``[[env]]`` table per
mixture component::

    dimension = 1
    t_max = 100
    master_seed = 1
    n_runs = 10

    [[env]]
    weight = 0.5
    pmf = { 1 = 1.0 }

    [[env]]
    weight = 0.5
    pmf = { 3 = 1.0 }

Seed splitting is positional: run ``i`` (counting from ``run_offset``) uses
``env_seed = derive_seed(master_seed, i, 0)`` and
``run_seed = derive_seed(master_seed, i, 1)``.  An ensemble of ``a + b``
runs is therefore the concatenation of one with ``n_runs = a`` and one with
``n_runs = b, run_offset = a``.
"""

from __future__ import annotations

import csv
import dataclasses
import difflib
import io
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:  # python < 3.11
    import tomli

from . import rng
from .engine import DEFAULT_GAUSSIAN_THRESHOLD, RunStatus, Status, run as engine_run
from .envmodel import EnvironmentLaw, InvalidLawError, OffspringLaw, RegimeReport, classify_regime, DEFAULT_K_MAX
from .observables import CSV_FIELDS, ObservableRecord
from .walkkernel import t0_epsilon

QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)
SUMMARY_FIELDS = ("ln_N", "ln_Nbar", "rho_star", "overlap", "V", "occupied", "scaling", "locratio", "growth")
PLOT_KINDS = ("overlap", "scaling", "locratio", "growth")
RUNS_INDEX_FIELDS = ("index", "env_seed", "run_seed", "status", "t_end", "approx", "detail")

_TOP_KEYS = {
    "dimension", "t_max", "master_seed", "n_runs", "run_offset", "env_seed", "run_seed",
    "mode", "gaussian_threshold", "record_every", "out", "workers", "k_max", "env",
}
_ENV_KEYS = {"weight", "pmf"}


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = f" (line {line})" if line else ""
        super().__init__(f"{message}{where}")


@dataclass(frozen=True)
class ExperimentConfig:
    dimension: int
    t_max: int
    env: EnvironmentLaw
    master_seed: int | None = None
    n_runs: int = 1
    run_offset: int = 0
    env_seed: int | None = None
    run_seed: int | None = None
    mode: str = "gaussian"
    gaussian_threshold: float = DEFAULT_GAUSSIAN_THRESHOLD
    record_every: int = 1
    out: str | None = None
    workers: int = 1

    @property
    def threshold(self) -> float:
        return math.inf if self.mode == "exact" else self.gaussian_threshold

    def seeds(self, i: int) -> tuple[int, int]:
        """(env_seed, run_seed) of the i-th run of this config."""
        if self.master_seed is None:
            return self.env_seed, self.run_seed
        idx = self.run_offset + i
        return rng.derive_seed(self.master_seed, idx, 0), rng.derive_seed(self.master_seed, idx, 1)


# ---------------------------------------------------------------------------
# parsing


def _line_of(text: str, key: str, occurrence: int = 0) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=|^\s*\[\[?\s*{re.escape(key)}\s*\]\]?")
    seen = 0
    for no, line in enumerate(text.splitlines(), start=1):
        if pat.search(line):
            if seen == occurrence:
                return no
            seen += 1
    return None


def _env_block_line(text: str, i: int) -> int | None:
    seen = 0
    for no, line in enumerate(text.splitlines(), start=1):
        if re.match(r"^\s*\[\[\s*env\s*\]\]", line):
            if seen == i:
                return no
            seen += 1
    return None


def _unknown(key: str, allowed, text: str, where: str = "") -> ConfigError:
    close = difflib.get_close_matches(key, sorted(allowed), n=1)
    hint = f"; did you mean {close[0]!r}?" if close else ""
    return ConfigError(f"unknown key {key!r}{where}{hint}", field=key, line=_line_of(text, key))


def _int(raw: dict, key: str, text: str, lo: int | None = None, default=None, required=False):
    if key not in raw:
        if required:
            raise ConfigError(f"missing required key {key!r}", field=key)
        return default
    v = raw[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer, got {v!r}", field=key, line=_line_of(text, key))
    if lo is not None and v < lo:
        raise ConfigError(f"{key} must be >= {lo}, got {v}", field=key, line=_line_of(text, key))
    return v


def _parse_env(blocks, text: str, k_max: int) -> EnvironmentLaw:
    if not isinstance(blocks, list) or not blocks:
        raise ConfigError("env must be one or more [[env]] tables", field="env", line=_line_of(text, "env"))
    comps = []
    for i, block in enumerate(blocks):
        line = _env_block_line(text, i)
        if not isinstance(block, dict):
            raise ConfigError(f"env[{i}] must be a table", field="env", line=line)
        for key in block:
            if key not in _ENV_KEYS:
                err = _unknown(key, _ENV_KEYS, text, where=f" in env block {i}")
                err.field = f"env[{i}].{key}"
                raise err
        if "pmf" not in block:
            raise ConfigError(f"env block {i} needs a pmf", field=f"env[{i}].pmf", line=line)
        weight = block.get("weight", 1.0 if len(blocks) == 1 else None)
        if weight is None:
            raise ConfigError(f"env block {i} needs a weight", field=f"env[{i}].weight", line=line)
        pmf_raw = block["pmf"]
        if not isinstance(pmf_raw, dict):
            raise ConfigError(f"env block {i}: pmf must be an inline table {{k = p}}", field=f"env[{i}].pmf", line=line)
        try:
            pmf = {int(k): v for k, v in pmf_raw.items()}
            law = OffspringLaw.from_pmf(pmf, k_max=k_max)
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            raise ConfigError(f"env block {i}: {exc}", field=f"env[{i}].pmf", line=line) from None
        comps.append((weight, law))
    try:
        return EnvironmentLaw.mixture(comps)
    except (InvalidLawError, ValueError, TypeError, ZeroDivisionError) as exc:
        raise ConfigError(f"env block: {exc}", field="env", line=_env_block_line(text, 0)) from None


def parse_config(text: str) -> ExperimentConfig:
    """Strict parse; every field is validated before anything runs."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from None
    for key in raw:
        if key not in _TOP_KEYS:
            raise _unknown(key, _TOP_KEYS, text)
    if "env" not in raw:
        raise ConfigError("missing [[env]] block", field="env")

    d = _int(raw, "dimension", text, lo=1, required=True)
    t_max = _int(raw, "t_max", text, lo=1, required=True)
    k_max = _int(raw, "k_max", text, lo=1, default=DEFAULT_K_MAX)
    env = _parse_env(raw["env"], text, k_max)

    master = _int(raw, "master_seed", text, lo=0)
    env_seed = _int(raw, "env_seed", text, lo=0)
    run_seed = _int(raw, "run_seed", text, lo=0)
    n_runs = _int(raw, "n_runs", text, lo=1, default=1)
    run_offset = _int(raw, "run_offset", text, lo=0, default=0)
    if master is None:
        if env_seed is None or run_seed is None:
            raise ConfigError("give either master_seed or both env_seed and run_seed", field="master_seed")
        if n_runs != 1 or run_offset:
            raise ConfigError("explicit env_seed/run_seed describe a single run; use master_seed for ensembles",
                              field="n_runs", line=_line_of(text, "n_runs"))
    elif env_seed is not None or run_seed is not None:
        raise ConfigError("master_seed cannot be combined with env_seed/run_seed", field="master_seed",
                          line=_line_of(text, "master_seed"))

    mode = raw.get("mode", "gaussian")
    if mode not in ("exact", "gaussian"):
        raise ConfigError(f"mode must be 'exact' or 'gaussian', got {mode!r}", field="mode", line=_line_of(text, "mode"))
    thr = raw.get("gaussian_threshold", DEFAULT_GAUSSIAN_THRESHOLD)
    if isinstance(thr, bool) or not isinstance(thr, (int, float)) or not 1 <= thr <= rng.EXACT_MAX_N:
        raise ConfigError(f"gaussian_threshold must be a number in [1, 2^50], got {thr!r}",
                          field="gaussian_threshold", line=_line_of(text, "gaussian_threshold"))
    if mode == "exact" and "gaussian_threshold" in raw:
        raise ConfigError("gaussian_threshold has no effect in exact mode", field="gaussian_threshold",
                          line=_line_of(text, "gaussian_threshold"))

    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out must be a path string", field="out", line=_line_of(text, "out"))

    return ExperimentConfig(
        dimension=d,
        t_max=t_max,
        env=env,
        master_seed=master,
        n_runs=n_runs,
        run_offset=run_offset,
        env_seed=env_seed,
        run_seed=run_seed,
        mode=mode,
        gaussian_threshold=float(thr),
        record_every=_int(raw, "record_every", text, lo=1, default=1),
        out=out,
        workers=_int(raw, "workers", text, lo=1, default=1),
    )


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# diagnosis


def diagnose(config: ExperimentConfig) -> RegimeReport:
    report = classify_regime(config.env, config.dimension)
    if report.alpha > 1:
        report = dataclasses.replace(report, t0_epsilon=t0_epsilon(report.alpha, config.dimension))
    return report


def format_report(report: RegimeReport) -> str:
    rows = []
    for k, v in report.to_dict().items():
        if isinstance(v, float):
            v = f"{v:.6g}"
        rows.append(f"{k:>18}: {v}")
    return "\n".join(rows)


# ---------------------------------------------------------------------------
# runs


@dataclass(frozen=True)
class RunResult:
    index: int
    env_seed: int
    run_seed: int
    records: list
    status: RunStatus

    @property
    def approx(self) -> bool:
        return any(r.approx_flag for r in self.records)


def _run_one(args) -> RunResult:
    config, i = args
    env_seed, run_seed = config.seeds(i)
    try:
        records, status = engine_run(
            config.dimension, config.env, env_seed, run_seed, config.t_max,
            threshold=config.threshold, record_every=config.record_every,
        )
    except Exception as exc:  # a failed run must not take the ensemble down
        return RunResult(config.run_offset + i, env_seed, run_seed, [], RunStatus(Status.OVERFLOW, None, repr(exc)))
    return RunResult(config.run_offset + i, env_seed, run_seed, records, status)


def run_single(config: ExperimentConfig, index: int = 0) -> RunResult:
    return _run_one((config, index))


def records_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for rec in records:
        w.writerow(rec.csv_row())
    return buf.getvalue()


def read_records_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def write_run_csv(result: RunResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(records_csv(result.records))
    return path


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class EnsembleSummary:
    dimension: int
    n_runs: int
    times: list[int]
    levels: tuple[float, ...]
    # field -> per-time list of quantile vectors (None where no run contributes)
    quantiles: dict[str, list]
    # field -> per-time number of contributing runs
    counts: dict[str, list]
    survival_fraction: float
    overflow_fraction: float
    approx_fraction: float
    regime: dict
    c0: float | None
    runs: list[RunResult] = field(default_factory=list, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "runs"}
        out["levels"] = list(self.levels)
        out["statuses"] = [
            {"index": r.index, "status": r.status.kind.value, "t": r.status.t} for r in self.runs
        ]
        return out

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True, allow_nan=False)

    def series(self, name: str, level: float = 0.5) -> list[tuple[int, float | None]]:
        j = self.levels.index(level)
        return [(t, None if q is None else q[j]) for t, q in zip(self.times, self.quantiles[name])]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):
        return obj.value
    return obj


def _derived(rec: ObservableRecord, d: int) -> dict[str, float | None]:
    alive = not rec.extinct
    loc = None
    if alive and rec.ln_Nbar < 0:
        loc = (rec.V - rec.overlap) / -rec.ln_Nbar
    return {
        "ln_N": rec.ln_N if alive else None,
        "ln_Nbar": rec.ln_Nbar if alive else None,
        "rho_star": rec.rho_star,
        "overlap": rec.overlap,
        "V": rec.V if alive else None,
        "occupied": float(rec.occupied) if alive else None,
        "scaling": rec.t ** (d / 2) * rec.overlap if alive else None,
        "locratio": loc,
        "growth": rec.ln_N / rec.t if alive and rec.t > 0 else None,
    }


def summarize(results: list[RunResult], d: int, regime: RegimeReport) -> EnsembleSummary:
    per_t: dict[int, dict[str, list[float]]] = {}
    for res in results:
        for rec in res.records:
            slot = per_t.setdefault(rec.t, {k: [] for k in SUMMARY_FIELDS})
            for k, v in _derived(rec, d).items():
                if v is not None and math.isfinite(v):
                    slot[k].append(v)
    times = sorted(per_t)
    quantiles = {k: [] for k in SUMMARY_FIELDS}
    counts = {k: [] for k in SUMMARY_FIELDS}
    for t in times:
        for k in SUMMARY_FIELDS:
            vals = per_t[t][k]
            counts[k].append(len(vals))
            quantiles[k].append(
                [float(q) for q in np.quantile(np.asarray(vals), QUANTILE_LEVELS)] if vals else None
            )
    n = len(results)
    kinds = [r.status.kind for r in results]
    return EnsembleSummary(
        dimension=d,
        n_runs=n,
        times=times,
        levels=QUANTILE_LEVELS,
        quantiles=quantiles,
        counts=counts,
        survival_fraction=sum(k != Status.EXTINCT for k in kinds) / n if n else 0.0,
        overflow_fraction=sum(k == Status.OVERFLOW for k in kinds) / n if n else 0.0,
        approx_fraction=sum(r.approx for r in results) / n if n else 0.0,
        regime=regime.to_dict(),
        c0=regime.c0,
        runs=list(results),
    )


def run_ensemble(config: ExperimentConfig, out: str | os.PathLike | None = None,
                 workers: int | None = None) -> EnsembleSummary:
    """Run ``config.n_runs`` trajectories, write per-run CSVs and summary.json
    under ``out`` (or ``config.out``; nothing is written when both are None)."""
    workers = workers or config.workers
    jobs = [(config, i) for i in range(config.n_runs)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_run_one(j) for j in jobs]
    summary = summarize(results, config.dimension, diagnose(config))
    out = out if out is not None else config.out
    if out is not None:
        write_outputs(summary, out)
    return summary


def write_outputs(summary: EnsembleSummary, out) -> Path:
    out = Path(out)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    index = io.StringIO()
    w = csv.writer(index, lineterminator="\n")
    w.writerow(RUNS_INDEX_FIELDS)
    for res in summary.runs:
        write_run_csv(res, out / "runs" / f"run_{res.index:05d}.csv")
        w.writerow([res.index, res.env_seed, res.run_seed, res.status.kind.value,
                    "" if res.status.t is None else res.status.t, int(res.approx), res.status.detail or ""])
    (out / "runs.csv").write_text(index.getvalue())
    (out / "summary.json").write_text(summary.to_json())
    return out


def load_summary(path) -> EnsembleSummary:
    raw = json.loads(Path(path).read_text())
    raw.pop("statuses", None)
    raw["levels"] = tuple(raw["levels"])
    return EnsembleSummary(**raw)


# ---------------------------------------------------------------------------
# plots

_PLOT_META = {
    "overlap": ("overlap", "R_t", True),
    "scaling": ("scaling", "t^{d/2} R_t", True),
    "locratio": ("locratio", "V_{t-1} / (-ln Nbar_t)", False),
    "growth": ("growth", "ln(N_t) / t", False),
}


def emit_plots(summary: EnsembleSummary, kind: str, out) -> tuple[Path, Path]:
    """Write ``<kind>.tsv`` (t and the quantile columns) and ``<kind>.gp``."""
    if kind not in _PLOT_META:
        raise ValueError(f"unknown plot kind {kind!r}; valid kinds: {{{', '.join(PLOT_KINDS)}}}")
    name, ylabel, logy = _PLOT_META[kind]
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data = out / f"{kind}.tsv"
    script = out / f"{kind}.gp"

    cols = ["t"] + [f"q{int(round(100 * q)):02d}" for q in summary.levels]
    lines = ["# " + "\t".join(cols)]
    for t, q in zip(summary.times, summary.quantiles[name]):
        vals = ["NaN"] * len(summary.levels) if q is None else [repr(float(v)) for v in q]
        lines.append("\t".join([str(t)] + vals))
    data.write_text("\n".join(lines) + "\n")

    gp = [
        "set terminal pngcairo size 900,600",
        f"set output '{kind}.png'",
        "set datafile separator '\\t'",
        "set datafile missing 'NaN'",
        "set xlabel 't'",
        f"set ylabel '{ylabel}'",
        "set key top right",
    ]
    if logy:
        gp.append("set logscale y")
    plot = [
        f"'{data.name}' using 1:2:6 with filledcurves lc rgb '#dddddd' title '5-95%'",
        "'' using 1:3:5 with filledcurves lc rgb '#aaaaaa' title '25-75%'",
        "'' using 1:4 with lines lw 2 lc rgb '#000000' title 'median'",
    ]
    if kind == "growth" and summary.c0 is not None:
        gp.append(f"c0 = {summary.c0!r}")
        plot.append("c0 with lines dt 2 lc rgb '#cc0000' title sprintf('c0 = %.4f', c0)")
    gp.append("plot " + ", \\\n     ".join(plot))
    script.write_text("\n".join(gp) + "\n")
    return data, script
