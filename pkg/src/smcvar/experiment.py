"""Replicated filter runs with per-replication CSV rows and an aggregate JSON summary.

Seeding
-------
Replication ``rep`` of a study with master seed ``S`` uses the seed

    derive_seed(S, rep) = SeedSequence([S, rep]).generate_state(1, uint64)[0]

which is written to the CSV so a single row can be replayed.  Inside a
replication, simulated data use ``SeedSequence([seed, 0])`` and the filter
uses ``SeedSequence([seed, 1])``, so the data of replication ``rep`` do not
depend on the filter settings and different filter variants see the same
data.

The aggregate JSON is computed from the CSV rows alone (see
:func:`aggregate_rows`), so anyone holding the CSV can recompute it.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import importlib.util
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import benchmarks, oracle
from .engine import run_filter
from .errors import InvalidConfigurationError, SMCError
from .model import ModelSpec
from .resampling import Always, Never, Scheme, parse_policy

SCHEMA_VERSION = 1
JOBS_ENV = "SMCVAR_JOBS"
MODELS = ("changepoint", "bearings", "generic", "oracle")


def derive_seed(master: int, rep: int) -> int:
    """Seed of replication ``rep``; a fixed hash of ``(master, rep)``."""
    if master < 0 or rep < 0:
        raise InvalidConfigurationError("seeds and replication indices must be nonnegative")
    return int(np.random.SeedSequence([master, rep]).generate_state(1, np.uint64)[0])


def default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV, "").strip()
    if not raw:
        return 1
    try:
        jobs = int(raw)
    except ValueError:
        raise InvalidConfigurationError(f"{JOBS_ENV}={raw!r} is not an integer") from None
    return max(1, jobs)


@dataclass
class ExperimentConfig:
    """Everything that determines a study.  Field names double as config-file keys.

    ``k = 0`` disables sample splitting; ``k >= 2`` runs the filter on ``k``
    independently resampled groups.  ``truth`` is ``"oracle"`` (exact value
    where an oracle exists), ``"none"``, or a number.  ``data`` pins the
    observations to a CSV written by ``gen-data``; without it every
    replication simulates fresh data.
    """

    model: str = "changepoint"
    m: int = 1000
    T: int | None = None
    scheme: str = "multinomial"
    policy: str = "always"
    k: int = 0
    gb: bool = True
    replications: int = 1
    seed: int = 0
    jobs: int | None = None
    out_csv: str | None = None
    out_json: str | None = None
    truth: str = "oracle"
    timing: bool = False
    data: str | None = None
    # change-point
    rho: float = 0.01
    xi: float = 1.0
    proposal: str = "conditional"
    # bearings
    first_stage: str = "informed"
    # generic: "file.py:factory"; factory(T, seed) -> ModelSpec or (ModelSpec, truth)
    factory: str | None = None
    # oracle: JSON file with DiscreteHMM tables, or "two-state"
    tables: str = "two-state"
    observations: str = "0,1,1"

    def validate(self) -> "ExperimentConfig":
        if self.model not in MODELS:
            raise InvalidConfigurationError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.m < 1:
            raise InvalidConfigurationError("m must be positive")
        if self.T is not None and self.T < 1:
            raise InvalidConfigurationError("T must be positive")
        if self.replications < 1:
            raise InvalidConfigurationError("replications must be at least 1")
        if self.k == 1 or self.k < 0 or self.k > self.m:
            raise InvalidConfigurationError("k must be 0 (off) or between 2 and m")
        if self.seed < 0:
            raise InvalidConfigurationError("seed must be nonnegative")
        Scheme.parse(self.scheme)
        parse_policy(self.policy)
        if self.model in ("changepoint", "bearings") and self.T is None and self.data is None:
            raise InvalidConfigurationError("T is required unless data is given")
        if self.model == "generic" and not self.factory:
            raise InvalidConfigurationError("the generic model needs factory = file.py:callable")
        if self.data is not None and not Path(self.data).is_file():
            raise InvalidConfigurationError(f"data file {self.data} not found")
        for out in (self.out_csv, self.out_json):
            if out is not None:
                parent = Path(out).resolve().parent
                if not parent.is_dir() or not os.access(parent, os.W_OK):
                    raise InvalidConfigurationError(f"cannot write to {out}")
        if self.truth not in ("oracle", "none"):
            try:
                float(self.truth)
            except ValueError:
                raise InvalidConfigurationError(f"truth must be oracle, none or a number") from None
        return self

    @property
    def n_jobs(self) -> int:
        return default_jobs() if self.jobs is None else max(1, int(self.jobs))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(name: str, raw: str):
    fld = {f.name: f for f in dataclasses.fields(ExperimentConfig)}[name]
    kind = str(fld.type)
    text = raw.strip()
    if text.lower() in ("", "none", "null") and "None" in kind:
        return None
    if kind.startswith("bool"):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise InvalidConfigurationError(f"{name} expects a boolean, got {raw!r}")
    try:
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise InvalidConfigurationError(f"{name} expects a number, got {raw!r}") from None
    return text


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a ``key = value`` file (``#`` comments allowed) and apply overrides.

    Unknown keys are an error.  Values in ``overrides`` that are ``None`` are
    ignored, so argparse namespaces can be passed through directly.
    """
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.optionxform = str
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise InvalidConfigurationError(f"cannot read config {path}: {err}") from None
        parser.read_string("[experiment]\n" + text)
        for key, raw in parser["experiment"].items():
            key = key.replace("-", "_")
            if key not in names:
                raise InvalidConfigurationError(f"unknown config key {key!r}")
            values[key] = _coerce(key, raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in names:
            raise InvalidConfigurationError(f"unknown config key {key!r}")
        values[key] = _coerce(key, value) if isinstance(value, str) else value
    return ExperimentConfig(**values).validate()


# ---- model construction ---------------------------------------------------------


def two_state_hmm(observations=(0, 1, 1)) -> oracle.DiscreteHMM:
    """Two-state chain with a uniform proposal and binary observations."""
    transition = np.array([[0.7, 0.3], [0.4, 0.6]])
    emit = np.array([[0.9, 0.1], [0.2, 0.8]])  # emit[state, y]
    y = [int(v) for v in observations]
    return oracle.DiscreteHMM(
        initial=[0.5, 0.5], transition=transition,
        emission=np.array([emit[:, v] for v in y]),
        proposal_initial=[0.5, 0.5], proposal=np.full((2, 2), 0.5))


def load_tables(path) -> oracle.DiscreteHMM:
    spec = json.loads(Path(path).read_text())
    try:
        return oracle.DiscreteHMM(
            initial=spec["initial"], transition=spec["transition"], emission=spec["emission"],
            proposal_initial=spec.get("proposal_initial"), proposal=spec.get("proposal"),
            psi=spec.get("psi"))
    except KeyError as err:
        raise InvalidConfigurationError(f"{path} lacks the {err.args[0]!r} table") from None


def _load_factory(target: str):
    file, _, attr = target.partition(":")
    if not attr:
        raise InvalidConfigurationError("factory must look like path/to/file.py:callable")
    spec = importlib.util.spec_from_file_location("_smcvar_user_model", file)
    if spec is None or spec.loader is None:
        raise InvalidConfigurationError(f"cannot import {file}")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    try:
        return getattr(module, attr)
    except AttributeError:
        raise InvalidConfigurationError(f"{file} has no attribute {attr!r}") from None


def discrete_hmm(config: ExperimentConfig) -> oracle.DiscreteHMM:
    if config.tables == "two-state":
        return two_state_hmm(config.observations.replace(";", ",").split(","))
    return load_tables(config.tables)


def build_replication(config: ExperimentConfig, seed: int):
    """Model and exact truth (or ``None``) for one replication."""
    data_seed = np.random.SeedSequence([seed, 0])
    fixed = None if config.data is None else benchmarks.read_series(config.data)[1]
    if config.model == "changepoint":
        y = fixed if fixed is not None else benchmarks.simulate_changepoint(
            config.T, config.rho, config.xi, data_seed)[1]
        model = benchmarks.changepoint_model(config.rho, config.xi, y, horizon=config.T,
                                             proposal=config.proposal)
        truth = oracle.changepoint_exact_mean(y[:model.horizon], config.rho, config.xi)[-1]
        return model, np.array([truth])
    if config.model == "bearings":
        y = fixed if fixed is not None else benchmarks.simulate_bearings(config.T, data_seed)[1]
        return benchmarks.bearings_model(y, horizon=config.T, first_stage=config.first_stage), None
    if config.model == "oracle":
        dhmm = discrete_hmm(config)
        if config.T is not None and config.T != dhmm.horizon:
            raise InvalidConfigurationError(f"T = {config.T} but the tables have {dhmm.horizon} stages")
        return dhmm.to_model(), np.array([dhmm.psi_T])
    out = _load_factory(config.factory)(config.T, int(data_seed.generate_state(1)[0]))
    model, truth = out if isinstance(out, tuple) else (out, None)
    if not isinstance(model, ModelSpec):
        raise InvalidConfigurationError("the factory must return a ModelSpec")
    return model, None if truth is None else np.atleast_1d(np.asarray(truth, dtype=float))


# ---- one replication -> one CSV row ---------------------------------------------


def _policy_label(policy) -> str:
    if isinstance(policy, Always):
        return "0"
    if isinstance(policy, Never):
        return "inf"
    return repr(float(policy.c))


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return repr(x) if math.isfinite(x) else ("inf" if x > 0 else "nan")


def base_columns(n_components: int) -> list:
    cols = ["rep", "seed", "m", "T", "scheme", "policy_c"]
    def comp(name):
        return [name] + [f"{name}{j + 1}" for j in range(1, n_components)]
    cols += comp("estimate")
    cols += comp("se_ancestral") + comp("se_split") + comp("se_gb")
    cols += ["r_resamples", "tau_list", "M_T", "runtime_ms"]
    cols += comp("truth") + ["status"]
    return cols


def run_replication(config: ExperimentConfig, rep: int) -> dict:
    seed = derive_seed(config.seed, rep)
    policy = parse_policy(config.policy)
    scheme = Scheme.parse(config.scheme)
    row = {"rep": rep, "seed": seed, "m": config.m, "scheme": scheme.value,
           "policy_c": _policy_label(policy)}
    try:
        model, truth = build_replication(config, seed)
        row["T"] = model.horizon
        started = time.perf_counter()
        out = run_filter(model, config.m, policy, scheme, seed=np.random.SeedSequence([seed, 1]),
                         k=max(config.k, 1), gilks_berzuini=config.gb, keep_population=False)
        elapsed = time.perf_counter() - started
    except (SMCError, FloatingPointError) as err:
        row["T"] = config.T if config.T is not None else ""
        row["status"] = f"failed:{type(err).__name__}"
        return row
    est = np.atleast_1d(out.estimate)
    row["_n"] = est.size
    for name, vals in (("estimate", est), ("se_ancestral", out.se_ancestral),
                       ("se_split", out.se_split), ("se_gb", out.se_gb), ("truth", truth)):
        vals = [None] * est.size if vals is None else np.atleast_1d(vals)
        for j, v in enumerate(vals):
            row[name if j == 0 else f"{name}{j + 1}"] = _fmt(v)
    times = out.diagnostics.resample_times
    row["r_resamples"] = len(times)
    row["tau_list"] = ";".join(str(t) for t in times)
    row["M_T"] = out.size
    row["runtime_ms"] = f"{elapsed * 1e3:.3f}" if config.timing else ""
    row["status"] = "ok"
    return row


def _run_chunk(args):
    config, reps = args
    return [run_replication(config, rep) for rep in reps]


def run_rows(config: ExperimentConfig) -> list:
    """All replication rows, ordered by ``rep``; parallel when ``n_jobs > 1``."""
    reps = list(range(config.replications))
    jobs = min(config.n_jobs, len(reps))
    if jobs <= 1:
        rows = _run_chunk((config, reps))
    else:
        chunks = [(config, reps[i::jobs]) for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = [r for chunk in pool.map(_run_chunk, chunks) for r in chunk]
    return sorted(rows, key=lambda r: r["rep"])


def rows_to_csv(rows: list) -> str:
    n = max([r.get("_n", 1) for r in rows] + [1])
    cols = base_columns(n)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: r.get(c, "") for c in cols})
    return buf.getvalue()


def read_rows(path_or_text) -> list:
    text = path_or_text
    if not isinstance(text, str) or "\n" not in text:
        text = Path(path_or_text).read_text()
    return list(csv.DictReader(io.StringIO(text)))


# ---- aggregation ----------------------------------------------------------------


def _float(v):
    return None if v in ("", None) else float(v)


def _component_names(columns) -> list:
    names = ["estimate"]
    j = 2
    while f"estimate{j}" in columns:
        names.append(f"estimate{j}")
        j += 1
    return names


def aggregate_rows(rows: list, truth_override=None) -> dict:
    """Summary statistics computed from CSV rows (strings or numbers)."""
    if not rows:
        raise InvalidConfigurationError("no rows to aggregate")
    ok = [r for r in rows if r.get("status") == "ok"]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "n_replications": len(rows),
        "n_ok": len(ok),
        "n_failed": len(rows) - len(ok),
        "complete": len(ok) == len(rows),
        "failures": sorted({r["status"] for r in rows if r.get("status") != "ok"}),
        "components": [],
    }
    if ok:
        summary["mean_resamples"] = float(np.mean([float(r["r_resamples"]) for r in ok]))
        summary["mean_M_T"] = float(np.mean([float(r["M_T"]) for r in ok]))
        runtimes = [_float(r.get("runtime_ms")) for r in ok]
        summary["mean_runtime_ms"] = (None if any(v is None for v in runtimes)
                                      else float(np.mean(runtimes)))
    for idx, name in enumerate(_component_names(rows[0].keys())):
        suffix = "" if idx == 0 else str(idx + 1)
        est = np.array([float(r[name]) for r in ok])
        comp = {
            "component": idx + 1,
            "mean_estimate": float(est.mean()) if est.size else None,
            "var_estimate": float(est.var(ddof=1)) if est.size > 1 else None,
            "mean_se": {},
            "coverage": {},
        }
        if truth_override is not None:
            truths = np.full(est.size, float(np.atleast_1d(truth_override)[idx]))
        else:
            raw = [_float(r.get("truth" + suffix)) for r in ok]
            truths = None if (not raw or any(v is None for v in raw)) else np.array(raw)
        if truths is not None and est.size:
            comp["mean_truth"] = float(truths.mean())
            comp["rmse"] = float(np.sqrt(np.mean((est - truths) ** 2)))
        for kind in ("ancestral", "split", "gb"):
            vals = [_float(r.get(f"se_{kind}{suffix}")) for r in ok]
            if not vals or any(v is None for v in vals):
                continue
            se = np.array(vals)
            comp["mean_se"][kind] = float(se.mean())
            if truths is not None:
                err = np.abs(est - truths)
                comp["coverage"][kind] = {"cover1se": float(np.mean(err <= se)),
                                          "cover2se": float(np.mean(err <= 2 * se))}
        summary["components"].append(comp)
    return summary


def run_experiment(config: ExperimentConfig) -> tuple[str, dict]:
    """Run every replication; write the CSV/JSON outputs if configured.

    Returns the CSV text and the aggregate dictionary (which includes the
    configuration).  The aggregate is computed by re-reading the CSV text.
    """
    config.validate()
    rows = run_rows(config)
    text = rows_to_csv(rows)
    truth = None
    if config.truth not in ("oracle", "none"):
        truth = float(config.truth)
    parsed = read_rows(text)
    if config.truth == "none":
        for r in parsed:
            for key in list(r):
                if key.startswith("truth"):
                    r[key] = ""
    summary = aggregate_rows(parsed, truth_override=truth)
    summary["config"] = {k: v for k, v in config.to_dict().items() if k != "jobs"}
    if config.out_csv:
        Path(config.out_csv).write_text(text)
    if config.out_json:
        Path(config.out_json).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return text, summary
