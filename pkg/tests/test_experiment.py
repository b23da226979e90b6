import json
from pathlib import Path

import numpy as np
import pytest

from smcvar import experiment
from smcvar.errors import InvalidConfigurationError
from smcvar.experiment import (ExperimentConfig, aggregate_rows, derive_seed, load_config,
                               read_rows, run_experiment, run_rows, rows_to_csv)

DATA = Path(__file__).parent / "data"


def small(**kw):
    base = dict(model="changepoint", T=30, m=200, policy="1.0", replications=4, seed=11, k=2)
    base.update(kw)
    return ExperimentConfig(**base).validate()


def test_derive_seed_is_fixed_hash():
    assert derive_seed(3, 5) == int(np.random.SeedSequence([3, 5]).generate_state(1, np.uint64)[0])
    assert derive_seed(3, 5) != derive_seed(3, 6) != derive_seed(4, 5)
    with pytest.raises(InvalidConfigurationError):
        derive_seed(-1, 0)


def test_config_file_with_overrides(tmp_path):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("# study\nmodel = changepoint\nT = 40\nm = 300   # particles\ngb = off\npolicy = 2\n")
    c = load_config(cfg, {"m": 500, "seed": None})
    assert (c.model, c.T, c.m, c.gb, c.policy) == ("changepoint", 40, 500, False, "2")


@pytest.mark.parametrize("text", ["bogus = 1\n", "m = many\n", "gb = maybe\n"])
def test_config_rejects_bad_entries(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("T = 10\n" + text)
    with pytest.raises(InvalidConfigurationError):
        load_config(cfg)


@pytest.mark.parametrize("kw", [dict(m=0), dict(k=1), dict(k=500), dict(policy="-1"),
                                dict(scheme="stratified"), dict(model="lorenz"), dict(T=None),
                                dict(truth="maybe"), dict(out_csv="/nonexistent/dir/x.csv"),
                                dict(model="generic", factory=None)])
def test_config_validation(kw):
    with pytest.raises(InvalidConfigurationError):
        small(**kw)


def test_csv_is_byte_identical_across_runs():
    a, _ = run_experiment(small())
    b, _ = run_experiment(small())
    assert a == b
    header = a.splitlines()[0].split(",")
    assert header[:6] == ["rep", "seed", "m", "T", "scheme", "policy_c"]
    assert {"estimate", "se_ancestral", "se_split", "se_gb", "r_resamples", "tau_list", "M_T",
            "runtime_ms"} <= set(header)


def test_parallel_equals_serial():
    serial = rows_to_csv(run_rows(small(jobs=1, replications=5)))
    parallel = rows_to_csv(run_rows(small(jobs=2, replications=5)))
    assert serial == parallel


def test_jobs_env(monkeypatch):
    monkeypatch.setenv(experiment.JOBS_ENV, "3")
    assert small().n_jobs == 3
    assert small(jobs=1).n_jobs == 1
    monkeypatch.setenv(experiment.JOBS_ENV, "x")
    with pytest.raises(InvalidConfigurationError):
        small().n_jobs


def test_aggregate_recomputed_from_csv(tmp_path):
    cfg = small(out_csv=str(tmp_path / "r.csv"), out_json=str(tmp_path / "s.json"))
    text, summary = run_experiment(cfg)
    on_disk = json.loads((tmp_path / "s.json").read_text())
    again = aggregate_rows(read_rows(tmp_path / "r.csv"))
    for key in ("n_replications", "n_ok", "complete", "mean_resamples", "components"):
        assert again[key] == on_disk[key] == summary[key]
    assert on_disk["schema_version"] == experiment.SCHEMA_VERSION
    est = [float(r["estimate"]) for r in read_rows(text)]
    assert summary["components"][0]["mean_estimate"] == pytest.approx(np.mean(est), rel=1e-12)


def test_timing_column_blank_unless_requested():
    rows = read_rows(run_experiment(small(replications=1))[0])
    assert rows[0]["runtime_ms"] == ""
    rows = read_rows(run_experiment(small(replications=1, timing=True))[0])
    assert float(rows[0]["runtime_ms"]) >= 0


def test_failed_replication_marks_summary_incomplete():
    cfg = ExperimentConfig(model="generic", factory=f"{DATA / 'flaky_model.py'}:make", T=3, m=50,
                           replications=6, seed=0).validate()
    seeds = [derive_seed(0, r) for r in range(6)]
    dead = [int(np.random.SeedSequence([s, 0]).generate_state(1)[0]) % 2 == 1 for s in seeds]
    assert any(dead) and not all(dead)
    _, summary = run_experiment(cfg)
    assert summary["n_failed"] == sum(dead)
    assert not summary["complete"]
    assert summary["failures"] == ["failed:DegenerateWeightsError"]


def test_truth_override_and_none():
    cfg = ExperimentConfig(model="generic", factory=f"{DATA / 'flaky_model.py'}:healthy", T=3, m=50,
                           replications=3, truth="0.5").validate()
    _, summary = run_experiment(cfg)
    assert summary["components"][0]["mean_truth"] == 0.5
    cfg.truth = "none"
    _, summary = run_experiment(cfg)
    assert "mean_truth" not in summary["components"][0]


def test_oracle_model_matches_exact_value():
    cfg = ExperimentConfig(model="oracle", m=5000, replications=20, seed=1, policy="always").validate()
    _, summary = run_experiment(cfg)
    comp = summary["components"][0]
    sd = np.sqrt(comp["var_estimate"] / 20)
    assert abs(comp["mean_estimate"] - comp["mean_truth"]) < 4 * sd


def test_bearings_rows_have_two_components():
    cfg = ExperimentConfig(model="bearings", T=5, m=200, k=2, replications=2).validate()
    rows = read_rows(run_experiment(cfg)[0])
    assert "estimate2" in rows[0] and rows[0]["truth"] == ""


def test_pinned_data_shared_across_replications(tmp_path):
    from smcvar import benchmarks
    x, y = benchmarks.simulate_changepoint(25, 0.05, 1.0, seed=2)
    benchmarks.write_series(tmp_path / "y.csv", x, y)
    cfg = small(data=str(tmp_path / "y.csv"), T=None, replications=3)
    rows = read_rows(run_experiment(cfg)[0])
    assert len({r["truth"] for r in rows}) == 1 and rows[0]["T"] == "25"
