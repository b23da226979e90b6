import json
from pathlib import Path

import pytest

from smcvar import benchmarks
from smcvar.cli import main

DATA = Path(__file__).parent / "data"


def test_run_writes_outputs(tmp_path):
    code = main(["run", "--model", "changepoint", "--T", "20", "--m", "100", "--replications", "2",
                 "--policy", "1", "--gb", "off", "--out-csv", str(tmp_path / "r.csv"),
                 "--out-json", str(tmp_path / "s.json")])
    assert code == 0
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["n_ok"] == 2 and summary["config"]["gb"] is False
    assert (tmp_path / "r.csv").read_text().count("\n") == 3


def test_run_with_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("model = oracle\nm = 100\nreplications = 2\n")
    assert main(["run", "--config", str(cfg), "--m", "50"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("rep,seed,m,T") and '"m": 50' in out


def test_run_reports_failures(tmp_path):
    code = main(["run", "--model", "generic", "--factory", f"{DATA / 'flaky_model.py'}:make",
                 "--T", "3", "--m", "20", "--replications", "6", "--out-csv", str(tmp_path / "r.csv"),
                 "--out-json", str(tmp_path / "s.json")])
    assert code == 3


def test_run_bad_config_exits_2(capsys):
    assert main(["run", "--model", "changepoint", "--m", "10"]) == 2
    assert "T is required" in capsys.readouterr().err


def test_gen_data_and_oracle(tmp_path, capsys):
    out = tmp_path / "y.csv"
    assert main(["gen-data", "changepoint", "--T", "30", "--seed", "4", "--out", str(out)]) == 0
    _, y = benchmarks.read_series(out)
    assert y.size == 30
    assert main(["oracle", "changepoint", "--data", str(out), "--all-stages"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert len(report["posterior_mean_by_stage"]) == 30
    assert main(["gen-data", "bearings", "--T", "5", "--out", str(tmp_path / "b.csv")]) == 0
    x, _ = benchmarks.read_series(tmp_path / "b.csv")
    assert x.shape == (5, 4)


def test_oracle_discrete(capsys):
    assert main(["oracle", "discrete", "--observations", "0,1,1", "--c", "0.5"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["T"] == 3 and 0 < report["psi_T"] < 1
    assert report["sigma2_multinomial"] > 0 and isinstance(report["tau_star"], list)


def test_oracle_changepoint_needs_data():
    assert main(["oracle", "changepoint"]) == 2


def test_accept_fast_suite(tmp_path, capsys):
    assert main(["accept", "residual-law", "--json", str(tmp_path / "a.json")]) == 0
    assert "PASS" in capsys.readouterr().out
    assert all(r["passed"] for r in json.loads((tmp_path / "a.json").read_text()))


def test_accept_unknown_suite():
    assert main(["accept", "nope"]) == 2


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
