import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from dbshrink import cli, experiments
from dbshrink.estimators import a_optimal, t_max
from dbshrink.experiments import (
    REFERENCE_PRIAL,
    TABLE_FIELDS,
    ExperimentConfig,
    format_rows,
    parse_grid,
    reference_table_config,
    run_table,
    sweep_a,
    sweep_t,
)
from dbshrink.risk import NumericalFailure
from dbshrink.sampling import Scenario
from dbshrink.stein_haff import IdentityCheck

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "paper_table.json"


def _small_config(tmp_path, **extra):
    cfg = {
        "scenarios": [{"p": 10, "m": 10, "rho": 0.9}, {"p": 6, "m": 3, "rho": 0.5}],
        "estimators": ["usual:a=auto", "corrected:a=auto,t=auto"],
        "losses": ["data-based", "quadratic"],
        "reps": 2,
        "master_seed": 7,
        **extra,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_shipped_config_matches_builder():
    shipped = ExperimentConfig.from_file(CONFIG)
    assert shipped.to_dict() == reference_table_config().to_dict()
    assert [(sc.p, sc.m) for sc in shipped.scenarios] == list(REFERENCE_PRIAL)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(scenarios=[], estimators=["usual"])
    with pytest.raises(ValueError):
        ExperimentConfig(scenarios=[Scenario.ar1(3, 3, 0.1)], estimators=["usual"], losses=("stein",))
    with pytest.raises(ValueError):
        ExperimentConfig(scenarios=[Scenario.ar1(3, 3, 0.1)], estimators=["usual"], reps=1)


def test_parse_grid():
    np.testing.assert_allclose(parse_grid("0:1:5"), [0, 0.25, 0.5, 0.75, 1])
    np.testing.assert_allclose(parse_grid("0.1, 0.2,0.4"), [0.1, 0.2, 0.4])
    with pytest.raises(ValueError):
        parse_grid("0:1")


def test_format_rows_csv_and_json():
    rows = [{"p": 3, "loss": "quadratic", "avg_loss": 1.23456789, "prial": 12.3456, "flag": True, "rho": None}]
    text = format_rows(rows, "csv")
    assert text == "p,loss,avg_loss,prial,flag,rho\n3,quadratic,1.23457,12.35,true,\n"
    data = json.loads(format_rows(rows, "json"))
    assert data == [{"p": 3, "loss": "quadratic", "avg_loss": 1.23457, "prial": 12.35, "flag": True, "rho": None}]
    with pytest.raises(ValueError):
        format_rows(rows, "xml")


def test_run_table_rows_and_dominance():
    cfg = ExperimentConfig(
        scenarios=[Scenario.ar1(10, 10, 0.9)],
        estimators=["usual:a=auto", "corrected:a=auto,t=auto"],
        losses=("data-based",),
        reps=500,
        master_seed=3,
    )
    res = run_table(cfg)
    assert not res.failures
    assert [r["estimator"] for r in res.rows] == ["usual:a=auto", "corrected:a=auto,t=auto"]
    assert res.rows[0]["prial"] is None
    corr = res.rows[1]
    assert corr["prial"] > 0
    assert corr["avg_loss"] < res.rows[0]["avg_loss"]


def test_run_table_skips_failed_scenario(monkeypatch):
    calls = []
    real = experiments.simulate_losses

    def flaky(sc, *args, **kwargs):
        calls.append(sc.p)
        if sc.p == 4:
            raise NumericalFailure("boom")
        return real(sc, *args, **kwargs)

    monkeypatch.setattr(experiments, "simulate_losses", flaky)
    cfg = ExperimentConfig(
        scenarios=[Scenario.ar1(4, 3, 0.5), Scenario.ar1(5, 3, 0.5)],
        estimators=["usual:a=auto"],
        reps=3,
    )
    res = run_table(cfg)
    assert calls == [4, 5]
    assert len(res.failures) == 1 and {r["p"] for r in res.rows} == {5}


def test_sweep_t_includes_t_max_and_zero():
    sc = Scenario.ar1(20, 4, 0.9)
    tm = t_max(20, 4)
    rows = sweep_t(sc, [0.0, 0.1, 0.2, 0.3], reps=1000, seed=0)
    ts = [r["t"] for r in rows]
    assert tm in ts and sum(r["is_t_max"] for r in rows) == 1
    assert rows[0]["prial"] == 0.0 and rows[0]["delta"] == 0.0
    for r in rows[1:]:
        assert r["in_dominance_interval"]
        assert r["prial"] > 2 * r["prial_se"]
    with pytest.raises(ValueError):
        sweep_t(sc, [-1.0], reps=10)


def test_sweep_a_argmin_near_optimum():
    sc = Scenario.ar1(20, 4, 0.9)
    a_o = a_optimal(20, 4)
    rows = sweep_a(sc, a_o * np.array([0.5, 1.0, 2.0]), reps=2000, seed=1)
    best = [r for r in rows if r["is_argmin"]]
    assert len(best) == 1 and best[0]["a"] == pytest.approx(a_o)
    mid, far = rows[1], rows[2]
    assert far["avg_loss"] - mid["avg_loss"] > 3 * np.hypot(mid["std_err"], far["std_err"])
    with pytest.raises(ValueError):
        sweep_a(sc, [0.0], reps=10)


def test_cli_run_csv(tmp_path, capsys):
    cfg = _small_config(tmp_path)
    assert cli.main(["run", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    rows = list(csv.DictReader(io.StringIO(out)))
    assert tuple(rows[0].keys()) == TABLE_FIELDS
    assert len(rows) == 2 * 2 * 2
    assert {r["reps"] for r in rows} == {"2"}


def test_cli_run_json_with_overrides(tmp_path):
    cfg = _small_config(tmp_path)
    out = tmp_path / "t.json"
    code = cli.main(["run", "--config", str(cfg), "--reps", "3", "--seed", "11", "--format", "json",
                     "--out", str(out), "--unpaired", "--workers", "1"])
    assert code == 0
    data = json.loads(out.read_text())
    assert len(data) == 8 and data[0]["reps"] == 3 and data[0]["seed"] == 11


def test_cli_run_output_section(tmp_path):
    target = tmp_path / "table.json"
    cfg = _small_config(tmp_path, output={"path": str(target), "format": "json"})
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert isinstance(json.loads(target.read_text()), list)


@pytest.mark.parametrize("content", ["{not json", json.dumps({"scenarios": []}), json.dumps({"estimators": ["usual"]})])
def test_cli_bad_config_exit_2(tmp_path, content, capsys):
    path = tmp_path / "bad.json"
    path.write_text(content)
    assert cli.main(["run", "--config", str(path)]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_missing_config_exit_2(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_cli_numerical_failure_exit_3(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise NumericalFailure("non-finite loss")

    monkeypatch.setattr(experiments, "simulate_losses", boom)
    assert cli.main(["run", "--config", str(_small_config(tmp_path))]) == 3


def test_cli_sweeps(capsys):
    assert cli.main(["sweep-t", "--p", "6", "--m", "3", "--reps", "20", "--grid", "0,0.5"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["is_t_max"] for r in rows].count("true") == 1
    assert cli.main(["sweep-a", "--p", "6", "--m", "3", "--reps", "20", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data) == 25 and sum(r["is_argmin"] for r in data) == 1


def test_cli_verify_text_and_json(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert cli.main(["verify", "--p", "3", "--m", "10", "--g", "s", "--reps", "200", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "lhs" in text and ("PASS" in text or "FAIL" in text)
    payload = json.loads(out.read_text())
    assert payload["rhs"] == pytest.approx(30.0, rel=1e-6)
    assert cli.main(["verify", "--p", "3", "--m", "4", "--g", "zero", "--reps", "5", "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "PASS"


def test_cli_verify_strict_exit_3(monkeypatch):
    failing = IdentityCheck(lhs=1.0, lhs_se=0.01, rhs=2.0, rhs_se=0.01, reps=10, seed=0)
    monkeypatch.setattr(cli, "verify", lambda *a, **k: failing)
    assert cli.main(["verify", "--p", "3", "--m", "4", "--reps", "10"]) == 0
    assert cli.main(["verify", "--p", "3", "--m", "4", "--reps", "10", "--strict"]) == 3


def test_cli_verify_student_is_config_error():
    assert cli.main(["verify", "--p", "3", "--m", "4", "--family", "student", "--nu", "5", "--reps", "5"]) == 2
