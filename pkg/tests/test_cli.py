import csv
import json
import time

import jsonschema
import numpy as np
import pytest

from moe_lab.cli import main
from moe_lab.estimation import MLE_RESULT_SCHEMA
from moe_lab.model import MODEL_SCHEMA, read_model_json


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def generated(tmp_path):
    out = tmp_path / "data.csv"
    assert run("generate", "--scenario", "T2", "--case", "fixed_lambda", "--n", 100, "--seed", 7,
               "--out", out) == 0
    return out, tmp_path / "truth.json"


def test_generate_layout(generated):
    out, truth = generated
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [f"x{j}" for j in range(1, 9)] + ["y"]
    assert len(rows) == 101 and all(len(r) == 9 for r in rows)
    doc = json.loads(truth.read_text())
    jsonschema.validate(doc, MODEL_SCHEMA)
    assert doc["provenance"]["scenario"] == "T2"
    assert read_model_json(truth).lam == 0.5


def test_generate_is_deterministic(generated, tmp_path):
    out, truth = generated
    other = tmp_path / "again" / "data.csv"
    other.parent.mkdir()
    run("generate", "--scenario", "T2", "--case", "fixed_lambda", "--n", 100, "--seed", 7, "--out", other)
    assert other.read_bytes() == out.read_bytes()
    assert (other.parent / "truth.json").read_bytes() == truth.read_bytes()


def test_seed_env_overrides_flag(tmp_path, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run("generate", "--scenario", "T6", "--case", "fixed_lambda", "--n", 20, "--seed", 1, "--out", a)
    monkeypatch.setenv("MOE_LAB_SEED", "1")
    run("generate", "--scenario", "T6", "--case", "fixed_lambda", "--n", 20, "--seed", 99, "--out", b,
        "--truth-out", tmp_path / "tb.json")
    assert a.read_bytes() == b.read_bytes()


def test_fit_small_dataset(tmp_path):
    data = tmp_path / "d.csv"
    run("generate", "--scenario", "T2", "--case", "fixed_lambda", "--n", 50, "--seed", 3, "--out", data)
    out = tmp_path / "fit.json"
    t0 = time.perf_counter()
    assert run("fit", "--data", data, "--truth", tmp_path / "truth.json", "--out", out) == 0
    assert time.perf_counter() - t0 < 1.0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, MLE_RESULT_SCHEMA)
    assert {"errors", "provenance"} <= set(doc)
    assert "scaled_lambda" in doc["errors"]


def test_fit_single_component(tmp_path):
    truth = {
        "lambda": 1.0,
        "base": {"kind": "gaussian", "expert": {"kind": "identity"}, "a0": [1.0, 0.0], "b0": 0.0, "nu0": 1.0},
        "prompt": {"expert": {"kind": "identity"}, "a": [0.5, -1.0], "b": 0.3, "nu": 0.1},
    }
    tpath = tmp_path / "truth.json"
    tpath.write_text(json.dumps(truth))
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (2000, 2))
    y = x @ [0.5, -1.0] + 0.3 + np.sqrt(0.1) * rng.normal(size=2000)
    data = tmp_path / "d.csv"
    data.write_text("x1,x2,y\n" + "\n".join(",".join(repr(float(v)) for v in row) for row in np.column_stack([x, y])) + "\n")
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"fit": {"init": {"mode": "near_truth", "noise_scale": 0.1}}}))
    out = tmp_path / "fit.json"
    assert run("fit", "--data", data, "--truth", tpath, "--config", config, "--out", out) == 0
    assert json.loads(out.read_text())["lambda_hat"] >= 0.9


def test_fit_numeric_failure_exit_code(tmp_path):
    truth = {
        "lambda": 0.5,
        "base": {"kind": "gaussian", "expert": {"kind": "identity"}, "a0": [1.0], "b0": 0.0, "nu0": 1.0},
        "prompt": {"expert": {"kind": "sigmoid"}, "a": [1.0], "b": 0.0, "nu": 1.0},
    }
    tpath = tmp_path / "truth.json"
    tpath.write_text(json.dumps(truth))
    data = tmp_path / "d.csv"
    data.write_text("x1,y\n0.0,0.0\n0.0,1e200\n")
    with np.errstate(all="ignore"):
        assert run("fit", "--data", data, "--truth", tpath, "--out", tmp_path / "f.json") == 4


def test_malformed_csv_exit_code(tmp_path, generated):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y\n0.1,oops\n")
    _, truth = generated
    assert run("fit", "--data", bad, "--truth", truth) == 2


def test_missing_file_exit_code(tmp_path):
    assert run("fit", "--data", tmp_path / "nope.csv", "--truth", tmp_path / "nope.json") == 3


def test_unwritable_output_exit_code(tmp_path):
    assert run("generate", "--scenario", "T2", "--case", "fixed_lambda", "--n", 5,
               "--out", tmp_path / "missing" / "d.csv") == 3


@pytest.mark.parametrize("argv", [
    ["generate", "--scenario", "T2", "--case", "drift_i", "--n", "5", "--out", "x.csv"],
    ["generate", "--scenario", "T2", "--case", "fixed_lambda", "--n", "0", "--out", "x.csv"],
    ["run-scenario", "--scenario", "T2", "--case", "fixed_lambda", "--grid", "1000,abc,3", "--outdir", "o"],
])
def test_usage_errors_return_2(argv):
    assert main(argv) == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["check", "--suite", "bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


@pytest.fixture(scope="module")
def ci_run(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("ci")
    assert main(["run-scenario", "--scenario", "T2", "--case", "fixed_lambda", "--profile", "ci",
                 "--seed", "0", "--jobs", "1", "--outdir", str(outdir)]) == 0
    return outdir


def test_run_scenario_outputs(ci_run):
    assert {p.name for p in ci_run.iterdir()} >= {"report.json", "long.csv", "summary.csv", "rates.svg"}
    doc = json.loads((ci_run / "report.json").read_text())
    for m in ("err_lambda", "err_a", "err_b", "err_nu"):
        assert np.isfinite(doc["slopes"][m]["slope"])
    assert doc["provenance"]["grid"] == [1000, 3000, 10000] and doc["provenance"]["reps"] == 10
    assert "slope = " in (ci_run / "rates.svg").read_text()


def test_run_scenario_is_reproducible_from_provenance(ci_run, tmp_path):
    doc = json.loads((ci_run / "report.json").read_text())
    prov = doc["provenance"]
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"scenario": prov["scenario"]["id"], "case": prov["scenario"]["case"],
                                  "grid": prov["grid"], "reps": prov["reps"], "seed": prov["seed"],
                                  "fit": prov["fit_options"], "hellinger": prov["hellinger"]}))
    assert main(["run-scenario", "--config", str(config), "--jobs", "2", "--outdir", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "report.json").read_bytes() == (ci_run / "report.json").read_bytes()
    assert (tmp_path / "o" / "long.csv").read_bytes() == (ci_run / "long.csv").read_bytes()


def test_single_rep_marks_stderr_missing(tmp_path):
    assert main(["run-scenario", "--scenario", "T6", "--case", "fixed_lambda", "--grid", "300,600,1200",
                 "--reps", "1", "--jobs", "1", "--outdir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert all(np.isnan(v) for s in doc["per_n"] for v in s["stderr"].values())
    assert np.isfinite(doc["slopes"]["err_lambda"]["slope"])
    with open(tmp_path / "summary.csv", newline="") as fh:
        assert all(row["stderr"] == "nan" for row in csv.DictReader(fh))


def test_hellinger_command(tmp_path, capsys):
    assert main(["hellinger", "--scenario", "T2", "--case", "fixed_lambda", "--grid", "500,1000,2000",
                 "--reps", "3", "--mc", "2000", "--jobs", "1", "--outdir", str(tmp_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["slope"]["slope"] < 0
    assert doc["provenance"]["hellinger"]["mc_n"] == 2000
    assert len(doc["per_n"]) == 3
    assert main(["hellinger", "--scenario", "T2", "--case", "fixed_lambda", "--mc", "10",
                 "--outdir", str(tmp_path)]) == 2


@pytest.mark.parametrize("suite", ["heat", "gradients", "losses"])
def test_check_suites_pass(suite, tmp_path):
    out = tmp_path / "check.json"
    assert main(["check", "--suite", suite, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["passed"] and doc["failures"] == []


def test_rates_all_writes_every_preset(tmp_path, monkeypatch):
    import moe_lab.cli as cli

    monkeypatch.setitem(cli.PROFILES, "ci", ((300, 600, 1200), 1))
    assert main(["rates-all", "--jobs", "1", "--outdir", str(tmp_path)]) == 0
    lines = (tmp_path / "slopes.csv").read_text().splitlines()
    assert lines[0] == "scenario,case,metric,slope,intercept,r2"
    assert len([p for p in tmp_path.iterdir() if p.is_dir()]) == 12
