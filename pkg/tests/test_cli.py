import json
import shutil

import numpy as np
import pytest
import yaml

from heisenberg_qc import cli


def write(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg) if name.endswith(".yaml") else json.dumps(cfg))
    return str(p)


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_distortion_dilation_rows(tmp_path, capsys):
    cfg = write(tmp_path, {"kind": "distortion", "seed": 3, "map": {"id": "dilation", "params": {"lam": 2}},
                           "points": [[0, 0, 0]], "radii": [0.5, 0.1, 0.02]})
    code, out, _ = run(["run", "--config", cfg], capsys)
    assert code == 0
    rep = cli.loads_report(out)
    assert np.allclose(rep["results"]["profile"]["profiles"][0]["K"], 1.0, atol=1e-9)
    assert rep["verdict"]["verdict"] == "QC-consistent"


def test_ccdist_vertical(tmp_path, capsys):
    cfg = write(tmp_path, {"kind": "ccdist", "seed": 0, "q": [0, 0, 1]}, "cc.json")
    code, out, _ = run(["run", "--config", cfg], capsys)
    assert code == 0
    val = cli.loads_report(out)["results"]["cc_distance"]["value"]
    assert val == pytest.approx(1.7725, rel=0.01)


def test_determinism_across_threads_and_out(tmp_path, capsys):
    cfg = write(tmp_path, {"kind": "bmo", "seed": 5, "function": {"id": "log-koranyi"},
                           "family": {"per_axis": 3}, "budgets": {"samples": 500}})
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["run", "--config", cfg, "--threads", "1", "--out", str(a)]) == 0
    assert cli.main(["run", "--config", cfg, "--threads", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_override_and_mandatory(tmp_path, capsys):
    cfg = write(tmp_path, {"kind": "ccdist", "q": [1, 0, 0]})
    code, _, err = run(["run", "--config", cfg], capsys)
    assert code == 1 and "seed" in err
    code, out, _ = run(["run", "--config", cfg, "--seed", "9"], capsys)
    assert code == 0 and cli.loads_report(out)["config"]["seed"] == 9


def test_malformed_config_names_field(tmp_path, capsys):
    cfg = write(tmp_path, {"kind": "distortion", "seed": 1, "budgets": {"samples": 0}, "bogus": 1})
    code, _, err = run(["run", "--config", cfg], capsys)
    assert code == 1
    assert "budgets.samples" in err and "bogus" in err
    cfg = write(tmp_path, {"kind": "distortion", "seed": 1}, "nomap.yaml")
    code, _, err = run(["run", "--config", cfg], capsys)
    assert code == 1 and "map" in err


def test_verdict_failure_exit_code(tmp_path, capsys):
    # a bounded function reported as not-BMO on a ladder that stops at small radii
    cfg = write(tmp_path, {"kind": "bmo", "seed": 0, "function": {"id": "bounded-sinusoid"},
                           "family": {"extent": 2, "per_axis": 3, "r_min": 0.25, "r_max": 2}})
    code, out, _ = run(["run", "--config", cfg], capsys)
    assert code == 2
    assert cli.loads_report(out)["verdict"]["passed"] is False


@pytest.mark.parametrize("cfg", [
    {"kind": "jn-tail", "function": {"id": "log-koranyi"}, "family": {"per_axis": 3}, "budgets": {"samples": 500}},
    {"kind": "transfer", "map": {"id": "rotation", "params": {"theta": 0.4}}, "function": {"id": "indicator-halfspace"},
     "family": {"per_axis": 3}, "budgets": {"samples": 500}},
    {"kind": "gotoh", "map": {"id": "identity"}, "budgets": {"samples": 2000, "pairs": 2}},
    {"kind": "gotoh", "map": {"id": "vertical-stretch", "params": {"c": 2}}, "points": [[1, 0, 0]],
     "radii": [0.25, 0.0625], "budgets": {"samples": 2000}},
    {"kind": "necessity", "map": {"id": "anisotropic", "params": {"a": 2}}, "budgets": {"samples": 1000}},
    {"kind": "roundness", "map": {"id": "identity"}, "budgets": {"samples": 20000}},
    {"kind": "roundness", "map": {"id": "vertical-stretch"}, "points": [[1, 0, 0]], "radii": [0.5, 0.05],
     "budgets": {"samples": 10000}},
    {"kind": "pansu", "map": {"id": "vertical-stretch"}, "points": [[1, 0, 0]]},
    {"kind": "pansu", "map": {"id": "left-translation", "params": {"l": [1, 2, 3]}}, "points": [[1, 0, 0]]},
])
def test_every_kind_runs_and_passes(tmp_path, capsys, cfg):
    path = write(tmp_path, dict(cfg, seed=0))
    code, out, err = run(["run", "--config", path], capsys)
    assert code == 0, err + out[-2000:]
    rep = cli.loads_report(out)
    assert rep["kind"] == cfg["kind"] and rep["version"] == cli.__version__


def test_report_round_trip_and_table(tmp_path, capsys):
    rep = {"a": float("inf"), "b": [1.0, float("-inf")], "c": {"d": np.float64(2.5)}}
    text = cli.dumps_report(rep)
    back = cli.loads_report(text)
    assert back == {"a": float("inf"), "b": [1.0, float("-inf")], "c": {"d": 2.5}}
    assert cli.dumps_report(back) == text
    assert "c.d" in cli.format_table(rep)


def test_timing_is_opt_in(tmp_path, capsys):
    cfg = write(tmp_path, {"kind": "ccdist", "seed": 0, "q": [1, 0, 0]})
    _, out, _ = run(["run", "--config", cfg], capsys)
    assert "wall_clock_s" not in cli.loads_report(out)
    _, out, _ = run(["run", "--config", cfg, "--timing"], capsys)
    assert cli.loads_report(out)["wall_clock_s"] > 0


def test_listing(capsys):
    code, out, _ = run(["list-maps"], capsys)
    assert code == 0 and "vertical-stretch" in json.loads(out)["maps"]
    code, out, _ = run(["list-functions", "--format", "table"], capsys)
    assert code == 0 and "functions.log-koranyi" in out


def test_regress_pass_fail_and_missing(tmp_path, capsys):
    d = tmp_path / "bl"
    d.mkdir()
    shutil.copy(cli.default_baseline_dir() / cli.BASELINE_FILE, d / cli.BASELINE_FILE)
    code, out, _ = run(["regress", "--baselines", str(d), "--only", "rho0", "K_a"], capsys)
    assert code == 0 and json.loads(out)["passed"]
    frozen = json.loads((d / cli.BASELINE_FILE).read_text())
    frozen["K_a"]["value"] *= 1.5
    (d / cli.BASELINE_FILE).write_text(json.dumps(frozen))
    code, out, _ = run(["regress", "--baselines", str(d), "--only", "rho0", "K_a"], capsys)
    assert code == 2 and json.loads(out)["regress"]["failed"] == ["K_a"]
    code, _, err = run(["regress", "--baselines", str(tmp_path / "none")], capsys)
    assert code == 1 and "missing baseline" in err


def test_regenerate_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.regress(a, regenerate=True, names=["c0", "K_a"])
    cli.regress(b, regenerate=True, names=["c0", "K_a"])
    assert (a / cli.BASELINE_FILE).read_bytes() == (b / cli.BASELINE_FILE).read_bytes()
    packaged = json.loads((cli.default_baseline_dir() / cli.BASELINE_FILE).read_text())
    fresh = json.loads((a / cli.BASELINE_FILE).read_text())
    assert fresh["c0"] == packaged["c0"]
