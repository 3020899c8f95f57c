"""Command-line behavior: configs, reports, exit codes, reruns."""

import json
import math
from pathlib import Path

import pytest
from click.testing import CliRunner

from nrkramers.cli import main

RUNNER = CliRunner()


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


def base_config(**extra):
    doc = {
        "landscape": {"builtin": "doublewell2d", "skew_amplitude": 1.0},
        "box": [[-2.0, 2.0], [-2.0, 2.0]],
        "start": [-1.0, 0.0],
        "epsilons": [0.1],
    }
    doc.update(extra)
    return doc


def run(args):
    return RUNNER.invoke(main, args, catch_exceptions=False)


def out_dir(result):
    return Path(result.output.strip().splitlines()[-1])


def all_output(result):
    # stderr capture differs across click versions
    try:
        return result.output + result.stderr
    except (ValueError, AttributeError):
        return result.output


def test_analyze_report(tmp_path):
    cfg = write_config(tmp_path, base_config())
    res = run(["analyze", "--config", cfg, "--out", str(tmp_path / "out")])
    assert res.exit_code == 0
    d = out_dir(res)
    report = json.loads((d / "report.json").read_text())
    assert report["certificate"]["passed"] is True
    assert len(report["critical_points"]) == 3
    assert report["valley"]["level"] == pytest.approx(0.25, abs=1e-10)
    gate = report["valley"]["gates"][0]["point"]["location"]
    assert abs(gate[0]) < 1e-8 and abs(gate[1]) < 1e-8
    manifest = json.loads((d / "manifest.json").read_text())
    assert manifest["command"] == "analyze"
    assert "report.json" in manifest["outputs"]


def test_invalid_json_exits_1(tmp_path):
    bad = tmp_path / "broken.json"
    bad.write_text('{"landscape": ')
    res = run(["analyze", "--config", str(bad), "--out",
               str(tmp_path / "out")])
    assert res.exit_code == 1
    assert "config" in all_output(res)


def test_missing_landscape_exits_1(tmp_path):
    cfg = write_config(tmp_path, {"epsilons": [0.1]})
    res = run(["predict", "--config", cfg, "--out", str(tmp_path / "out")])
    assert res.exit_code == 1


def test_empty_epsilons_exits_1(tmp_path):
    cfg = write_config(tmp_path, base_config(epsilons=[]))
    res = run(["predict", "--config", cfg, "--out", str(tmp_path / "out")])
    assert res.exit_code == 1


def test_non_skew_generator_exits_2(tmp_path):
    doc = base_config()
    doc["landscape"] = {
        "name": "broken", "dim": 2,
        "potential": {"kind": "builtin", "name": "doublewell2d"},
        "skew": {"kind": "constant", "entries": [[0.0, 1.0], [1.0, 0.0]]},
    }
    cfg = write_config(tmp_path, doc)
    res = run(["analyze", "--config", cfg, "--out", str(tmp_path / "out")])
    assert res.exit_code == 2
    assert "certificate" in all_output(res)


def test_predict_csv_values(tmp_path):
    cfg = write_config(tmp_path, base_config(epsilons=[0.15, 0.1]))
    res = run(["predict", "--config", cfg, "--out", str(tmp_path / "out")])
    assert res.exit_code == 0
    lines = (out_dir(res) / "prediction.csv").read_text().strip().split("\n")
    assert lines[0] == "epsilon,predicted,predicted_rev,speedup"
    for line, eps in zip(lines[1:], (0.15, 0.1)):
        f = [float(x) for x in line.split(",")]
        assert f[0] == eps
        assert f[1] == pytest.approx(math.pi * math.exp(0.25 / eps),
                                     rel=1e-10)
        assert f[2] == pytest.approx(f[1] * math.sqrt(2.0), rel=1e-10)
        assert f[3] == pytest.approx(math.sqrt(2.0), rel=1e-10)


SMALL_SIM = {"dt": 1e-3, "n_traj": 40, "ball_radius": 0.3,
             "t_max_factor": 40.0}


def test_simulate_command(tmp_path):
    cfg = write_config(tmp_path, base_config(epsilons=[0.3], sim=SMALL_SIM))
    res = run(["simulate", "--config", cfg, "--out", str(tmp_path / "out")])
    assert res.exit_code == 0
    d = out_dir(res)
    assert (d / "ensemble.csv").exists()
    payload = json.loads((d / "ensemble.json").read_text())
    assert payload["n_traj"] == 40
    assert payload["mean"] > 0.0


def test_compare_reruns_byte_identical(tmp_path):
    cfg = write_config(tmp_path, base_config(epsilons=[0.3], sim=SMALL_SIM))
    dirs = []
    for label in ("a", "b"):
        res = run(["compare", "--config", cfg, "--out",
                   str(tmp_path / label), "--seed", "7",
                   "--tolerance", "5.0"])
        assert res.exit_code == 0
        dirs.append(out_dir(res))
    for name in ("compare.csv", "report.json"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()
    report = json.loads((dirs[0] / "report.json").read_text())
    assert report["pass"] is True
    assert len(report["rows"]) == 1


def test_compare_failure_exits_2(tmp_path):
    cfg = write_config(tmp_path, base_config(epsilons=[0.3], sim=SMALL_SIM))
    res = run(["compare", "--config", cfg, "--out", str(tmp_path / "out"),
               "--tolerance", "1e-6"])
    assert res.exit_code == 2
    # the report is still written, marked failing
    report_files = list((tmp_path / "out" / "compare").glob("*/report.json"))
    assert len(report_files) == 1
    assert json.loads(report_files[0].read_text())["pass"] is False


def test_gibbs_command(tmp_path):
    doc = base_config()
    doc["gibbs"] = {"epsilon": 0.5, "dt": 5e-3, "burn_in": 1.0,
                    "duration": 200.0, "bins": 20, "n_chains": 8,
                    "box": [[-2.2, 2.2], [-2.2, 2.2]]}
    cfg = write_config(tmp_path, doc)
    res = run(["gibbs", "--config", cfg, "--out", str(tmp_path / "out")])
    assert res.exit_code == 0
    report = json.loads((out_dir(res) / "report.json").read_text())
    assert 0.0 <= report["histogram"]["tv_distance"] <= 1.0


def test_saddle_check_command(tmp_path):
    doc = base_config()
    doc["saddle"] = {"epsilon_ladder": [1e-2, 5e-3], "J_box": 4.0}
    cfg = write_config(tmp_path, doc)
    res = run(["saddle-check", "--config", cfg, "--out",
               str(tmp_path / "out")])
    assert res.exit_code == 0
    d = out_dir(res)
    assert (d / "saddle_0.csv").exists()
    report = json.loads((d / "report.json").read_text())
    gate = report["gates"][0]
    assert gate["reduced_det_rel_diff"] < 1e-10
    for row in gate["rows"]:
        assert row["ratio"] == pytest.approx(1.0, abs=1e-8)


def test_config_hash_separates_outputs(tmp_path):
    cfg1 = write_config(tmp_path, base_config(epsilons=[0.15]), "c1.json")
    cfg2 = write_config(tmp_path, base_config(epsilons=[0.1]), "c2.json")
    d1 = out_dir(run(["predict", "--config", cfg1, "--out",
                      str(tmp_path / "out")]))
    d2 = out_dir(run(["predict", "--config", cfg2, "--out",
                      str(tmp_path / "out")]))
    assert d1 != d2
    assert d1.parent == d2.parent
