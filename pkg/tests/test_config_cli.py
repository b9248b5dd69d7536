import json
import warnings

import numpy as np
import pytest
from click.testing import CliRunner

from cs3vm.cli import main
from cs3vm.config import ConfigError, RangeWarning, RunConfig, config_from_dict, load_config
from cs3vm.dataset import Dataset, Sample
from cs3vm.pipeline import write_manifest


def write_csv(path, seed, rows=40):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(rows, 2))
    y = (x[:, 0] + 0.3 * x[:, 1] > 0).astype(int)
    lines = ["a,b,target"] + [f"{u:.6f},{v:.6f},{t}" for (u, v), t in zip(x, y)]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def oned_manifest(tmp_path):
    ds = Dataset(np.array([[-1.0], [1.0], [-0.5], [0.5], [2.0]]), np.array([-1, 1, -1, 1, 1]), "oned")
    return write_manifest(ds, [Sample((0, 1), (2, 3, 4), (-1, 1), 2, 0, "biased")], tmp_path / "m")


def run(args):
    return CliRunner().invoke(main, [str(a) for a in args])


def small_config(tmp_path, **extra):
    data = {"samples": 1, "fraction": 0.2, "time_limit": 60, "rcm": {"k1": 2}, "wircm": {"T_max": 10}, **extra}
    path = tmp_path / "run.yaml"
    path.write_text(json.dumps(data))  # JSON is valid YAML
    return path


# ----------------------------------------------------------------------------- config

def test_schedules():
    cfg = RunConfig()
    assert [cfg.k1_for(m) for m in (500, 1000, 1001)] == [10, 20, 50]
    assert [cfg.b_max_for(m) for m in (100, 500, 1000, 2000)] == [20, 125, 350, 900]
    assert cfg.rcm_config(4, 0).k1 == 4


def test_unknown_method_and_keys_rejected():
    with pytest.raises(ConfigError):
        RunConfig(methods=("svm", "magic"))
    with pytest.raises(ConfigError):
        config_from_dict({"rcm": {"k_one": 3}})
    with pytest.raises(ConfigError):
        config_from_dict({"colour": "blue"})


def test_yaml_file_and_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("samples: 2\nmethods: [svm, ircm]\nrcm:\n  k1: 3\n")
    cfg = load_config(path, {"samples": 4, "seed": None})
    assert cfg.samples == 4 and cfg.methods == ("svm", "ircm") and cfg.rcm.k1 == 3
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_range_checks_warn_or_raise():
    cfg = config_from_dict({"C2": 5.0, "wircm": {"T_max": 1.0}})
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        issues = cfg.check_ranges(100)
    assert len(issues) == 2 and all(issubclass(w.category, RangeWarning) for w in caught)
    with pytest.raises(ConfigError):
        config_from_dict({"C2": 5.0, "strict_ranges": True}).check_ranges(100)
    assert RunConfig().range_issues(100) == []


# ----------------------------------------------------------------------------- cli

def test_prepare_three_inputs_gives_three_manifests(tmp_path):
    paths = [write_csv(tmp_path / f"d{i}.csv", i) for i in range(3)]
    res = run(["prepare", *paths, "--config", small_config(tmp_path), "--out-dir", tmp_path / "o"])
    assert res.exit_code == 0, res.output
    assert len(json.loads(res.stdout)["manifests"]) == 3


def test_prepare_is_byte_reproducible(tmp_path):
    csv = write_csv(tmp_path / "d.csv", 7)
    outs = []
    for name in ("o1", "o2"):
        res = run(["prepare", csv, "--seed", 5, "--out-dir", tmp_path / name])
        assert res.exit_code == 0
        outs.append((tmp_path / name / "d.manifest.json").read_bytes())
    assert outs[0] == outs[1]


def test_bad_path_gives_json_error(tmp_path):
    res = run(["prepare", tmp_path / "nope.csv", "--out-dir", tmp_path / "o"])
    assert res.exit_code == 1
    err = json.loads(res.stderr.strip().splitlines()[-1])
    assert err["error"] == "DatasetError" and "nope.csv" in err["message"]


def test_unknown_method_is_an_error(oned_manifest, tmp_path):
    res = run(["solve", oned_manifest, "--method", "magic", "--out-dir", tmp_path])
    assert res.exit_code == 1
    assert json.loads(res.stderr.strip().splitlines()[-1])["error"] == "ConfigError"


def test_solve_oned(oned_manifest, tmp_path):
    res = run(["solve", oned_manifest, "--method", "svm", "--method", "cs3vm", "--method", "ircm", "--trace",
               "--out-dir", tmp_path / "s"])
    assert res.exit_code == 0, res.output
    rows = [json.loads(x) for x in (tmp_path / "s" / "solutions.jsonl").read_text().splitlines()]
    by = {r["method"]: r for r in rows}
    assert by["svm"]["status"] == "Optimal"
    assert by["cs3vm"]["objective"] == pytest.approx(0.5, abs=1e-7)
    assert len(json.loads(res.stdout)["traces"]) == 1
    # range departures for the tiny instance are reported on stderr, not fatal
    assert any("warning" in json.loads(x) for x in res.stderr.strip().splitlines())


def test_full_pipeline_two_methods_three_instances(tmp_path):
    csv = write_csv(tmp_path / "d.csv", 3, rows=30)
    cfg = small_config(tmp_path, samples=3)
    out = tmp_path / "o"
    assert run(["prepare", csv, "--config", cfg, "--out-dir", out]).exit_code == 0
    manifest = out / "d.manifest.json"
    res = run(["solve", manifest, "--config", cfg, "--method", "svm", "--method", "ircm", "--out-dir", out])
    assert res.exit_code == 0, res.output
    res = run(["evaluate", manifest, "--solutions", out / "solutions.jsonl", "--out-dir", out])
    assert res.exit_code == 0 and json.loads(res.stdout)["count"] == 6
    res = run(["report", out / "records.jsonl", "--time-limit", 60, "--out-dir", out])
    assert res.exit_code == 0, res.output
    header = (out / "ecdf.csv").read_text().splitlines()[0].split(",")
    assert header == ["sigma", "ircm", "svm"]


def test_report_on_empty_records_fails(tmp_path):
    (tmp_path / "r.jsonl").write_text("")
    res = run(["report", tmp_path / "r.jsonl", "--out-dir", tmp_path])
    assert res.exit_code == 1
    assert json.loads(res.stderr.strip().splitlines()[-1])["error"] == "PipelineError"


def test_oracle_command(oned_manifest, tmp_path):
    res = run(["oracle", oned_manifest, "--out-dir", tmp_path])
    assert res.exit_code == 0, res.output
    assert json.loads(res.stdout) == {"checked": 1, "disagreements": []}
