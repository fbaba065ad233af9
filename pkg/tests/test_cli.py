import csv
import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from hall_lab.cli import dumps, main, plain, run
from hall_lab.config import apply_overrides, deep_merge, load_schema, parse_override, resolve
from hall_lab.errors import ConfigurationError
from hall_lab.scenarios import SCENARIOS

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

MALFORMED = {
    "negative-size": {"scenario": "quantization", "model": {"L": -4}},
    "unknown-key": {"scenario": "quantization", "modle": {"L": 4}},
    "unknown-scenario": {"scenario": "hall-bar"},
    "particle-number-string": {"scenario": "adiabatic-vs-kubo", "model": {"N": "two"}},
    "short-ladder": {"scenario": "adiabatic-vs-kubo", "numerics": {"eps_over_gap": [0.1, 0.05]}},
    "negative-rate": {"scenario": "adiabatic-vs-kubo", "numerics": {"eps_over_gap": [0.1, -0.05, 0.02]}},
}


def hall_lab(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "hall_lab.cli", *map(str, args)], capture_output=True,
                          text=True, cwd=cwd)


def without_timings(path):
    rep = json.loads(Path(path).read_text())
    rep.pop("timings")
    rep["diagnostics"].pop("seconds", None)
    return rep


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    for name in SCENARIOS:
        assert name in out


def test_every_shipped_config_validates():
    names = {p.stem for p in CONFIGS.glob("*.json")}
    assert names == set(SCENARIOS)
    for p in CONFIGS.glob("*.json"):
        assert main(["validate", str(p)]) == 0


@pytest.mark.parametrize("name", sorted(MALFORMED))
def test_validate_rejects_malformed(tmp_path, name, capsys):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(MALFORMED[name]))
    assert main(["validate", str(p)]) == 1
    assert "invalid" in capsys.readouterr().err


def test_validate_rejects_broken_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{ not json")
    assert main(["validate", str(p)]) == 1
    assert main(["validate", str(tmp_path / "missing.json")]) == 1


def test_usage_errors_exit_with_one():
    r = hall_lab("run")
    assert r.returncode == 1


def test_override_parsing():
    assert parse_override("model.L=6") == (["model", "L"], 6)
    assert parse_override("model.q=L") == (["model", "q"], "L")
    assert parse_override("numerics.sizes=[3,4]") == (["numerics", "sizes"], [3, 4])
    with pytest.raises(ConfigurationError):
        parse_override("model.L")
    with pytest.raises(ConfigurationError):
        parse_override("model..L=3")
    with pytest.raises(ConfigurationError):
        apply_overrides({"model": 3}, ["model.L=4"])


def test_precedence_flag_over_file_over_default():
    base = {"scenario": "limit-commutation"}
    assert resolve(base)["model"]["U"] == 0.5
    file_cfg = {"scenario": "limit-commutation", "model": {"U": 0.3}}
    assert resolve(file_cfg)["model"]["U"] == 0.3
    assert resolve(file_cfg, ["model.U=0.4"])["model"]["U"] == 0.4
    with pytest.raises(ConfigurationError):
        resolve(base, ["model.colour=1"])


def test_deep_merge_keeps_untouched_defaults():
    merged = deep_merge({"a": {"b": 1, "c": 2}, "d": 3}, {"a": {"b": 5}})
    assert merged == {"a": {"b": 5, "c": 2}, "d": 3}


def test_plain_conversion():
    import numpy as np

    out = plain({"x": np.float64(1.5), "z": 1 + 2j, "n": np.inf, "a": np.arange(2), "b": np.bool_(True)})
    assert out == {"x": 1.5, "z": {"re": 1.0, "im": 2.0}, "n": "inf", "a": [0, 1], "b": True}
    json.dumps(out)


@pytest.fixture(scope="module")
def limits_runs(tmp_path_factory):
    outs = []
    for k in range(2):
        d = tmp_path_factory.mktemp(f"limits{k}")
        r = hall_lab("run", CONFIGS / "limit-commutation.json", "--out", d)
        outs.append((r, d))
    return outs


def test_run_is_deterministic(limits_runs):
    (r1, d1), (r2, d2) = limits_runs
    assert r1.returncode == r2.returncode == 0, r1.stderr
    assert without_timings(d1 / "report.json") == without_timings(d2 / "report.json")
    for csv_file in d1.glob("*.csv"):
        assert csv_file.read_bytes() == (d2 / csv_file.name).read_bytes()


def test_report_layout(limits_runs):
    (_, d), _ = limits_runs
    rep = json.loads((d / "report.json").read_text())
    jsonschema.validate(rep, load_schema("report"))
    assert rep["schema_version"] == "1.0"
    assert rep["scenario"] == "limit-commutation"
    assert rep["inputs"]["model"]["U"] == 0.5
    assert all(set(r) == {"name", "value", "tolerance", "pass"} for r in rep["results"])
    assert rep["timings"]["total_seconds"] > 0


def test_tables_keep_full_precision(limits_runs):
    (_, d), _ = limits_runs
    rep = json.loads((d / "report.json").read_text())
    assert rep["diagnostics"]["tables"]
    for name in rep["diagnostics"]["tables"]:
        with open(d / f"{name}.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) >= 2
        floats = [v for row in rows[1:] for v in row if "." in v or "e" in v]
        assert floats and all(float(repr(float(v))) == float(v) for v in floats)
        # repr round-trips, so there are no truncated short decimals
        assert any(len(v) > 12 for v in floats)


def test_override_on_command_line(tmp_path):
    r = hall_lab("run", CONFIGS / "limit-commutation.json", "--out", tmp_path,
                 "--override", "numerics.sizes=[3]", "--override", "model.N=[2]")
    assert r.returncode == 0, r.stderr
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["inputs"]["numerics"]["sizes"] == [3]


def test_unknown_override_key_is_an_error(tmp_path):
    r = hall_lab("run", CONFIGS / "limit-commutation.json", "--out", tmp_path, "--override", "model.spin=2")
    assert r.returncode == 1
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["error"]["type"] == "ConfigurationError"


def test_tolerance_failure_exit_code(tmp_path):
    r = hall_lab("run", CONFIGS / "kubo-vs-curvature-traverse.json", "--out", tmp_path,
                 "--override", "numerics.tolerance=0.001")
    assert r.returncode == 2
    rep = json.loads((tmp_path / "report.json").read_text())
    assert not all(x["pass"] for x in rep["results"])
    assert "FAIL" in r.stdout


def test_closed_gap_reported_as_error():
    report, tables, code = run({"scenario": "limit-commutation"}, ["model.impurity=0", "numerics.sizes=[3]",
                                                                    "model.N=[2]"])
    assert code == 1 and tables == {}
    assert report["error"]["type"] == "AssumptionViolation"
    assert report["error"]["details"]["gap"] < 1e-6
    jsonschema.validate(json.loads(dumps(report)), load_schema("report"))


def test_capacity_reported_as_error():
    report, _, code = run({"scenario": "quantization", "model": {"engine": "many-body"},
                           "numerics": {"sizes": [8], "max_dim": 1000}})
    assert code == 1
    assert report["error"]["type"] == "CapacityError"


def test_plots_are_optional(tmp_path):
    pytest.importorskip("matplotlib")
    r = hall_lab("run", CONFIGS / "quantization.json", "--out", tmp_path, "--override", "numerics.plots=true",
                 "--override", "numerics.sizes=[4,8]")
    assert r.returncode in (0, 2), r.stderr
    assert list(tmp_path.glob("*.png"))
