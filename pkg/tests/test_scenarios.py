import pytest

from hall_lab.cli import run
from hall_lab.scenarios import SCENARIOS

SLOW = {"kubo-vs-curvature-bulk", "adiabatic-vs-kubo"}


@pytest.mark.parametrize("name", [pytest.param(n, marks=pytest.mark.slow) if n in SLOW else n for n in SCENARIOS])
def test_scenario_defaults_pass(name):
    report, tables, code = run({"scenario": name})
    failed = [r for r in report["results"] if not r["pass"]]
    assert code == 0, report.get("error") or failed
    assert report["results"] and report["statement"]
    assert set(tables) == set(report["diagnostics"]["tables"])


def test_locality_table_covers_every_radius():
    report, tables, _ = run({"scenario": "locality"})
    assert [row[0] for row in tables["r"]["rows"]][:3] == [0, 1, 2]


def test_gauge_scenario_exact_case():
    report, _, code = run({"scenario": "gauge-invariance"}, ["numerics.free_sizes=[4]"])
    assert code == 0
    exact = [r for r in report["results"] if r["name"].startswith("constant theta")]
    assert exact and all(r["value"] <= 1e-12 for r in exact)
