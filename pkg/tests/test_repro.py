import json

import numpy as np
import pytest

from geopower.repro import ITEMS, TABLE3_RATES, TABLE3_SIZES, Check, run_item


def test_reference_grid_shape():
    assert TABLE3_RATES.shape == (len(TABLE3_SIZES), 8)
    assert np.all(np.diff(TABLE3_RATES, axis=0) >= 0)


def test_check_verdicts():
    assert Check("x", 0.675, 0.68, 0.01).passed
    assert not Check("x", 2.1429, 2.11, 0.01).passed
    assert Check("x", 1.0, 1.0, 0.0).line().startswith("PASS")


@pytest.mark.parametrize("item", ["table1", "table2"])
def test_two_by_two_items(item, tmp_path, capsys):
    checks = run_item(item, tmp_path)
    names = {c.name: c for c in checks}
    assert names["X2"].passed
    report = json.loads((tmp_path / f"report_{item}.json").read_text())
    assert len(report) == len(checks)


def test_section5_small(tmp_path, capsys):
    checks = run_item("section5", tmp_path, n_sim=400)
    names = {c.name: c for c in checks}
    for key in ("max |MLE - closed form|", "X2", "G2", "classical power"):
        assert names[key].passed
    trace = (tmp_path / "section5_convergence.csv").read_text().splitlines()
    assert trace[0] == "dirichlet_alpha,sequence,replicate,running_rate"
    assert len(trace) == 1 + 2 * 3 * 4


def test_example3_small(tmp_path, capsys):
    checks = run_item("example3", tmp_path, n_sim=300)
    assert all(c.passed for c in checks if "non-increasing" in c.name)
    assert (tmp_path / "example3_geometric_power.csv").exists()


def test_items_listed():
    assert set(ITEMS) == {"table1", "table2", "example3", "section5", "table3"}
