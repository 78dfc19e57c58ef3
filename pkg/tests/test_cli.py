import csv
import json

import numpy as np
import pytest

from geopower.cli import main, parse_floats, parse_sizes
from geopower.power import PowerTable


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_helpers(tmp_path):
    assert parse_floats("1/10,5,50") == [0.1, 5.0, 50.0]
    assert parse_sizes("200:260:20") == [200, 220, 240, 260]
    f = tmp_path / "c.txt"
    f.write_text("80\n12\n44\n64\n")
    assert parse_floats(str(f)) == [80, 12, 44, 64]


def test_mle_vaccine(capsys, tmp_path):
    js = tmp_path / "fit.json"
    code, out, _ = run(capsys, "mle", "--model", "vaccine", "--data", "80,12,44,64",
                       "--json", js)
    assert code == 0
    assert "fitted: 0.372667 0.145195 0.201764 0.280374" in out
    assert json.loads(js.read_text())["gamma"] == pytest.approx(1.045555, abs=1e-6)


def test_mle_saturated_model_file(capsys, tmp_path):
    path = tmp_path / "sat.json"
    path.write_text(json.dumps({"design": [[1, 0], [0, 1]]}))
    code, out, _ = run(capsys, "mle", "--model", path, "--data", "3,7")
    assert code == 0 and "fitted: 0.300000 0.700000" in out


def test_mle_trace_and_kernel(capsys, tmp_path):
    tr = tmp_path / "trace.csv"
    code, out, _ = run(capsys, "mle", "--model", "indep2x2", "--data", "1,9,9,33",
                       "--trace", tr, "--emit-kernel")
    assert code == 0 and "kernel:" in out
    rows = list(csv.DictReader(tr.open()))
    assert list(rows[0]) == ["iter", "residual_mean", "residual_dual", "bregman"]
    br = [float(r["bregman"]) for r in rows]
    assert all(b <= a + 1e-12 for a, b in zip(br, br[1:]))
    assert max(float(r["residual_dual"]) for r in rows) < 1e-8


def test_mle_zero_statistic_exit_2(capsys):
    code, _, err = run(capsys, "mle", "--model", "vaccine", "--data", "5,0,0,0")
    assert code == 2 and "ZeroSufficientStatistic" in err


@pytest.mark.parametrize("argv", [
    ("mle", "--model", "vaccine", "--data", "1,2,3"),
    ("mle", "--model", "nosuch.json", "--data", "1,2,3,4"),
    ("mle", "--model", "vaccine", "--data", "1,-2,3,4"),
    ("power", "geometric", "--model", "indep2x2", "--odds", "-1"),
    ("repro", "nothing"),
])
def test_input_errors_exit_1(capsys, argv, tmp_path):
    if argv[0] == "repro":
        argv = argv + ("--out", str(tmp_path))
    code, _, _ = run(capsys, *argv)
    assert code == 1


def test_gof_vaccine(capsys):
    code, out, _ = run(capsys, "gof", "--model", "vaccine", "--data", "80,12,44,64")
    assert code == 0
    vals = dict(line.split(": ", 1) for line in out.strip().splitlines())
    assert float(vals["x2"]) == pytest.approx(11.85, abs=0.01)
    assert float(vals["g2"]) == pytest.approx(14.65, abs=0.01)
    assert vals["df"] == "2"
    assert vals["observed_odds"] == "7.822222 0.396694"


def test_gof_perfect_fit(capsys):
    code, out, _ = run(capsys, "gof", "--model", "indep2x2", "--data", "4,6,6,9")
    assert code == 0 and "x2: 0.000000" in out and "p_value: 1.000000" in out


def test_power_table_target(capsys, tmp_path):
    code, out, _ = run(capsys, "power", "table", "--model", "vaccine", "--xi", "1/3,1,1,3",
                       "--n", "200:240:20", "--alpha", "0.05,0.1", "--nsim", "300",
                       "--target", "0.999", "--out", tmp_path)
    assert code == 0
    assert "minimal N = not reached" in out
    table = PowerTable.read(tmp_path / "power_table.csv")
    assert len(table.rows) == 6 and table.metadata["model"] == "vaccine"


def test_power_posteriori(capsys, tmp_path):
    code, out, _ = run(capsys, "power", "posteriori", "--model", "vaccine",
                       "--data", "80,12,44,64", "--nsim", "500", "--out", tmp_path)
    assert code == 0
    rate = PowerTable.read(tmp_path / "power_posteriori.csv").rows[0].rate
    assert 0.8 < rate < 1.0


def test_power_partial_failure_exit_3(capsys, tmp_path, monkeypatch):
    import geopower.cli as cli
    from geopower.scaling import ScalingConfig
    starved = ScalingConfig(max_inner_iters=2)
    real = cli.power_table
    monkeypatch.setattr(cli, "power_table",
                        lambda *a, jobs=1: real(*a, cfg=starved, jobs=jobs))
    code, _, err = run(capsys, "power", "cumulative", "--model", "vaccine", "--xi",
                       "1/2,1,1,2", "--n", "100", "--nsim", "20", "--out", tmp_path)
    assert code == 3 and "replicates failed" in err


def _geometric(capsys, out_dir, jobs):
    code, _, _ = run(capsys, "power", "geometric", "--model", "indep2x2",
                     "--odds", "1/10", "--odds", "5", "--odds", "50",
                     "--epsilon", "0.1,0.2,0.3,0.4", "--nsim", "2500", "--seed", "77",
                     "--jobs", jobs, "--out", out_dir)
    assert code == 0
    return (out_dir / "geometric_power.csv").read_bytes()


def test_geometric_csv_deterministic_across_jobs(capsys, tmp_path):
    a = _geometric(capsys, tmp_path / "a", 1)
    b = _geometric(capsys, tmp_path / "b", 4)
    c = _geometric(capsys, tmp_path / "c", 1)
    assert a == b == c
    rows = list(csv.DictReader(line for line in a.decode().splitlines()
                               if not line.startswith("#")))
    for label in ("odds=0.1", "odds=5", "odds=50"):
        rates = [float(r["rate"]) for r in rows if r["offset_label"] == label]
        assert all(x >= y for x, y in zip(rates, rates[1:]))


def test_sample_alt(capsys, tmp_path):
    path = tmp_path / "alt.csv"
    code, _, _ = run(capsys, "sample-alt", "--model", "indep2x2", "--odds", "5",
                     "--count", "5", "--out-file", path)
    assert code == 0
    pts = np.loadtxt(path, delimiter=",", skiprows=1)
    assert pts.shape == (5, 4)
    np.testing.assert_allclose(pts[:, 0] * pts[:, 3] / (pts[:, 1] * pts[:, 2]), 5.0, rtol=1e-6)


def test_repro_table1(capsys, tmp_path):
    code, out, _ = run(capsys, "repro", "table1", "--out", tmp_path)
    assert code == 0
    assert "PASS  X2" in out
    assert (tmp_path / "report_table1.txt").exists()
