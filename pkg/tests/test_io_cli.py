import csv

import numpy as np
import pytest

from netlqr.cli import main, parse_sweep
from netlqr.errors import ParameterError, TopologyError
from netlqr.graph import build_topology
from netlqr.io import read_edge_list, read_fixture, read_matrix, write_edge_list, write_fixture, write_matrix
from netlqr.lqr import build_paper_system


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_matrix_round_trip_is_exact(tmp_path, rng):
    M = rng.standard_normal((4, 3)) * 10.0 ** rng.integers(-20, 20, (4, 3))
    write_matrix(tmp_path / "m.txt", M)
    assert np.array_equal(read_matrix(tmp_path / "m.txt"), M)
    (tmp_path / "bad.txt").write_text("2 2\n1 2\n3\n")
    with pytest.raises(ParameterError):
        read_matrix(tmp_path / "bad.txt")


def test_edge_list_round_trip_and_errors(tmp_path):
    g = build_topology("tree", depth=3)
    write_edge_list(g, tmp_path / "g.txt")
    h = read_edge_list(tmp_path / "g.txt")
    assert h.n == g.n and h.edges == g.edges
    (tmp_path / "c.txt").write_text("# comment\nn=3\n0 1  # first\n1 2\n")
    assert read_edge_list(tmp_path / "c.txt").edges == {(0, 1), (1, 2)}
    (tmp_path / "loop.txt").write_text("n=3\n1 1\n")
    with pytest.raises(TopologyError):
        read_edge_list(tmp_path / "loop.txt")
    (tmp_path / "range.txt").write_text("n=2\n0 5\n")
    with pytest.raises(ParameterError):
        read_edge_list(tmp_path / "range.txt")


def test_fixture_round_trip(tmp_path):
    sys = build_paper_system(build_topology("grid4", side=3), psi_scale=0.5, sigma0=0.2)
    write_fixture(tmp_path / "fx", sys, 0.5)
    back, psi = read_fixture(tmp_path / "fx")
    assert psi == 0.5 and back.sigma0 == 0.2
    assert back.topology.kind == "grid4" and back.topology.edges == sys.topology.edges
    for name in ("A", "B", "Q", "R", "Phi"):
        assert np.array_equal(getattr(back, name), getattr(sys, name))
    with pytest.raises(ParameterError):
        write_fixture(tmp_path / "bad", sys, 0.3)
    with pytest.raises(ParameterError):
        read_fixture(tmp_path / "missing")


def test_parse_sweep():
    assert parse_sweep("kappa=1,2,diam", 19) == ("kappa", [1, 2, 19])
    for bad in ("eta=1", "kappa", "r=30", "r=-1"):
        with pytest.raises(ParameterError):
            parse_sweep(bad, 19)


def test_run_is_byte_deterministic(tmp_path):
    args = ["run", "--topology", "line", "--n", "5", "--steps", "30", "--sweep", "kappa=1,diam", "--no-wall-time"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == ["K_kappa_1.txt", "K_kappa_4.txt", "summary.csv", "trace_kappa_1.csv", "trace_kappa_4.csv"]
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    rows = read_csv(tmp_path / "a" / "summary.csv")
    assert [r["sweep_value"] for r in rows] == ["1", "4"]
    assert all(r["status"] == "ok" and r["wall_time"] == "" for r in rows)
    trace = read_csv(tmp_path / "a" / "trace_kappa_4.csv")
    assert len(trace) == 31 and trace[-1]["rel_error_vs_opt"] == rows[1]["rel_error"]


def test_run_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "o")
    assert main(["run", "--n", "5", "--sweep", "kappa=9", "--out", out]) == 2
    assert main(["run", "--n", "5", "--eta", "5", "--steps", "3", "--out", out]) == 3
    rows = read_csv(tmp_path / "o" / "summary.csv")
    assert rows[0]["status"] == "unstable" and rows[0]["failure_step"] == "1"
    assert main(["run", "--topology", "custom:" + str(tmp_path / "nope.txt"), "--out", out]) == 2
    assert "error:" in capsys.readouterr().err


def test_partial_failure_keeps_other_runs(tmp_path):
    # eta=0.5 destabilizes the exact-gradient run but the r=0 run stays stable
    out = tmp_path / "o"
    assert main(["run", "--n", "5", "--eta", "0.5", "--steps", "20", "--sweep", "r=0,diam", "--out", str(out)]) == 0
    rows = read_csv(out / "summary.csv")
    assert [(r["status"], r["failure_step"]) for r in rows] == [("ok", ""), ("unstable", "1")]
    assert (out / "trace_r_0.csv").exists() and not (out / "trace_r_4.csv").exists()


def test_walks_slices_and_zeroth_power(tmp_path):
    out = tmp_path / "w"
    assert main(["walks", "--topology", "tree", "--depth", "4", "--t-fixed", "0", "--t-max", "8", "--out", str(out)]) == 0
    fixed_t = read_csv(out / "walks_fixed_t.csv")
    assert fixed_t[0]["kappa"] == "0" and fixed_t[0]["max_count"] == "1"
    assert all(r["max_count"] == "0" for r in fixed_t[1:])
    fixed_k = read_csv(out / "walks_fixed_kappa.csv")
    assert [int(r["t"]) for r in fixed_k] == list(range(9))
    assert "violations: 0" in (out / "walks_report.txt").read_text()


def test_walks_grid21_bound_holds(tmp_path):
    out = tmp_path / "w"
    assert main(["walks", "--topology", "grid4", "--side", "21", "--t-max", "20", "--out", str(out)]) == 0
    rows = read_csv(out / "walks_fixed_t.csv")
    assert rows and all(r["holds"] == "1" for r in rows)
    assert all(r["holds"] == "1" for r in read_csv(out / "walks_fixed_kappa.csv"))


@pytest.mark.parametrize("t", [4, 12, 20])
def test_walks_line99_margin_shape(tmp_path, t):
    # bound/count is log-convex in kappa and grows once kappa passes t/2
    out = tmp_path / "w"
    assert main(["walks", "--topology", "line", "--full-scale", "--t-fixed", str(t), "--out", str(out)]) == 0
    rows = [r for r in read_csv(out / "walks_fixed_t.csv") if int(r["max_count"]) > 0]
    kappa = np.array([int(r["kappa"]) for r in rows])
    log_margin = np.log([float(r["bound"]) / int(r["max_count"]) for r in rows])
    assert np.all(np.diff(log_margin, 2) >= -1e-9)
    tail = log_margin[kappa >= t / 2]
    assert np.all(np.diff(tail) >= -1e-12)


def test_certify_scalar_and_line(tmp_path, capsys):
    out = tmp_path / "c"
    assert main(["certify", "--n", "1", "--out", str(out), "--t-max", "5"]) == 0
    text = (out / "certificate.txt").read_text()
    assert "FAIL" not in text
    assert main(["certify", "--n", "20", "--out", str(out), "--t-max", "10"]) == 0
    text = capsys.readouterr().out
    assert "fitted rho=" in text and "product with D=" in text
    assert (out / "margins_K0.csv").exists() and (out / "ratios_K0.csv").exists()


def test_fixture_then_run_and_certify_from_run(tmp_path):
    fx, run, cert = tmp_path / "fx", tmp_path / "run", tmp_path / "cert"
    assert main(["fixture", "--topology", "cycle", "--n", "6", "--out", str(fx)]) == 0
    assert main(["run", "--fixture", str(fx), "--steps", "10", "--kappa", "1", "--r", "1", "--out", str(run)]) == 0
    assert main(["certify", "--fixture", str(fx), "--from-run", str(run), "--t-max", "4", "--out", str(cert)]) == 0
    text = (cert / "certificate.txt").read_text()
    assert "decay certificate: K0" in text and "decay certificate: K_run" in text
