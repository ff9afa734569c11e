import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SMALL_TOPOLOGIES, make_topology, random_stabilizing_gain, random_system
from netlqr.blocks import BlockMatrix, block_norms
from netlqr.decay import (
    certify,
    lemma4_ratio_test,
    lemma5_check,
    projection_loss,
    sed_of_powers,
)
from netlqr.errors import ParameterError, StabilityError
from netlqr.graph import build_topology, count_walks
from netlqr.lqr import build_paper_system, make_system


def loop_ratios(sys, K, t_max):
    """Shell ratios by explicit loops over (t, j, k)."""
    M = sys.closed_loop(K)
    dist = sys.nbr.dist
    out = np.full((t_max, sys.nbr.diameter), np.nan)
    P = np.eye(sys.dx)
    for t in range(t_max):
        P = P @ M
        norms, _ = block_norms(BlockMatrix(sys.xx_layout, P))
        for k in range(sys.nbr.diameter):
            vals = []
            for j in range(sys.n):
                den = [norms[i, j] for i in range(sys.n) if dist[i, j] == k and norms[i, j] >= 1e-13]
                if not den:
                    continue
                num = [norms[i, j] for i in range(sys.n) if dist[i, j] == k + 1]
                vals.append(max(num, default=0.0) / min(den))
            if vals:
                out[t, k] = max(vals)
    return out


def test_diagonal_loop_is_vacuous_pass():
    sys = make_system(build_topology("line", 4), np.diag([0.5, 0.2, 0.1, 0.3]), *[np.eye(4)] * 4)
    res = lemma4_ratio_test(sys, np.zeros((4, 4)), t_max=5)
    assert res.passed and res.vacuous
    assert res.worst[0] == 0 and np.all(np.isnan(res.worst[1:]))


def test_ratio_test_target_flag():
    sys = build_paper_system(build_topology("line", 20), a_diag=1)
    K = np.zeros((20, 20))
    res = lemma4_ratio_test(sys, K)
    assert res.rho_fit > 1 and not res.passed
    assert not lemma4_ratio_test(sys, K, rho_target=0.5).passed
    assert lemma4_ratio_test(sys, K, rho_target=3.0).passed
    with pytest.raises(ParameterError):
        lemma4_ratio_test(sys, K, t_max=0)
    with pytest.raises(StabilityError):
        lemma4_ratio_test(sys, -2 * np.eye(20))


@settings(max_examples=15)
@given(st.sampled_from(sorted(SMALL_TOPOLOGIES)), st.integers(0, 2**31))
def test_ratio_scan_matches_loops(name, seed):
    rng = np.random.default_rng(seed)
    sys = random_system(make_topology(SMALL_TOPOLOGIES[name]), rng)
    K = random_stabilizing_gain(sys, 1, rng)
    res = lemma4_ratio_test(sys, K, t_max=4)
    ref = loop_ratios(sys, K, 4)
    assert np.array_equal(np.isnan(res.worst_by_t), np.isnan(ref))
    assert np.allclose(np.nan_to_num(res.worst_by_t), np.nan_to_num(ref), rtol=1e-12)


@pytest.mark.parametrize("kind, kw", [("line", dict(n=20)), ("tree", dict(depth=5)), ("grid4", dict(side=5))])
def test_closed_form_walk_bound_holds(kind, kw):
    topo = build_topology(kind, **kw)
    sys = build_paper_system(topo)
    res = lemma5_check(sys, np.zeros((topo.n, topo.n)), t_max=20)
    assert res.source == "closed_form" and res.r == 1
    assert res.bound_holds
    assert len(res.margins) == 21 * (sys.nbr.diameter + 1)
    counts = count_walks(topo, 1, 20).counts
    t, k, c, b, _ = max(res.margins, key=lambda m: m[2])
    assert c == counts[t][sys.nbr.dist == k].max()
    assert b == pytest.approx(res.C * res.D**t * res.rho**k)


def test_cycle_walk_bound_is_reported_not_raised():
    # closed-form C = e/(2n) is below the single walk of length zero
    sys = build_paper_system(build_topology("cycle", 20))
    res = lemma5_check(sys, np.zeros((20, 20)), t_max=5)
    assert not res.bound_holds
    assert res.rho == pytest.approx(1 / math.e) and res.rho_tabulated == pytest.approx(math.exp(-0.5))
    t0 = [m for m in res.margins if m[0] == 0 and m[1] == 0][0]
    assert t0[2] == 1 and not t0[4]


def test_fitted_walk_constants_are_valid():
    sys = build_paper_system(build_topology("tree", depth=4))
    res = lemma5_check(sys, np.zeros((sys.n, sys.n)), t_max=12, r=2)
    assert res.source == "fitted" and res.bound_holds
    assert 0 < res.rho < 1
    custom = lemma5_check(sys, np.zeros((sys.n, sys.n)), topology_kind="custom", t_max=12)
    assert custom.source == "fitted" and custom.bound_holds


def test_product_condition_is_reported():
    sys = build_paper_system(build_topology("line", 10))
    res = lemma5_check(sys, np.zeros((10, 10)), t_max=5)
    assert res.product == pytest.approx(res.overline * res.D)
    assert res.product_holds == (res.product <= 1)


def test_sed_of_powers_examples(line20):
    res = sed_of_powers(line20, np.zeros((20, 20)), t_max=6)
    assert res.fits[0].c == pytest.approx(1)
    assert res.gradient_decays and res.gradient.gamma < 1
    nil = make_system(build_topology("line", 2), [[0.4, 0.2], [0.2, 0.3]], *[np.eye(2)] * 4)
    res = sed_of_powers(nil, nil.A.copy(), t_max=3)
    assert res.vacuous == (1, 2, 3)
    with pytest.raises(ParameterError):
        sed_of_powers(nil, nil.A, t_max=-1)


def test_projection_loss_shrinks_with_radius(line20):
    loss = projection_loss(line20, np.zeros((20, 20)), range(20))
    assert np.all(np.diff(loss) <= 1e-15)
    assert loss[-1] == 0 and loss[0] > 0
    live = loss[loss > 1e-300]
    slope = np.polyfit(np.arange(live.size), np.log(live), 1)[0]
    assert slope < 0


def test_certificate_outputs(line5):
    cert = certify(line5, np.zeros((5, 5)), t_max=6, label="line5")
    text = cert.report()
    assert text.startswith("decay certificate: line5")
    assert "[ratio test]" in text and "[walk bound]" in text and "[SED of powers]" in text
    rows = list(csv.DictReader(io.StringIO(cert.margins_csv())))
    assert len(rows) == 7 * 5
    for row in rows:
        assert int(row["holds"]) == (int(row["max_count"]) <= float(row["bound"]))
    ratios = list(csv.DictReader(io.StringIO(cert.ratios_csv())))
    assert len(ratios) == 6 * 4
