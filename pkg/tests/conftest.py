import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from netlqr.blocks import BlockLayout, BlockMatrix, block_mask
from netlqr.graph import build_topology, neighborhoods
from netlqr.lqr import build_paper_system, make_system, spectral_radius

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DESK_TOPOLOGIES = {
    "line": dict(kind="line", n=20),
    "cycle": dict(kind="cycle", n=20),
    "tree": dict(kind="tree", depth=5),
    "grid4": dict(kind="grid4", side=5),
}

SMALL_TOPOLOGIES = {
    "line": dict(kind="line", n=7),
    "cycle": dict(kind="cycle", n=8),
    "tree": dict(kind="tree", depth=3),
    "grid4": dict(kind="grid4", side=3),
}


def make_topology(spec):
    spec = dict(spec)
    return build_topology(spec.pop("kind"), **spec)


def random_stabilizing_gain(sys, r, rng, target=0.95, scale=0.3):
    """Random K in M^r with spectral radius of A - BK below ``target``."""
    mask = block_mask(sys.ux_layout, r)
    for _ in range(200):
        K = np.where(mask, scale * rng.standard_normal((sys.du, sys.dx)), 0.0)
        if spectral_radius(sys.closed_loop(K)) < target:
            return K
        scale *= 0.7
    raise RuntimeError("could not draw a stabilizing gain")


def random_system(topology, rng, x_dims=None, u_dims=None, sigma0=0.0):
    """Random system obeying the sparsity rules, with rho(A) < 1."""
    nbr = neighborhoods(topology)
    n = topology.n
    x_dims = x_dims or (1,) * n
    u_dims = u_dims or (1,) * n
    xx = BlockLayout(x_dims, x_dims, nbr)
    xu = BlockLayout(x_dims, u_dims, nbr)
    uu = BlockLayout(u_dims, u_dims, nbr)
    A = np.where(block_mask(xx, 1), rng.standard_normal(xx.shape), 0.0)
    A *= 0.8 / max(spectral_radius(A), 1e-9)
    B = np.where(block_mask(xu, 0), rng.standard_normal(xu.shape), 0.0)
    G = np.where(block_mask(xx, 0), rng.standard_normal(xx.shape), 0.0)
    Q = G @ G.T + 0.5 * np.eye(xx.shape[0])
    H = np.where(block_mask(uu, 0), rng.standard_normal(uu.shape), 0.0)
    R = H @ H.T + 0.5 * np.eye(uu.shape[0])
    Phi = 0.5 * np.eye(xx.shape[0])
    return make_system(topology, A, B, Q, R, Phi, sigma0, x_dims=x_dims, u_dims=u_dims, nbr=nbr)


def random_sed(layout, c, gamma, rng, fill=1.0):
    """Block matrix whose block norms are at most ``c * gamma**dist``."""
    data = rng.uniform(-1, 1, layout.shape)
    X = np.zeros(layout.shape)
    dist = layout.nbr.dist
    for i in range(layout.n):
        for j in range(layout.n):
            blk = data[layout.rows(i), layout.cols(j)]
            nrm = np.linalg.norm(blk, 2)
            if nrm > 0:
                X[layout.rows(i), layout.cols(j)] = blk / nrm * c * gamma ** dist[i, j] * rng.uniform(fill, 1.0)
    return BlockMatrix(layout, X)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def line20():
    return build_paper_system(build_topology("line", 20))


@pytest.fixture(scope="session")
def line5():
    return build_paper_system(build_topology("line", 5))


@pytest.fixture(scope="session")
def scalar_sys():
    """a = 0.5, b = q = r = 1, Phi = 1."""
    return make_system(build_topology("line", 1), [[0.5]], [[1.0]], [[1.0]], [[1.0]], [[1.0]])


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion that ran."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(results):
        parts = results[crit]
        ok = all(p[1] for p in parts)
        failed = ", ".join(p[0] for p in parts if not p[1])
        line = f"criterion {crit}: {'PASS' if ok else 'FAIL'}"
        terminalreporter.write_line(line if ok else f"{line} (failing parts: {failed})")
        for part, pok, detail in parts:
            terminalreporter.write_line(f"    [{part}] {'PASS' if pok else 'FAIL'} {detail}")
