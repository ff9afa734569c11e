"""Plain-text formats for graphs, matrices and system fixtures.

Edge list::

    n=<count>
    i j
    ...

Matrix: a ``rows cols`` header then one whitespace-separated row per line.
Layout: ``n=<count>`` then one ``agent d_x d_u`` line per agent.
A fixture directory holds ``topology.txt``, ``layout.txt``, ``A.txt``,
``B.txt``, ``Q.txt``, ``R.txt`` and ``params.json`` (sigma0, psi_scale and
the topology kind).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from netlqr.errors import ParameterError, TopologyError
from netlqr.graph import Topology
from netlqr.lqr import make_system

__all__ = [
    "write_edge_list",
    "read_edge_list",
    "write_matrix",
    "read_matrix",
    "write_layout",
    "read_layout",
    "write_fixture",
    "read_fixture",
    "FIXTURE_FILES",
]

FIXTURE_FILES = ("topology.txt", "layout.txt", "A.txt", "B.txt", "Q.txt", "R.txt", "params.json")


def _content_lines(path):
    try:
        fh = open(path)
    except OSError as exc:
        raise ParameterError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                yield line


def _read_count(line, path):
    key, _, val = line.partition("=")
    if key.strip() != "n" or not val.strip().isdigit():
        raise ParameterError(f"{path}: expected header 'n=<count>', got {line!r}")
    return int(val)


def write_edge_list(topology, path):
    with open(path, "w") as fh:
        fh.write(f"n={topology.n}\n")
        for i, j in sorted(topology.edges):
            fh.write(f"{i} {j}\n")


def read_edge_list(path):
    lines = _content_lines(path)
    try:
        n = _read_count(next(lines), path)
    except StopIteration:
        raise ParameterError(f"{path}: empty edge list") from None
    edges = []
    for line in lines:
        parts = line.split()
        if len(parts) != 2:
            raise TopologyError(f"{path}: bad edge line {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return Topology.from_edges(n, edges, "custom")


def write_matrix(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_matrix(path):
    lines = _content_lines(path)
    try:
        rows, cols = (int(v) for v in next(lines).split())
    except (StopIteration, ValueError):
        raise ParameterError(f"{path}: expected header 'rows cols'") from None
    try:
        data = [[float(v) for v in line.split()] for line in lines]
    except ValueError:
        raise ParameterError(f"{path}: non-numeric matrix entry") from None
    if len(data) != rows or any(len(r) != cols for r in data):
        raise ParameterError(f"{path}: body does not match header {rows}x{cols}")
    return np.array(data, dtype=float).reshape(rows, cols)


def write_layout(path, x_dims, u_dims):
    with open(path, "w") as fh:
        fh.write(f"n={len(x_dims)}\n")
        for i, (dx, du) in enumerate(zip(x_dims, u_dims)):
            fh.write(f"{i} {dx} {du}\n")


def read_layout(path):
    lines = _content_lines(path)
    n = _read_count(next(lines), path)
    x_dims, u_dims = [0] * n, [0] * n
    seen = set()
    for line in lines:
        i, dx, du = (int(v) for v in line.split())
        if not 0 <= i < n or i in seen:
            raise ParameterError(f"{path}: bad agent index {i}")
        seen.add(i)
        x_dims[i], u_dims[i] = dx, du
    if len(seen) != n:
        raise ParameterError(f"{path}: expected {n} agents, found {len(seen)}")
    return tuple(x_dims), tuple(u_dims)


def write_fixture(directory, sys, psi_scale):
    """Write a system whose noise covariance is ``psi_scale * I``."""
    if not np.allclose(sys.Phi, psi_scale * np.eye(sys.dx), rtol=0, atol=1e-15):
        raise ParameterError("fixture format stores Phi as psi_scale * I only")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_edge_list(sys.topology, d / "topology.txt")
    write_layout(d / "layout.txt", sys.x_dims, sys.u_dims)
    for name in "ABQR":
        write_matrix(d / f"{name}.txt", getattr(sys, name))
    with open(d / "params.json", "w") as fh:
        meta = {"sigma0": sys.sigma0, "psi_scale": psi_scale, "kind": sys.topology.kind,
                "topology_params": sys.topology.param_dict}
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return d


def read_fixture(directory):
    d = Path(directory)
    missing = [f for f in FIXTURE_FILES if not (d / f).exists()]
    if missing:
        raise ParameterError(f"{d}: missing fixture files {missing}")
    topo = read_edge_list(d / "topology.txt")
    x_dims, u_dims = read_layout(d / "layout.txt")
    mats = {name: read_matrix(d / f"{name}.txt") for name in "ABQR"}
    with open(d / "params.json") as fh:
        params = json.load(fh)
    if params.get("kind", "custom") != "custom":
        topo = Topology.from_edges(topo.n, topo.edges, params["kind"], **params.get("topology_params", {}))
    psi = float(params["psi_scale"])
    Phi = psi * np.eye(sum(x_dims))
    return make_system(topo, mats["A"], mats["B"], mats["Q"], mats["R"], Phi, float(params.get("sigma0", 0.0)),
                       x_dims=x_dims, u_dims=u_dims), psi
