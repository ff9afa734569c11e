"""Command-line experiments: descent sweeps, walk-count tables, decay certificates, fixtures."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from netlqr.decay import _fit_walk_constants, _max_by_distance, certify
from netlqr.distributed import DescentConfig, run_descent
from netlqr.errors import NetLQRError, ParameterError, StabilityError
from netlqr.graph import CLOSED_FORM_KINDS, bound_params_for, build_topology, count_walks, neighborhoods, table1_bound
from netlqr.io import read_edge_list, read_fixture, read_matrix, write_fixture, write_matrix
from netlqr.lqr import build_paper_system, riccati_optimal, solve

log = logging.getLogger("netlqr")

DESK = {"line": 20, "cycle": 20, "tree": 5, "grid4": 5}
FULL = {"line": 99, "cycle": 99, "tree": 7, "grid4": 11}


def resolve_topology(args):
    spec = args.topology
    if spec.startswith("custom:"):
        return read_edge_list(spec.split(":", 1)[1])
    sizes = FULL if args.full_scale else DESK
    if spec in ("line", "cycle"):
        return build_topology(spec, args.n if args.n is not None else sizes[spec])
    if spec == "tree":
        return build_topology("tree", f=args.f, depth=args.depth if args.depth is not None else sizes["tree"])
    if spec == "grid4":
        return build_topology("grid4", side=args.side if args.side is not None else sizes["grid4"])
    raise ParameterError(f"unknown topology {spec!r}")


def resolve_system(args):
    if getattr(args, "fixture", None):
        system, _ = read_fixture(args.fixture)
        return system
    return build_paper_system(resolve_topology(args), a_diag=args.a_diag, psi_scale=args.psi_scale)


def parse_sweep(text, diameter):
    """``param=v1,v2,...`` with ``diam`` standing for the graph diameter."""
    name, sep, vals = text.partition("=")
    name = name.strip()
    if not sep or name not in ("kappa", "r"):
        raise ParameterError(f"--sweep expects kappa=... or r=..., got {text!r}")
    out = []
    for v in vals.split(","):
        v = v.strip()
        k = diameter if v in ("diam", "diameter") else int(v)
        if not 0 <= k <= diameter:
            raise ParameterError(f"sweep value {k} outside [0, diameter={diameter}]")
        out.append(k)
    if not out:
        raise ParameterError("--sweep needs at least one value")
    return name, out


def _run_one(job):
    system, cfg, c_opt = job
    t0 = time.perf_counter()
    try:
        ctrl, trace = run_descent(system, cfg, c_opt=c_opt)
    except StabilityError as exc:
        return None, None, time.perf_counter() - t0, exc.step, str(exc)
    return ctrl.data, trace, time.perf_counter() - t0, None, ""


def cmd_run(args):
    system = resolve_system(args)
    diam = system.nbr.diameter
    kappa = diam if args.kappa is None else args.kappa
    r = diam if args.r is None else args.r
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.sweep:
        param, values = parse_sweep(args.sweep, diam)
        pinned = "r" if param == "kappa" else "kappa"
        if getattr(args, pinned) not in (None, diam):
            log.warning("sweeping %s pins %s to the diameter %d", param, pinned, diam)
    else:
        param, values = None, [None]

    c_opt = solve(system, riccati_optimal(system).data).cost
    jobs = []
    for idx, v in enumerate(values):
        k_i, r_i = (v, diam) if param == "kappa" else (diam, v) if param == "r" else (kappa, r)
        cfg = DescentConfig(
            eta=args.eta, kappa=k_i, r=r_i, T=args.steps, guard_mode=args.guard,
            seed=args.seed + idx, sigma0=args.sigma0,
        )
        cfg.validate(diam)
        jobs.append((system, cfg, c_opt))

    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    failures = 0
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep_param", "sweep_value", "final_cost", "rel_error", "wall_time", "status", "failure_step"])
        for v, (K, trace, wall, fail_step, msg) in zip(values, results):
            tag = "run" if param is None else f"{param}_{v}"
            wall_s = "" if args.no_wall_time else f"{wall:.3f}"
            if trace is None:
                failures += 1
                log.error("%s: %s", tag, msg)
                w.writerow([param or "", "" if v is None else v, "", "", wall_s, "unstable", fail_step])
                continue
            trace.to_csv(out / f"trace_{tag}.csv")
            write_matrix(out / f"K_{tag}.txt", K)
            w.writerow([param or "", "" if v is None else v, repr(float(trace.array("cost")[-1])),
                        repr(float(trace.array("rel_error_vs_opt")[-1])), wall_s, "ok", ""])
            log.info("%s: rel_error %.3e", tag, trace.array("rel_error_vs_opt")[-1])
    print(f"wrote {len(values)} run(s) to {out} (C* = {c_opt:.10g})")
    if failures == len(values):
        return StabilityError.exit_code
    return 0


def _walk_cells(topo, r, t_max):
    nbr = neighborhoods(topo)
    table = count_walks(topo, r, t_max)
    return nbr, [(t, k, c) for t in range(t_max + 1) for k, c in enumerate(_max_by_distance(table.counts[t], nbr.dist, nbr.diameter))]


def cmd_walks(args):
    topo = resolve_topology(args)
    t_max = max(args.t_max, args.t_fixed)
    nbr, cells = _walk_cells(topo, args.walk_r, t_max)
    if topo.kind in CLOSED_FORM_KINDS and args.walk_r == 1:
        p = bound_params_for(topo)
        bound = lambda t, k: table1_bound(topo.kind, t, k, **p)  # noqa: E731
        source = "closed_form"
    else:
        C, D, rho = _fit_walk_constants(cells)
        bound = lambda t, k: C * D**t * rho**k  # noqa: E731
        source = "fitted"
    k_fixed = min(args.kappa_fixed, nbr.diameter)
    if k_fixed != args.kappa_fixed:
        log.warning("fixed kappa %d exceeds the diameter; using %d", args.kappa_fixed, k_fixed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["t", "kappa", "max_count", "bound", "holds"]
    slices = {
        "walks_fixed_t.csv": [c for c in cells if c[0] == args.t_fixed],
        "walks_fixed_kappa.csv": [c for c in cells if c[1] == k_fixed and c[0] <= t_max],
    }
    for name, rows in slices.items():
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t, k, c in rows:
                b = bound(t, k)
                w.writerow([t, k, c, repr(float(b)), int(c <= b)])
    violations = sum(1 for t, k, c in cells if c > bound(t, k))
    ok = violations == 0
    with open(out / "walks_report.txt", "w") as fh:
        fh.write(f"{topo!r} r={args.walk_r} t_max={t_max} constants={source}\n")
        fh.write(f"cells checked: {len(cells)}, violations: {violations}\n")
    print(f"walk bound {'holds' if ok else f'violated in {violations} cells'}; wrote {out}")
    return 0


def cmd_certify(args):
    system = resolve_system(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gains = [("K0", np.zeros((system.du, system.dx)))]
    if args.gain:
        gains.append((Path(args.gain).stem, read_matrix(args.gain)))
    if args.from_run:
        for p in sorted(Path(args.from_run).glob("K_*.txt")):
            gains.append((p.stem, read_matrix(p)))
    parts = []
    for label, K in gains:
        cert = certify(system, K, t_max=args.t_max, rho_target=args.rho_target, label=label)
        parts.append(cert.report())
        (out / f"margins_{label}.csv").write_text(cert.margins_csv())
        (out / f"ratios_{label}.csv").write_text(cert.ratios_csv())
    (out / "certificate.txt").write_text("\n".join(parts))
    print(parts[0] if len(parts) == 1 else "\n".join(parts), end="")
    return 0


def cmd_fixture(args):
    system = build_paper_system(resolve_topology(args), a_diag=args.a_diag, psi_scale=args.psi_scale)
    system = system.with_sigma0(args.sigma0)
    d = write_fixture(args.out, system, args.psi_scale)
    print(f"wrote fixture to {d}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--topology", default="line", help="line, cycle, tree, grid4 or custom:<edgefile>")
    common.add_argument("--n", type=int, default=None, help="agents for line/cycle")
    common.add_argument("--depth", type=int, default=None, help="levels of the tree")
    common.add_argument("--f", type=int, default=2, help="branching factor of the tree")
    common.add_argument("--side", type=int, default=None, help="side length of the grid")
    common.add_argument("--full-scale", action="store_true", help="use the large reference sizes")
    common.add_argument("--psi-scale", type=float, default=0.5)
    common.add_argument("--a-diag", type=int, default=0, choices=(0, 1))
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="out")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="netlqr", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", parents=[common], help="distributed policy-gradient descent")
    p.add_argument("--fixture", default=None, help="load the system from a fixture directory")
    p.add_argument("--kappa", type=int, default=None, help="communication range (default: diameter)")
    p.add_argument("--r", type=int, default=None, help="control range (default: diameter)")
    p.add_argument("--eta", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--sigma0", type=float, default=0.1, help="exploration level for the gradient")
    p.add_argument("--guard", choices=("fixed_eta", "theorem_guard"), default="fixed_eta")
    p.add_argument("--sweep", default=None, help="kappa=v1,v2,... or r=v1,v2,... ('diam' allowed)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-wall-time", action="store_true", help="leave wall_time blank for byte-stable output")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("walks", parents=[common], help="walk counts against closed-form bounds")
    p.add_argument("--walk-r", type=int, default=1, help="expansion radius of the walk graph")
    p.add_argument("--t-max", type=int, default=20)
    p.add_argument("--t-fixed", type=int, default=20)
    p.add_argument("--kappa-fixed", type=int, default=20)
    p.set_defaults(func=cmd_walks)

    p = sub.add_parser("certify", parents=[common], help="decay certificate for K(0) and optional gains")
    p.add_argument("--fixture", default=None)
    p.add_argument("--t-max", type=int, default=20)
    p.add_argument("--rho-target", type=float, default=None)
    p.add_argument("--gain", default=None, help="matrix file with an extra gain to certify")
    p.add_argument("--from-run", default=None, help="certify every K_*.txt in a run directory")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("fixture", parents=[common], help="write the benchmark system as a fixture")
    p.add_argument("--sigma0", type=float, default=0.0)
    p.set_defaults(func=cmd_fixture)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NetLQRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
