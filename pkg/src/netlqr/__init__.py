"""Distributed policy gradient for networked LQR under limited communication and control ranges."""

from netlqr.blocks import BlockLayout, BlockMatrix, SedFit, block_norms, fit_sed, project_Mr
from netlqr.decay import DecayCertificate, certify, lemma4_ratio_test, lemma5_check, sed_of_powers
from netlqr.distributed import (
    DescentConfig,
    DescentTrace,
    GuardParams,
    TruncatedQ,
    approx_gradient,
    approx_gradient_all,
    local_P,
    mc_gradient,
    run_descent,
    step_size_guard,
    truncated_q,
)
from netlqr.errors import (
    DegenerateInputError,
    NetLQRError,
    NumericalError,
    ParameterError,
    StabilityError,
    StabilizabilityError,
    TopologyError,
)
from netlqr.graph import (
    NeighborhoodIndex,
    Topology,
    WalkTable,
    build_topology,
    count_walks,
    expand_graph,
    neighborhoods,
    table1_bound,
)
from netlqr.kernels import BACKEND
from netlqr.lqr import (
    Controller,
    NetworkedSystem,
    SolutionCache,
    build_paper_system,
    cost,
    exact_gradient,
    make_system,
    riccati_optimal,
    solve,
    solve_lyapunov_P,
    solve_lyapunov_Xi,
    spectral_radius,
)

__version__ = "0.1.0"
