"""Entropic optimal transport with runtime-checkable convergence diagnostics.

Solvers (alternating and greedy dual ascent), rounding onto the transport
polytope, an exact transportation oracle for accuracy certificates, and a
benchmark CLI. The ``SinkhornSolver``/``GreenkhornSolver`` estimators expose
the solvers through the scikit-learn parameter protocol; the functional API
underneath mirrors them one to one.
"""

from .core import (
    CompactionMap,
    DualPotentials,
    GibbsKernel,
    Problem,
    TransportPlan,
    build_kernel,
    compact_zeros,
    dual_objective,
    embed_plan,
    kl_divergence,
    marginal_violations,
    plan_from_potentials,
    rho,
)
from .estimators import GreenkhornSolver, SinkhornSolver
from .exceptions import IdxFormatError, NumericalOverflowError, OracleError
from .greenkhorn import (
    GreenkhornAuditor,
    GreenkhornState,
    generalized_pinsker_check,
    greenkhorn_epsilon_solve,
    greenkhorn_solve,
)
from .oracle import Certificate, certify, exact_ot, network_simplex, reference_dual_optimum
from .rounding import certified_cost, round_to_polytope
from .sinkhorn import (
    EpsilonRun,
    IterationRecord,
    SinkhornAuditor,
    SinkhornConfig,
    SolveResult,
    lift_marginals,
    sinkhorn_epsilon_solve,
    sinkhorn_solve,
)
from .transforms import (
    c_gamma_bar_transform,
    c_gamma_transform,
    equicontinuity_check,
    oscillation,
)

__version__ = "0.1.0"

__all__ = [
    "Certificate",
    "CompactionMap",
    "DualPotentials",
    "EpsilonRun",
    "GibbsKernel",
    "GreenkhornAuditor",
    "GreenkhornSolver",
    "GreenkhornState",
    "IdxFormatError",
    "IterationRecord",
    "NumericalOverflowError",
    "OracleError",
    "Problem",
    "SinkhornAuditor",
    "SinkhornConfig",
    "SinkhornSolver",
    "SolveResult",
    "TransportPlan",
    "build_kernel",
    "c_gamma_bar_transform",
    "c_gamma_transform",
    "certified_cost",
    "certify",
    "compact_zeros",
    "dual_objective",
    "embed_plan",
    "equicontinuity_check",
    "exact_ot",
    "generalized_pinsker_check",
    "greenkhorn_epsilon_solve",
    "greenkhorn_solve",
    "kl_divergence",
    "lift_marginals",
    "marginal_violations",
    "network_simplex",
    "oscillation",
    "plan_from_potentials",
    "rho",
    "round_to_polytope",
    "sinkhorn_epsilon_solve",
    "sinkhorn_solve",
]
