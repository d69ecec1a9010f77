"""Exact finite-time ruin probabilities for Markov-modulated binomial risk models.

A library and CLI for the discrete-time surplus process with unit premium
income and integer claims driven by an ergodic background Markov chain.
Closed-form survival probabilities, ruin-time laws, first-passage
distributions and Lundberg fixed points are computed by several independent
routes (ballot-style formulas, multivariate Lagrangian inversion, dynamic
programming, seeded simulation) that cross-validate each other.
"""

from .algebra import ConvCache, conv_cache, convolve, nfold
from .ballot import ballot_conditional, joint_claim_prob
from .hitting import (
    HittingTable,
    LundbergSolution,
    dp_Q,
    dp_V,
    lundberg_G,
    lundberg_R,
    r_from_reversal,
)
from .model import (
    MatrixSeq,
    ModelSpec,
    ModelValidationError,
    StateDist,
    make_model,
    reverse,
    stationary_distribution,
    transition_matrix,
    validate,
)
from .montecarlo import (
    Estimate,
    SimConfig,
    estimate_ballot,
    estimate_hitting,
    estimate_survival,
    estimate_survival_curve,
    simulate_paths,
)
from .ruin import (
    RuinReport,
    dp_survival,
    phi_transform,
    ruin_time_dist,
    seal_survival,
    survival_report,
    takacs_survival,
)
from .series import (
    MultiSeries,
    SeriesMatrix,
    det_series,
    gamma_matrix,
    lagrange_Q,
    lagrange_V,
    lagrange_b,
    symbolic_pgf,
)

__version__ = "0.1.0"

__all__ = [
    "ConvCache",
    "Estimate",
    "HittingTable",
    "LundbergSolution",
    "MatrixSeq",
    "ModelSpec",
    "ModelValidationError",
    "MultiSeries",
    "RuinReport",
    "SeriesMatrix",
    "SimConfig",
    "StateDist",
    "ballot_conditional",
    "conv_cache",
    "convolve",
    "det_series",
    "dp_Q",
    "dp_V",
    "dp_survival",
    "estimate_ballot",
    "estimate_hitting",
    "estimate_survival",
    "estimate_survival_curve",
    "gamma_matrix",
    "joint_claim_prob",
    "lagrange_Q",
    "lagrange_V",
    "lagrange_b",
    "lundberg_G",
    "lundberg_R",
    "make_model",
    "nfold",
    "phi_transform",
    "r_from_reversal",
    "reverse",
    "ruin_time_dist",
    "seal_survival",
    "simulate_paths",
    "stationary_distribution",
    "survival_report",
    "symbolic_pgf",
    "takacs_survival",
    "transition_matrix",
    "validate",
]
