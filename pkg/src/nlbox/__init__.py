"""Compile non-signaling correlations into shared randomness and non-local boxes."""

from .embedding import Embedding, embed, exact_embedded_distribution
from .engine import (
    CompiledProtocol,
    SimulationReport,
    compile_full,
    exact_protocol_distribution,
    resource_report,
    run_monte_carlo,
)
from .errors import (
    InvalidPermutationError,
    NLBoxError,
    NoReductionError,
    RationalizeError,
    ResourceCapError,
    ResourceConsumedError,
    ResourceExhaustedError,
    ShapeError,
    SignalingError,
)
from .model import (
    ConditionalDistribution,
    ValidationReport,
    chsh_value,
    pr_box,
    rationalize,
    tv_distance,
    validate,
)
from .nlb_compile import circuit_exact_distribution, compile_d2
from .permutation import PermutationFamily, TableFamily, from_table, nlb, to_distribution
from .reduction import build_child, plan_cascade, rounds_needed, sim_distribution, success_bound

__version__ = "0.1.0"

__all__ = [
    "CompiledProtocol",
    "ConditionalDistribution",
    "Embedding",
    "InvalidPermutationError",
    "NLBoxError",
    "NoReductionError",
    "PermutationFamily",
    "RationalizeError",
    "ResourceCapError",
    "ResourceConsumedError",
    "ResourceExhaustedError",
    "ShapeError",
    "SignalingError",
    "SimulationReport",
    "TableFamily",
    "ValidationReport",
    "build_child",
    "chsh_value",
    "circuit_exact_distribution",
    "compile_d2",
    "compile_full",
    "embed",
    "exact_embedded_distribution",
    "exact_protocol_distribution",
    "from_table",
    "nlb",
    "plan_cascade",
    "pr_box",
    "rationalize",
    "resource_report",
    "rounds_needed",
    "run_monte_carlo",
    "sim_distribution",
    "success_bound",
    "to_distribution",
    "tv_distance",
    "validate",
]
