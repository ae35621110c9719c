"""Basis correction for locally identified linear switched system submodels."""

from .errors import LSSError
from .graph import build_graph, chain_factorize, count_spanning_trees, is_connected, spanning_tree
from .local import cluster_estimates, synthesize_local
from .model import (
    DiscreteState,
    HybridInput,
    SimilarityTransform,
    SwitchedModel,
    SwitchingSequence,
    apply_similarity,
    example_model,
    feature_M,
    markov_parameter,
    state_transition,
    validate_model,
)
from .pe import check_pe, design_pe_input
from .pipeline import ExperimentConfig, cmd_run
from .signals import generate_input, generate_switching, simulate
from .transforms import (
    assemble_transitions,
    build_observability,
    compute_kappa,
    compute_zeta,
    correct_basis,
    estimate_state,
    solve_upsilon,
)

__version__ = "0.1.0"
