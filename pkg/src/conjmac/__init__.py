"""Conjecture-based distributed learning for slotted random-access networks."""
from . import dynamics, game, hetero, stability
from .errors import (
    BoundaryPointError,
    ConjmacError,
    DegenerateTargetError,
    DimensionError,
    EstimatorUndefinedError,
    HypothesisViolation,
    ScenarioError,
)
from .game import (
    BeliefConfig,
    InterferenceGraph,
    NodePlacement,
    belief_at,
    best_response,
    best_response_point,
    ce_slopes_for_target,
    contention_state,
    cw_of_p,
    graph_from_placement,
    p_of_cw,
    throughput,
    verify_ce,
)

__version__ = "0.1.0"
