"""Stage-level learning dynamics driven by exact contention states.

Three procedures are provided: the best-response update, the clamped
gradient-play update, and the adaptive outer loop that shrinks every belief
slope by a common factor until the network is efficient enough.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Literal, Sequence

import numpy as np

from .errors import ConjmacError, DimensionError
from .game import InterferenceGraph, _contention, as_profile

Kind = Literal["best_response", "gradient_play"]
StopRule = Literal["sum_p_near_one", "aggregate_throughput_peak"]

DEFAULT_TOL = 1e-8
SUM_P_EPS = 0.02


def br_step(probs, slopes, graph: InterferenceGraph) -> np.ndarray:
    """One synchronous best-response stage: p <- min(p/2 + s/(2a), 1)."""
    p = as_profile(probs, graph)
    a = _slopes(slopes, graph)
    return np.minimum(p / 2.0 + _contention(p, graph.adjacency) / (2.0 * a), 1.0)


def gp_step(probs, slopes, stepsize: float, graph: InterferenceGraph) -> np.ndarray:
    """One synchronous gradient-play stage, clamped to [0, 1]."""
    if not stepsize > 0:
        raise ConjmacError("gradient-play stepsize must be positive")
    p = as_profile(probs, graph)
    a = _slopes(slopes, graph)
    return np.clip(p + stepsize * (_contention(p, graph.adjacency) - a * p), 0.0, 1.0)


def _slopes(slopes, graph: InterferenceGraph) -> np.ndarray:
    a = np.asarray(slopes, dtype=float)
    if a.shape != (graph.node_count,):
        raise DimensionError(f"slopes have shape {a.shape}, expected ({graph.node_count},)")
    if np.any(~(a > 0)):
        raise ConjmacError("belief slopes must be strictly positive")
    return a


def safe_stepsize(slopes, graph: InterferenceGraph | None = None) -> float:
    """Default gradient-play stepsize 0.5 / max_k a_k (1 + sum_{i in I_k} 1/a_i).

    With this choice the weighted-norm contraction factor of the gradient
    map stays below one whenever the slope-sum condition holds.
    """
    a = np.asarray(slopes, dtype=float)
    if graph is None:
        graph = InterferenceGraph.single_cell(a.size)
    inv_sum = graph.adjacency.astype(float) @ (1.0 / a)
    return float(0.5 / np.max(a * (1.0 + inv_sum)))


def conjectured_utility(p_now, p_prev, s_prev, slopes) -> np.ndarray:
    """Stage utility p^t [s^{t-1} - a (p^t - p^{t-1})] with references at the previous stage."""
    return p_now * (s_prev - slopes * (p_now - p_prev))


@dataclass
class LearnerConfig:
    slopes: np.ndarray
    initial_profile: np.ndarray
    stepsize: float | None = None  # gradient play only; None -> safe_stepsize
    discount: float = 0.05  # adaptive outer loop only
    max_stages: int = 1000
    convergence_tol: float = DEFAULT_TOL

    def __post_init__(self):
        self.slopes = np.asarray(self.slopes, dtype=float)
        self.initial_profile = as_profile(self.initial_profile)
        if self.slopes.shape != self.initial_profile.shape:
            raise DimensionError("slopes and initial profile differ in length")
        if np.any(~(self.slopes > 0)):
            raise ConjmacError("belief slopes must be strictly positive")
        if self.stepsize is not None and not self.stepsize > 0:
            raise ConjmacError("stepsize must be strictly positive")
        if not 0 <= self.discount < 1:
            raise ConjmacError("discount must lie in [0, 1)")
        if self.max_stages < 1:
            raise ConjmacError("max_stages must be positive")
        if self.convergence_tol < 0:
            raise ConjmacError("convergence_tol must be non-negative")


@dataclass
class Trajectory:
    """Per-stage record of a learning run.

    Row t of each array belongs to stage t; stage 0 is the initial profile,
    whose conjectured utility is undefined and stored as NaN.
    """

    profiles: np.ndarray
    utilities: np.ndarray
    states: np.ndarray
    converged: bool
    stages_to_converge: int | None
    kind: str = "best_response"
    slopes: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def final(self) -> np.ndarray:
        return self.profiles[-1]

    @property
    def n_stages(self) -> int:
        return self.profiles.shape[0] - 1

    @property
    def stages(self) -> Iterator[tuple[int, np.ndarray, np.ndarray, np.ndarray]]:
        for t in range(self.profiles.shape[0]):
            yield t, self.profiles[t], self.utilities[t], self.states[t]


def run(kind: Kind, config: LearnerConfig, graph: InterferenceGraph) -> Trajectory:
    """Iterate one learning rule until the stage-to-stage max change drops below tol."""
    if kind not in ("best_response", "gradient_play"):
        raise ConjmacError(f"unknown learning rule {kind!r}")
    a = _slopes(config.slopes, graph)
    p = as_profile(config.initial_profile, graph)
    adj = graph.adjacency
    gamma = config.stepsize if config.stepsize is not None else safe_stepsize(a, graph)

    profiles = [p]
    states = [_contention(p, adj)]
    utilities = [np.full(p.size, np.nan)]
    converged, hit = False, None
    for t in range(1, config.max_stages + 1):
        s_prev = states[-1]
        if kind == "best_response":
            new = np.minimum(p / 2.0 + s_prev / (2.0 * a), 1.0)
        else:
            new = np.clip(p + gamma * (s_prev - a * p), 0.0, 1.0)
        utilities.append(conjectured_utility(new, p, s_prev, a))
        states.append(_contention(new, adj))
        profiles.append(new)
        if np.max(np.abs(new - p)) < config.convergence_tol:
            converged, hit = True, t
            break
        p = new
    return Trajectory(
        np.array(profiles), np.array(utilities), np.array(states), converged, hit, kind, a.copy()
    )


@dataclass
class AdaptiveResult:
    """Converged inner-loop equilibria of the adaptive outer loop, one per slope vector."""

    steps: list[tuple[np.ndarray, Trajectory]]
    stop_reason: str
    objective_values: list[float] = field(default_factory=list)

    def __iter__(self):
        return iter(self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    @property
    def failed(self) -> bool:
        return self.stop_reason == "inner_not_converged"

    @property
    def best_index(self) -> int:
        """Outer iteration with the highest objective (the throughput peak)."""
        return int(np.argmax(self.objective_values))


def aggregate_throughput(probs, graph: InterferenceGraph) -> float:
    p = np.asarray(probs, dtype=float)
    return float(np.sum(p * _contention(p, graph.adjacency)))


def run_adaptive(
    kind: Kind,
    config: LearnerConfig,
    graph: InterferenceGraph,
    stop: StopRule = "sum_p_near_one",
    *,
    sum_eps: float = SUM_P_EPS,
    max_outer: int = 2000,
    objective: Callable[[np.ndarray], float] | None = None,
    update_phase: Sequence[int] | None = None,
) -> AdaptiveResult:
    """Shrink all slopes by (1 - discount) between inner-loop convergences.

    The inner loop warm-starts from the previous equilibrium. ``objective``
    maps a profile to the aggregate throughput watched by the peak rule
    (default: slotted throughput sum). ``update_phase[k]`` delays node k's
    first slope update by that many outer iterations.
    """
    if stop not in ("sum_p_near_one", "aggregate_throughput_peak"):
        raise ConjmacError(f"unknown stop rule {stop!r}")
    objective = objective or (lambda p: aggregate_throughput(p, graph))
    a = _slopes(config.slopes, graph).copy()
    phase = np.zeros(a.size, dtype=int) if update_phase is None else np.asarray(update_phase, int)
    if phase.shape != a.shape or np.any(phase < 0):
        raise ConjmacError("update_phase needs one non-negative offset per node")
    delta = config.discount
    start = config.initial_profile

    steps: list[tuple[np.ndarray, Trajectory]] = []
    values: list[float] = []
    for it in range(max_outer):
        inner = LearnerConfig(
            a.copy(), start, config.stepsize, delta, config.max_stages, config.convergence_tol
        )
        traj = run(kind, inner, graph)
        steps.append((a.copy(), traj))
        values.append(float(objective(traj.final)))
        if not traj.converged:
            return AdaptiveResult(steps, "inner_not_converged", values)
        if delta == 0:
            return AdaptiveResult(steps, "no_discount", values)
        if stop == "sum_p_near_one" and traj.final.sum() >= 1.0 - sum_eps:
            return AdaptiveResult(steps, "sum_p_near_one", values)
        if stop == "aggregate_throughput_peak" and len(values) > 1 and values[-1] < values[-2]:
            return AdaptiveResult(steps, "aggregate_throughput_peak", values)
        a = np.where(phase <= it, a * (1.0 - delta), a)
        start = traj.final
    return AdaptiveResult(steps, "max_outer", values)


def join_leave_adapt(event: Literal["nodes_joined", "nodes_left"], slopes, delta: float) -> np.ndarray:
    """Scale every slope by (1 + delta) when nodes join and by (1 - delta) when they leave."""
    if not 0 < delta < 1:
        raise ConjmacError("delta must lie in (0, 1)")
    a = np.asarray(slopes, dtype=float)
    if event == "nodes_joined":
        return a * (1.0 + delta)
    if event == "nodes_left":
        return a * (1.0 - delta)
    raise ConjmacError(f"unknown membership event {event!r}")


def random_initial_profiles(seed: int, n: int, k: int) -> np.ndarray:
    """``n`` uniform starting profiles drawn from a seeded generator."""
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(n, k))
