"""Random access game: topology, payoffs, linear beliefs and CE checks.

Action profiles are plain float64 arrays of per-node transmission
probabilities. Node ids are 0-based throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DegenerateTargetError, DimensionError, ConjmacError

# Above this many interferers, contention products are taken in log space.
LOG_PRODUCT_THRESHOLD = 64


@dataclass(frozen=True)
class InterferenceGraph:
    """Directed interference relation between K links.

    ``in_sets[k]`` holds the links whose transmitters disturb the receiver
    of link k (I_k); ``out_sets[k]`` holds the links whose receivers link k
    disturbs (O_k). The two families are transposes of each other.
    """

    node_count: int
    in_sets: tuple[frozenset[int], ...]
    out_sets: tuple[frozenset[int], ...] = field(init=False, repr=False)
    # adjacency[k, i] is True iff i is in I_k
    adjacency: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.node_count < 1:
            raise ConjmacError("node_count must be positive")
        if len(self.in_sets) != self.node_count:
            raise DimensionError(
                f"expected {self.node_count} interferer sets, got {len(self.in_sets)}"
            )
        in_sets = tuple(frozenset(int(i) for i in s) for s in self.in_sets)
        adj = np.zeros((self.node_count, self.node_count), dtype=bool)
        for k, s in enumerate(in_sets):
            for i in s:
                if not 0 <= i < self.node_count:
                    raise ConjmacError(f"node {k} lists unknown interferer {i}")
                if i == k:
                    raise ConjmacError(f"node {k} lists itself as an interferer")
                adj[k, i] = True
        adj.setflags(write=False)
        out_sets = tuple(frozenset(np.flatnonzero(adj[:, i]).tolist()) for i in range(self.node_count))
        object.__setattr__(self, "in_sets", in_sets)
        object.__setattr__(self, "out_sets", out_sets)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def single_cell(cls, k: int) -> "InterferenceGraph":
        everyone = frozenset(range(k))
        return cls(k, tuple(everyone - {n} for n in range(k)))

    @classmethod
    def from_edges(cls, k: int, edges: Iterable[tuple[int, int]], symmetric: bool = True):
        """Build from (victim, interferer) pairs; ``symmetric`` adds the reverse pairs."""
        sets: list[set[int]] = [set() for _ in range(k)]
        for victim, source in edges:
            sets[victim].add(source)
            if symmetric:
                sets[source].add(victim)
        return cls(k, tuple(frozenset(s) for s in sets))

    @property
    def is_single_cell(self) -> bool:
        return bool(self.adjacency.sum() == self.node_count * (self.node_count - 1))

    @property
    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.adjacency, self.adjacency.T))

    def in_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def out_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=0)

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) listing I_k in compressed-row form, as int64."""
        indptr = np.zeros(self.node_count + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(self.adjacency.sum(axis=1))
        indices = np.concatenate(
            [np.flatnonzero(row) for row in self.adjacency] + [np.empty(0, dtype=np.int64)]
        ).astype(np.int64)
        return indptr, indices

    def to_dict(self) -> dict:
        return {"node_count": self.node_count, "in_sets": [sorted(s) for s in self.in_sets]}


@dataclass(frozen=True)
class BeliefConfig:
    """Linear beliefs s~_k(p_k) = ref_state_k - slope_k * (p_k - ref_action_k)."""

    slopes: np.ndarray
    ref_state: np.ndarray
    ref_action: np.ndarray

    def __post_init__(self):
        slopes = np.asarray(self.slopes, dtype=float)
        ref_state = np.asarray(self.ref_state, dtype=float)
        ref_action = np.asarray(self.ref_action, dtype=float)
        if not (slopes.shape == ref_state.shape == ref_action.shape) or slopes.ndim != 1:
            raise DimensionError("belief vectors must be 1-D and of equal length")
        if np.any(~(slopes > 0)):
            raise ConjmacError("belief slopes must be strictly positive")
        for name, v in (("ref_state", ref_state), ("ref_action", ref_action)):
            if np.any((v < 0) | (v > 1)) or np.any(np.isnan(v)):
                raise ConjmacError(f"{name} entries must lie in [0, 1]")
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "ref_state", ref_state)
        object.__setattr__(self, "ref_action", ref_action)

    def __len__(self) -> int:
        return self.slopes.size

    def conjectured_state(self, probs) -> np.ndarray:
        probs = np.asarray(probs, dtype=float)
        return self.ref_state - self.slopes * (probs - self.ref_action)


@dataclass(frozen=True)
class NodePlacement:
    """Link positions in metres and the interference distance D_th."""

    positions: np.ndarray
    threshold: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if not self.threshold > 0:
            raise ConjmacError("interference threshold must be positive")
        if pos.shape[0] < 1:
            raise ConjmacError("a placement needs at least one node")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "threshold", float(self.threshold))

    @property
    def node_count(self) -> int:
        return self.positions.shape[0]


def as_profile(probs, graph: InterferenceGraph | None = None) -> np.ndarray:
    """Validate and copy an action profile into a float64 array."""
    p = np.array(probs, dtype=float, ndmin=1)
    if p.ndim != 1:
        raise DimensionError("an action profile is a 1-D vector")
    if graph is not None and p.size != graph.node_count:
        raise DimensionError(f"profile has {p.size} entries, topology has {graph.node_count} nodes")
    if np.any(np.isnan(p)) or np.any((p < 0) | (p > 1)):
        raise ConjmacError("transmission probabilities must lie in [0, 1]")
    return p


def _check_len(vec, graph: InterferenceGraph, what: str) -> np.ndarray:
    v = np.asarray(vec, dtype=float)
    if v.shape != (graph.node_count,):
        raise DimensionError(f"{what} has shape {v.shape}, expected ({graph.node_count},)")
    return v


def contention_state(probs, graph: InterferenceGraph) -> np.ndarray:
    """Probability that no interferer of each node transmits: prod_{i in I_k} (1 - p_i)."""
    p = as_profile(probs, graph)
    return _contention(p, graph.adjacency)


def _contention(p: np.ndarray, adjacency: np.ndarray) -> np.ndarray:
    q = 1.0 - p
    if adjacency.shape[0] <= LOG_PRODUCT_THRESHOLD:
        return np.prod(np.where(adjacency, q[None, :], 1.0), axis=1)
    zero = q <= 0.0
    logq = np.log(np.where(zero, 1.0, q))
    s = np.exp(adjacency.astype(float) @ logq)
    blocked = (adjacency & zero[None, :]).any(axis=1)
    s[blocked] = 0.0
    return s


def throughput(probs, graph: InterferenceGraph) -> np.ndarray:
    """Per-node success probability u_k = p_k * s_k."""
    p = as_profile(probs, graph)
    return p * _contention(p, graph.adjacency)


def best_response_point(belief: BeliefConfig, node: int) -> float:
    """Maximiser over [0, 1] of p * s~_k(p) for one node."""
    a = belief.slopes[node]
    return float(min(belief.ref_state[node] / (2.0 * a) + belief.ref_action[node] / 2.0, 1.0))


def best_response(belief: BeliefConfig) -> np.ndarray:
    """Vectorised :func:`best_response_point` over all nodes."""
    return np.minimum(belief.ref_state / (2.0 * belief.slopes) + belief.ref_action / 2.0, 1.0)


def ce_slopes_for_target(target, graph: InterferenceGraph) -> np.ndarray:
    """Belief slopes that make ``target`` a conjectural equilibrium.

    Raises
    ------
    DegenerateTargetError
        If any target probability is zero.
    """
    p = as_profile(target, graph)
    if np.any(p <= 0):
        bad = np.flatnonzero(p <= 0).tolist()
        raise DegenerateTargetError(f"target probability is zero at nodes {bad}")
    return _contention(p, graph.adjacency) / p


def belief_at(target, graph: InterferenceGraph, slopes=None) -> BeliefConfig:
    """Belief whose reference points sit at ``target`` (slopes default to the CE ones)."""
    p = as_profile(target, graph)
    if slopes is None:
        slopes = ce_slopes_for_target(p, graph)
    return BeliefConfig(_check_len(slopes, graph, "slopes"), _contention(p, graph.adjacency), p)


class CEVerification(NamedTuple):
    ok: bool
    belief_residual: np.ndarray
    action_residual: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return np.maximum(self.belief_residual, self.action_residual)


def verify_ce(profile, belief: BeliefConfig, graph: InterferenceGraph, tol: float = 1e-9) -> CEVerification:
    """Check both CE conditions node by node.

    The belief must reproduce the realised contention at the profile, and the
    profile must be the best response under that belief.
    """
    p = as_profile(profile, graph)
    if len(belief) != graph.node_count:
        raise DimensionError("belief size does not match the topology")
    realised = _contention(p, graph.adjacency)
    belief_res = np.abs(belief.conjectured_state(p) - realised)
    action_res = np.abs(p - best_response(belief))
    ok = bool(np.all(belief_res <= tol) and np.all(action_res <= tol))
    return CEVerification(ok, belief_res, action_res)


def graph_from_placement(placement: NodePlacement) -> InterferenceGraph:
    """Symmetric graph linking every pair of nodes within the threshold distance."""
    pos = placement.positions
    d = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1))
    near = d <= placement.threshold
    np.fill_diagonal(near, False)
    return InterferenceGraph(
        placement.node_count, tuple(frozenset(np.flatnonzero(row).tolist()) for row in near)
    )


def cw_of_p(p: float) -> float:
    if not 0 < p <= 1:
        raise ConjmacError("contention window is only defined for 0 < p <= 1")
    return 2.0 / p - 1.0


def p_of_cw(cw: float) -> float:
    if not cw >= 1:
        raise ConjmacError("contention window must be at least 1")
    return 2.0 / (1.0 + cw)


def random_interior_profile(rng: np.random.Generator, k: int, low=0.01, high=0.99) -> np.ndarray:
    return rng.uniform(low, high, size=k)


def random_simplex_point(rng: np.random.Generator, k: int, total: float = 1.0) -> np.ndarray:
    """Strictly positive profile summing to ``total`` (uniform on the simplex)."""
    w = rng.exponential(size=k)
    return total * w / w.sum()


__all__ = [
    "InterferenceGraph",
    "BeliefConfig",
    "NodePlacement",
    "CEVerification",
    "as_profile",
    "contention_state",
    "throughput",
    "best_response_point",
    "best_response",
    "ce_slopes_for_target",
    "belief_at",
    "verify_ce",
    "graph_from_placement",
    "cw_of_p",
    "p_of_cw",
    "random_interior_profile",
    "random_simplex_point",
]
