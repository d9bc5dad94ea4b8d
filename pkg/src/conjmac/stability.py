"""Jacobians of the learning maps, spectral radii and sufficient conditions.

Also hosts the Pareto-boundary helpers: the weighted proportional-fair
operating point of a topology, membership in the sum-constrained throughput
region, and the random-topology spectral-radius scan.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import BoundaryPointError, ConjmacError, DimensionError
from .game import InterferenceGraph, NodePlacement, _contention, as_profile, graph_from_placement

STABLE_EPS = 1e-9


@dataclass(frozen=True)
class Conditions:
    """Sufficient conditions for stability/convergence, evaluated exactly.

    ``None`` means the condition needs an input that was not supplied.
    Conditions listed in ``degenerate`` hit a division by zero and are False.

    The per-neighbourhood forms reduce to the single-cell inequalities on a
    complete graph.
    """

    sum_p_lt_1: bool | None = None  # sum_k p_k < 1
    rowcol_ratio_lt_1: bool | None = None  # sum_{i in I_k} p_k / (1 - p_i) < 1 for all k
    slope_sum_lt_1: bool | None = None  # sum_{i != k} 1/a_i < 1 for all k
    adhoc_neighbourhood_sum_lt_1: bool | None = None  # sum_{i in O_k + k} p_i < 1 for all k
    adhoc_out_degree: bool | None = None  # a_k > |O_k| for all k
    adhoc_in_slope_sum: bool | None = None  # sum_{i in I_k} 1/a_i < 1 for all k
    degenerate: frozenset[str] = frozenset()

    @property
    def locally_stable(self) -> bool:
        """Any point-based condition holds (stable CE for both learning rules)."""
        return bool(self.adhoc_neighbourhood_sum_lt_1 or self.rowcol_ratio_lt_1 or self.sum_p_lt_1)

    @property
    def globally_convergent(self) -> bool:
        """Any slope-based condition holds (unique CE, global convergence)."""
        return bool(self.slope_sum_lt_1 or self.adhoc_out_degree or self.adhoc_in_slope_sum)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "degenerate"}
        d["degenerate"] = sorted(self.degenerate)
        return d


def sufficient_conditions(graph: InterferenceGraph, probs=None, slopes=None) -> Conditions:
    """Evaluate every point-based (needs ``probs``) and slope-based (needs ``slopes``) condition."""
    adj = graph.adjacency
    out: dict = {}
    degenerate: set[str] = set()
    if probs is not None:
        p = as_profile(probs, graph)
        out["sum_p_lt_1"] = bool(p.sum() < 1.0)
        neigh = adj.T.astype(float) @ p + p  # sum over O_k plus p_k itself
        out["adhoc_neighbourhood_sum_lt_1"] = bool(np.all(neigh < 1.0))
        uses_one = adj & (p[None, :] >= 1.0)
        if uses_one.any():
            out["rowcol_ratio_lt_1"] = False
            degenerate.add("rowcol_ratio_lt_1")
        else:
            inv = 1.0 / (1.0 - np.where(p >= 1.0, 0.0, p))
            ratio = p * (adj.astype(float) @ inv)
            out["rowcol_ratio_lt_1"] = bool(np.all(ratio < 1.0))
    if slopes is not None:
        a = np.asarray(slopes, dtype=float)
        if a.shape != (graph.node_count,):
            raise DimensionError("slope vector does not match the topology")
        if np.any(~(a > 0)):
            raise ConjmacError("belief slopes must be strictly positive")
        inv_a = 1.0 / a
        others = inv_a.sum() - inv_a
        out["slope_sum_lt_1"] = bool(np.all(others < 1.0))
        out["adhoc_out_degree"] = bool(np.all(a > graph.out_degree()))
        out["adhoc_in_slope_sum"] = bool(np.all(adj.astype(float) @ inv_a < 1.0))
    return Conditions(**out, degenerate=frozenset(degenerate))


def classify(rho: float, eps: float = STABLE_EPS) -> str:
    if rho <= 1.0 - eps:
        return "stable"
    if abs(rho - 1.0) <= eps:
        return "marginal"
    return "unstable"


@dataclass
class JacobianReport:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    spectral_radius: float
    kind: Literal["best_response", "gradient_play"]
    conditions: Conditions = field(default_factory=Conditions)

    @property
    def status(self) -> str:
        return classify(self.spectral_radius)

    @property
    def stable(self) -> bool:
        return self.status == "stable"

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "matrix": self.matrix.tolist(),
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "spectral_radius": self.spectral_radius,
            "status": self.status,
            "conditions": self.conditions.as_dict(),
        }


def spectral_radius(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    eig = np.linalg.eigvals(matrix)
    return eig, float(np.max(np.abs(eig))) if eig.size else 0.0


def _report(matrix, kind, graph, p, slopes) -> JacobianReport:
    eig, rho = spectral_radius(matrix)
    return JacobianReport(matrix, eig, rho, kind, sufficient_conditions(graph, p, slopes))


def _equilibrium_point(target, graph: InterferenceGraph) -> np.ndarray:
    """Validate a CE point; p_k = 1 is allowed only for nodes that disturb nobody."""
    p = as_profile(target, graph)
    if np.any(p <= 0):
        raise BoundaryPointError("operating point has a zero transmission probability")
    busy = graph.out_degree() > 0
    if np.any((p >= 1) & busy):
        raise BoundaryPointError("operating point has p_k = 1 at a node that interferes with others")
    return p


def br_matrix_at_equilibrium(p: np.ndarray, graph: InterferenceGraph) -> np.ndarray:
    """J_ik = 1/2 on the diagonal, -p_i / (2 (1 - p_k)) for k in I_i, 0 elsewhere."""
    adj = graph.adjacency
    safe = np.where(p >= 1.0, 0.0, p)  # such columns are empty by validation
    off = -p[:, None] / (2.0 * (1.0 - safe[None, :]))
    J = np.where(adj, off, 0.0)
    np.fill_diagonal(J, 0.5)
    return J


def _partial_products(p: np.ndarray, graph: InterferenceGraph) -> np.ndarray:
    """M[i, k] = prod_{j in I_i, j != k} (1 - p_j) for k in I_i, else 0 (computed without division)."""
    K = graph.node_count
    M = np.zeros((K, K))
    q = 1.0 - p
    for i, s in enumerate(graph.in_sets):
        members = sorted(s)
        for k in members:
            M[i, k] = np.prod([q[j] for j in members if j != k])
    return M


def br_matrix_general(p: np.ndarray, slopes: np.ndarray, graph: InterferenceGraph) -> np.ndarray:
    """Jacobian of the unclamped best-response map at any point with given slopes."""
    J = -_partial_products(p, graph) / (2.0 * slopes[:, None])
    np.fill_diagonal(J, 0.5)
    return J


def gp_matrix(p: np.ndarray, slopes: np.ndarray, stepsize: float, graph: InterferenceGraph) -> np.ndarray:
    """Jacobian of the unclamped gradient-play map at any point with given slopes."""
    J = -stepsize * _partial_products(p, graph)
    np.fill_diagonal(J, 1.0 - stepsize * slopes)
    return J


def jacobian_br(target, graph: InterferenceGraph, slopes=None) -> JacobianReport:
    """Best-response Jacobian.

    Without ``slopes`` the point is treated as a CE (slopes implied by the
    target) and the closed equilibrium form is used. With ``slopes`` the
    general form is evaluated at an arbitrary interior point.
    """
    if slopes is None:
        p = _equilibrium_point(target, graph)
        a = _contention(p, graph.adjacency) / p
        J = br_matrix_at_equilibrium(p, graph)
    else:
        p = _interior(target, graph)
        a = _pos_slopes(slopes, graph)
        J = br_matrix_general(p, a, graph)
    return _report(J, "best_response", graph, p, a)


def jacobian_gp(target, stepsize: float, graph: InterferenceGraph, slopes=None) -> JacobianReport:
    """Gradient-play Jacobian; equilibrium slopes are implied when ``slopes`` is omitted."""
    if not stepsize > 0:
        raise ConjmacError("stepsize must be positive")
    if slopes is None:
        p = _equilibrium_point(target, graph)
        a = _contention(p, graph.adjacency) / p
    else:
        p = _interior(target, graph)
        a = _pos_slopes(slopes, graph)
    return _report(gp_matrix(p, a, stepsize, graph), "gradient_play", graph, p, a)


def _interior(target, graph) -> np.ndarray:
    p = as_profile(target, graph)
    if np.any((p <= 0) | (p >= 1)):
        raise BoundaryPointError("Jacobian requested at a boundary point")
    return p


def _pos_slopes(slopes, graph) -> np.ndarray:
    a = np.asarray(slopes, dtype=float)
    if a.shape != (graph.node_count,) or np.any(~(a > 0)):
        raise ConjmacError("slopes must be positive and match the topology")
    return a


@dataclass(frozen=True)
class ParetoWeights:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or np.any(~(w > 0)):
            raise ConjmacError("Pareto weights must be a non-empty vector of positive reals")
        object.__setattr__(self, "weights", w)

    @classmethod
    def two_tier(cls, k: int, high: float = 1.0, low: float = 0.5) -> "ParetoWeights":
        """First half of the links at ``high``, the rest at ``low``."""
        return cls(np.where(np.arange(k) < k // 2, high, low))


def pareto_point_from_weights(weights: ParetoWeights, graph: InterferenceGraph) -> np.ndarray:
    """Weighted proportional-fair profile p_k = w_k / (w_k + sum_{i in O_k} w_i)."""
    w = weights.weights
    if w.size != graph.node_count:
        raise DimensionError("weight vector does not match the topology")
    victims = graph.adjacency.T.astype(float) @ w
    return w / (w + victims)


def region_membership(point, graph: InterferenceGraph, budget: float) -> bool:
    """Is ``point`` dominated by some throughput vector reachable with sum(p) <= budget?

    Single-cell only. At a max-min optimum every node with a positive target
    meets its ratio with equality, so p_k/(1-p_k) = c * target_k for a
    common c, and the max-min ratio c / prod(1 + c target_i) grows in c
    while sum(p) < 1. The search is therefore a bisection on c for
    sum(p) = min(budget, 1).
    """
    if not graph.is_single_cell:
        raise ConjmacError("region membership is implemented for single-cell topologies")
    tau = np.asarray(point, dtype=float)
    if tau.shape != (graph.node_count,):
        raise DimensionError("throughput vector does not match the topology")
    if np.any(tau < 0):
        raise ConjmacError("throughputs are non-negative")
    if not 0 <= budget <= graph.node_count:
        raise ConjmacError("budget must lie in [0, K]")
    pos = tau[tau > 0]
    if pos.size == 0:
        return True
    if budget == 0:
        return False
    total = min(budget, 1.0)

    def sum_p(c: float) -> float:
        x = c * pos
        return float(np.sum(x / (1.0 + x)))

    lo, hi = 0.0, 1.0
    while sum_p(hi) < total:
        hi *= 2.0
        if hi > 1e300:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if sum_p(mid) < total:
            lo = mid
        else:
            hi = mid
    c = lo
    ratio = c / np.prod(1.0 + c * pos)
    return bool(ratio >= 1.0 - 1e-12)


def max_min_ratio(point, budget: float = 1.0) -> float:
    """Largest lambda with lambda * point achievable in a single cell under sum(p) <= budget."""
    tau = np.asarray(point, dtype=float)
    pos = tau[tau > 0]
    if pos.size == 0:
        return np.inf
    total = min(budget, 1.0)
    lo, hi = 0.0, 1.0
    while np.sum(hi * pos / (1 + hi * pos)) < total:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sum(mid * pos / (1 + mid * pos)) < total:
            lo = mid
        else:
            hi = mid
    return float(lo / np.prod(1.0 + lo * pos))


@dataclass
class ScanResult:
    rhos: np.ndarray  # in placement order
    eps: float = STABLE_EPS

    @property
    def sorted_rhos(self) -> np.ndarray:
        return np.sort(self.rhos)

    @property
    def cdf(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.sorted_rhos
        return x, np.arange(1, x.size + 1) / x.size

    @property
    def fraction_stable(self) -> float:
        return float(np.mean(self.rhos <= 1.0 - self.eps))

    @property
    def fraction_marginal(self) -> float:
        return float(np.mean(np.abs(self.rhos - 1.0) <= self.eps))

    @property
    def max_rho(self) -> float:
        return float(self.rhos.max())


def pareto_rho(placement: NodePlacement, weights: ParetoWeights) -> float:
    graph = graph_from_placement(placement)
    p = pareto_point_from_weights(weights, graph)
    return jacobian_br(p, graph).spectral_radius


def _rho_task(args) -> float:
    return pareto_rho(*args)


def pareto_stability_scan(
    placements: Sequence[NodePlacement], weights: ParetoWeights, workers: int = 1
) -> ScanResult:
    """Spectral radius of the best-response map at the weighted Pareto point of each topology."""
    if not placements:
        raise ConjmacError("scan needs at least one placement")
    tasks = [(pl, weights) for pl in placements]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rhos = list(ex.map(_rho_task, tasks))  # map preserves submission order
    else:
        rhos = [_rho_task(t) for t in tasks]
    return ScanResult(np.array(rhos))


def random_placements(
    count: int, nodes: int, side: float = 100.0, threshold: float = 40.0, seed: int = 0
) -> list[NodePlacement]:
    """Uniform placements in a side x side square, one seeded stream per placement."""
    seq = np.random.SeedSequence(seed)
    out = []
    for child in seq.spawn(count):
        rng = np.random.default_rng(child)
        out.append(NodePlacement(rng.uniform(0.0, side, size=(nodes, 2)), threshold))
    return out
