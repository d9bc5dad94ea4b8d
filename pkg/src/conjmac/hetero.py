"""Steady state of heterogeneous traffic classes and weighted-fairness metrics."""
from __future__ import annotations

import warnings
from dataclasses import dataclass


import numpy as np

from .errors import ConjmacError, DimensionError, HypothesisViolation

MAX_BISECTIONS = 200


@dataclass(frozen=True)
class TrafficClass:
    phi: float  # common belief slope of the class
    size: int
    weight: float = 1.0  # chi_n

    def __post_init__(self):
        if not self.phi > 0:
            raise ConjmacError("class slope phi must be positive")
        if int(self.size) != self.size or self.size < 1:
            raise ConjmacError("class size must be a positive integer")
        if not self.weight > 0:
            raise ConjmacError("class weight must be positive")


@dataclass(frozen=True)
class ClassSpec:
    classes: tuple[TrafficClass, ...]

    def __post_init__(self):
        cls = tuple(c if isinstance(c, TrafficClass) else TrafficClass(*c) for c in self.classes)
        if not cls:
            raise ConjmacError("a class spec needs at least one class")
        object.__setattr__(self, "classes", cls)

    @classmethod
    def from_arrays(cls, phis, sizes, weights=None) -> "ClassSpec":
        phis = np.atleast_1d(np.asarray(phis, dtype=float))
        sizes = np.atleast_1d(np.asarray(sizes))
        weights = np.ones_like(phis) if weights is None else np.atleast_1d(np.asarray(weights, dtype=float))
        if not phis.shape == sizes.shape == weights.shape:
            raise DimensionError("phi, size and weight vectors must have equal length")
        return cls(tuple(TrafficClass(float(f), int(s), float(w)) for f, s, w in zip(phis, sizes, weights)))

    @property
    def phis(self) -> np.ndarray:
        return np.array([c.phi for c in self.classes])

    @property
    def sizes(self) -> np.ndarray:
        return np.array([c.size for c in self.classes])

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.classes])

    @property
    def node_count(self) -> int:
        return int(self.sizes.sum())

    def node_slopes(self) -> np.ndarray:
        """Per-node slope vector, class members contiguous in class order."""
        return np.repeat(self.phis, self.sizes)

    def node_classes(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.classes)), self.sizes)


@dataclass(frozen=True)
class HeteroSolution:
    varrho: float  # probability that the whole cell is idle
    class_probs: np.ndarray
    residual: float
    within_theorem: bool = True  # False when some phi < 2

    def node_probs(self, spec: ClassSpec) -> np.ndarray:
        return np.repeat(self.class_probs, spec.sizes)


def _roots(varrho: float, phis: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(1.0 - 4.0 * varrho / phis, 0.0))


def class_probs_at(varrho: float, phis) -> np.ndarray:
    """Smaller root of phi p (1 - p) = varrho, written to avoid cancellation."""
    phis = np.asarray(phis, dtype=float)
    x = varrho / phis
    return 2.0 * x / (1.0 + _roots(varrho, phis))


def steady_state_residual(varrho: float, spec: ClassSpec) -> float:
    """RHS minus LHS of the fixed-point equation for the idle probability."""
    rhs = np.prod(((1.0 + _roots(varrho, spec.phis)) / 2.0) ** spec.sizes)
    return float(rhs - varrho)


def solve_steady_state(spec: ClassSpec, tol: float = 1e-13, allow_small_phi: bool = False) -> HeteroSolution:
    """Bisection for the idle probability varrho on [0, min phi / 4].

    The residual is strictly decreasing there, so the root is unique. Slopes
    below 2 void that guarantee: they raise unless ``allow_small_phi`` is
    set, in which case the result is flagged and a warning is issued.
    """
    phis = spec.phis
    within = bool(np.all(phis >= 2.0))
    if not within:
        if not allow_small_phi:
            raise HypothesisViolation(f"class slopes {phis[phis < 2].tolist()} are below 2")
        warnings.warn("class slope below 2: uniqueness of the steady state is not guaranteed", stacklevel=2)
    lo, hi = 0.0, float(phis.min()) / 4.0
    f_lo, f_hi = steady_state_residual(lo, spec), steady_state_residual(hi, spec)
    if f_hi >= 0.0:  # root at the upper end (or beyond it when phi < 2)
        best = hi
    else:
        for _ in range(MAX_BISECTIONS):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            f_mid = steady_state_residual(mid, spec)
            if f_mid == 0.0:
                lo = hi = mid
                break
            if f_mid > 0.0:
                lo, f_lo = mid, f_mid
            else:
                hi, f_hi = mid, f_mid
            if hi - lo <= tol * 1e-3:
                break
        best = lo if abs(f_lo) <= abs(f_hi) else hi
    residual = abs(steady_state_residual(best, spec))
    return HeteroSolution(best, class_probs_at(best, phis), residual, within)


def _ratios(class_probs, weights) -> np.ndarray:
    p = np.asarray(class_probs, dtype=float)
    chi = np.asarray(weights, dtype=float)
    if p.shape != chi.shape:
        raise DimensionError("class probabilities and weights differ in length")
    if np.any((p <= 0) | (p >= 1)):
        raise ConjmacError("class probabilities must lie in (0, 1)")
    if np.any(~(chi > 0)):
        raise ConjmacError("class weights must be positive")
    return p / ((1.0 - p) * chi)


def weighted_fairness_gap(class_probs, weights) -> float:
    """Largest relative spread of p / ((1 - p) chi) over pairs of classes; 0 is exact weighted fairness."""
    r = _ratios(class_probs, weights)
    if r.size < 2:
        return 0.0
    return float((r.max() - r.min()) / r.max())


def fairness_index(throughputs, class_of_node, weights, ddof: int = 0) -> float:
    """mu / (mu + sigma) of the class-normalised per-node throughputs.

    ``ddof=0`` takes the population standard deviation over all flows.
    """
    t = np.asarray(throughputs, dtype=float)
    cls = np.asarray(class_of_node, dtype=int)
    chi = np.asarray(weights, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ConjmacError("need at least one node throughput")
    if cls.shape != t.shape:
        raise DimensionError("class labels and throughputs differ in length")
    if np.any(~(chi > 0)):
        raise ConjmacError("class weights must be positive")
    if np.any(t < 0):
        raise ConjmacError("throughputs are non-negative")
    norm = t / chi[cls]
    mu = norm.mean()
    if mu == 0.0:
        raise ConjmacError("fairness index is undefined when every throughput is zero")
    sigma = norm.std(ddof=ddof) if norm.size > ddof else 0.0
    return float(mu / (mu + sigma))


__all__ = [
    "TrafficClass",
    "ClassSpec",
    "HeteroSolution",
    "solve_steady_state",
    "steady_state_residual",
    "class_probs_at",
    "weighted_fairness_gap",
    "fairness_index",
]
