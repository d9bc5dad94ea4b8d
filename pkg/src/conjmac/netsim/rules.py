"""Per-slot observation rules, the idle-gap estimator and binary exponential backoff."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from ..errors import ConjmacError, EstimatorUndefinedError

CW_MIN = 16
CW_MAX = 1024


def estimate_state(idle_gaps: Sequence[int], own_p: float) -> float:
    """Contention estimate from the busy-run lengths between idle slots.

    p_idle = 1 / (1 + mean gap) estimates (1 - p_k) s_k, so the state is
    p_idle / (1 - p_k), clamped to [0, 1].
    """
    if own_p >= 1.0:
        raise EstimatorUndefinedError("a node with p = 1 never sees an idle slot")
    gaps = np.asarray(idle_gaps, dtype=float)
    if gaps.size == 0:
        raise ConjmacError("at least one idle gap is needed")
    if np.any(gaps < 0):
        raise ConjmacError("idle gaps are non-negative counts")
    return estimate_from_moments(float(gaps.sum()), gaps.size, own_p)


def estimate_from_moments(gap_sum: float, gap_count: int, own_p: float) -> float:
    p_idle = 1.0 / (1.0 + gap_sum / gap_count)
    return float(min(max(p_idle / (1.0 - own_p), 0.0), 1.0))


Observation = Literal["busy", "idle", "own_success"]


def slot_rule_br(prev_p: float, slope: float, observation: Observation) -> float:
    """Best response spread over slots: halve on busy, reset on idle or own success."""
    if not slope > 1:
        raise ConjmacError("the per-slot best-response rule needs a slope above 1")
    if observation == "busy":
        return prev_p / 2.0
    if observation == "idle":
        return 1.0 / (2.0 * slope)
    if observation == "own_success":
        return (1.0 + 1.0 / slope) / 2.0
    raise ConjmacError(f"unknown observation {observation!r}")


def slot_rule_gp(prev_p: float, slope: float, stepsize: float, observation: Literal["busy", "not_busy"]) -> float:
    """AIMD form of gradient play: multiplicative decrease on busy, additive increase otherwise."""
    if not slope > 1:
        raise ConjmacError("the per-slot gradient rule needs a slope above 1")
    if not 0 < stepsize * slope < 1:
        raise ConjmacError("stepsize * slope must lie in (0, 1)")
    if observation == "busy":
        return prev_p * (1.0 - stepsize * slope)
    if observation == "not_busy":
        return min(max(prev_p + stepsize * (1.0 - slope * prev_p), 0.0), 1.0)
    raise ConjmacError(f"unknown observation {observation!r}")


def expected_slot_br(p: np.ndarray, slopes: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Mean of slot_rule_br given busy w.p. 1-s, idle w.p. (1-p)s, own success w.p. ps."""
    return (1 - s) * p / 2 + (1 - p) * s / (2 * slopes) + p * s * (1 + 1 / slopes) / 2


def expected_slot_gp(p: np.ndarray, slopes: np.ndarray, stepsize: float, s: np.ndarray) -> np.ndarray:
    return (1 - s) * p * (1 - stepsize * slopes) + s * (p + stepsize * (1 - slopes * p))


@dataclass(frozen=True)
class DcfState:
    """Binary exponential backoff window plus the remaining backoff counter."""

    cw: int = CW_MIN
    counter: int = 0
    cw_min: int = CW_MIN
    cw_max: int = CW_MAX

    def __post_init__(self):
        if not 1 <= self.cw_min <= self.cw <= self.cw_max:
            raise ConjmacError("need 1 <= cw_min <= cw <= cw_max")
        ratio = self.cw / self.cw_min
        if self.cw != self.cw_max and (ratio != int(ratio) or int(ratio) & (int(ratio) - 1)):
            raise ConjmacError("cw must be cw_min times a power of two, or the cap")
        if self.counter < 0:
            raise ConjmacError("backoff counter is non-negative")

    @property
    def p(self) -> float:
        return 2.0 / (1.0 + self.cw)


def dcf_step(
    state: DcfState,
    observation: Literal["own_success", "own_collision", "no_own_attempt"],
    rng: np.random.Generator | None = None,
) -> DcfState:
    """Window update after one slot; a new counter is drawn from [0, cw) after an attempt."""
    if observation == "own_success":
        cw = state.cw_min
    elif observation == "own_collision":
        cw = min(2 * state.cw, state.cw_max)
    elif observation == "no_own_attempt":
        return DcfState(state.cw, max(state.counter - 1, 0), state.cw_min, state.cw_max)
    else:
        raise ConjmacError(f"unknown observation {observation!r}")
    counter = int(rng.integers(cw)) if rng is not None else 0
    return DcfState(cw, counter, state.cw_min, state.cw_max)
