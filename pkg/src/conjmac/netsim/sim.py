"""Stage-based slot-level simulation of conjecture learners and DCF stations.

Nodes hold p fixed within a stage (or update it every slot for the per-slot
rules), estimate their contention state from idle gaps seen in their own
neighbourhood, and apply their stage rule with the estimate in place of the
exact product.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from ..dynamics import safe_stepsize
from ..errors import ConjmacError, DimensionError
from ..game import InterferenceGraph
from ..hetero import fairness_index
from . import kernel
from .phy import PhyParams, bianchi_throughput
from .rules import CW_MAX, CW_MIN, estimate_from_moments

PROTOCOLS = {
    "conjecture_br": kernel.PERSIST,
    "conjecture_gp": kernel.PERSIST,
    "dcf": kernel.DCF,
    "slot_br": kernel.SLOT_BR,
    "slot_gp": kernel.SLOT_GP,
}
CHUNK = 512
DEFAULT_WINDOW = 500


@dataclass(frozen=True)
class SimEvent:
    stage: int
    kind: Literal["join", "leave"]
    nodes: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in ("join", "leave"):
            raise ConjmacError(f"unknown event kind {self.kind!r}")
        if self.stage < 0:
            raise ConjmacError("event stage must be non-negative")
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))


@dataclass
class SimConfig:
    graph: InterferenceGraph
    protocols: Sequence[str] | str = "conjecture_br"
    slopes: np.ndarray | None = None
    initial_probs: np.ndarray | None = None  # default min(1/a, 1)
    stepsize: float | np.ndarray | None = None  # None -> safe stepsize of the initial slopes
    discount: float = 0.05
    adaptive: bool = False
    adapt_every: int = 5
    adapt_stop: Literal["throughput_peak", "sum_p_near_one", "never"] = "throughput_peak"
    sum_eps: float = 0.02
    slots_per_stage: int = 2000
    successes_per_stage: int | None = None  # stage ends after this many successes
    max_slots_per_stage: int = 1_000_000
    n_stages: int | None = 100
    duration_s: float | None = None  # simulated seconds; overrides n_stages
    max_stages: int = 1_000_000
    seed: int = 0
    events: Sequence[SimEvent] = ()
    initially_active: np.ndarray | None = None  # default: all but nodes whose first event is a join
    node_class: np.ndarray | None = None
    class_weights: np.ndarray | None = None
    phy: PhyParams = field(default_factory=PhyParams)
    estimator_window: int = DEFAULT_WINDOW  # 0 keeps every gap
    estimator_reset: bool = False  # clear gap history at each stage start
    cw_min: int = CW_MIN
    cw_max: int = CW_MAX
    conv_tol: float = 0.002  # absolute part of the convergence band
    conv_rtol: float = 0.1  # relative part, scaled by the final probability
    conv_window: int = 20

    def __post_init__(self):
        g = self.graph
        K = g.node_count
        if isinstance(self.protocols, str):
            self.protocols = [self.protocols] * K
        self.protocols = list(self.protocols)
        if len(self.protocols) != K:
            raise DimensionError("one protocol per node is required")
        for name in self.protocols:
            if name not in PROTOCOLS:
                raise ConjmacError(f"unknown protocol {name!r}")
        if self.slopes is None:
            if any(p != "dcf" for p in self.protocols):
                raise ConjmacError("learning protocols need belief slopes")
            self.slopes = np.full(K, 2.0)
        self.slopes = np.array(self.slopes, dtype=float).reshape(-1)
        if self.slopes.shape != (K,) or np.any(~(self.slopes > 0)):
            raise ConjmacError("slopes must be K positive values")
        if self.initial_probs is None:
            self.initial_probs = np.minimum(1.0 / self.slopes, 1.0)
        self.initial_probs = np.array(self.initial_probs, dtype=float).reshape(-1)
        if self.initial_probs.shape != (K,) or np.any((self.initial_probs < 0) | (self.initial_probs > 1)):
            raise ConjmacError("initial probabilities must be K values in [0, 1]")
        if self.stepsize is None:
            self.stepsize = safe_stepsize(self.slopes, g)
        gam = np.broadcast_to(np.asarray(self.stepsize, dtype=float), (K,)).copy()
        if np.any(~(gam > 0)):
            raise ConjmacError("stepsize must be positive")
        self.stepsize = gam
        for k, name in enumerate(self.protocols):
            if name in ("slot_br", "slot_gp") and not self.slopes[k] > 1:
                raise ConjmacError(f"node {k}: per-slot rules need a slope above 1")
            if name == "slot_gp" and not gam[k] * self.slopes[k] < 1:
                raise ConjmacError(f"node {k}: per-slot gradient rule needs stepsize * slope < 1")
        if not 0 <= self.discount < 1:
            raise ConjmacError("discount must lie in [0, 1)")
        if self.adapt_every < 1:
            raise ConjmacError("adapt_every must be positive")
        if self.adapt_stop not in ("throughput_peak", "sum_p_near_one", "never"):
            raise ConjmacError(f"unknown adaptation stop rule {self.adapt_stop!r}")
        if self.slots_per_stage < 1:
            raise ConjmacError("slots_per_stage must be at least 1")
        if self.successes_per_stage is not None and self.successes_per_stage < 1:
            raise ConjmacError("successes_per_stage must be at least 1")
        if self.duration_s is None and (self.n_stages is None or self.n_stages < 1):
            raise ConjmacError("give a positive stage count or a duration")
        if self.duration_s is not None and not self.duration_s > 0:
            raise ConjmacError("duration must be positive")
        if self.estimator_window < 0:
            raise ConjmacError("estimator window must be non-negative")
        if not 1 <= self.cw_min <= self.cw_max:
            raise ConjmacError("need 1 <= cw_min <= cw_max")
        self.events = sorted((e if isinstance(e, SimEvent) else SimEvent(*e) for e in self.events), key=lambda e: e.stage)
        horizon = self.n_stages if self.duration_s is None else self.max_stages
        for e in self.events:
            if e.stage >= horizon:
                raise ConjmacError(f"event at stage {e.stage} lies beyond the run")
            if any(not 0 <= n < K for n in e.nodes):
                raise ConjmacError("event names an unknown node")
        if self.initially_active is None:
            active = np.ones(K, dtype=bool)
            seen: set[int] = set()
            for e in self.events:
                for n in e.nodes:
                    if n not in seen and e.kind == "join":
                        active[n] = False
                    seen.add(n)
            self.initially_active = active
        self.initially_active = np.asarray(self.initially_active, dtype=bool)
        if self.node_class is None:
            self.node_class = np.zeros(K, dtype=int)
        self.node_class = np.asarray(self.node_class, dtype=int)
        if self.node_class.shape != (K,) or np.any(self.node_class < 0):
            raise ConjmacError("node_class must hold K non-negative labels")
        n_cls = int(self.node_class.max()) + 1
        if self.class_weights is None:
            self.class_weights = np.ones(n_cls)
        self.class_weights = np.asarray(self.class_weights, dtype=float)
        if self.class_weights.size < n_cls or np.any(~(self.class_weights > 0)):
            raise ConjmacError("need a positive weight for every class label")


@dataclass
class SimTrace:
    """Per-stage record; 2-D arrays are indexed [stage, node]."""

    p: np.ndarray  # probability used in the stage (empirical attempt rate for DCF and per-slot rules)
    s_hat: np.ndarray
    successes: np.ndarray
    attempts: np.ndarray
    u_conj: np.ndarray
    slopes: np.ndarray
    active: np.ndarray
    slots: np.ndarray
    idle_slots: np.ndarray
    success_slots: np.ndarray
    collision_slots: np.ndarray
    time_us: np.ndarray  # airtime of each stage
    slot_throughput: np.ndarray  # successes per slot
    mbps: np.ndarray  # measured, from the airtime model
    expected_mbps: np.ndarray  # saturation formula at the stage profile
    fairness: np.ndarray  # per stage, NaN when nobody succeeded
    node_class: np.ndarray
    class_weights: np.ndarray
    conv_tol: float = 0.002
    conv_rtol: float = 0.1
    conv_window: int = 20
    payload_bits: float = 8.0 * 2304
    backend: str = kernel.KERNEL_BACKEND

    @property
    def n_stages(self) -> int:
        return self.p.shape[0]

    @property
    def sim_time_s(self) -> float:
        return float(self.time_us.sum()) * 1e-6

    @property
    def final_profile(self) -> np.ndarray:
        return self.p[-1]

    def node_rates(self) -> np.ndarray:
        """Successes per simulated second while each node was active."""
        t_active = (self.active * self.time_us[:, None]).sum(axis=0) * 1e-6
        tot = self.successes.sum(axis=0).astype(float)
        return np.divide(tot, t_active, out=np.zeros_like(tot), where=t_active > 0)

    def overall_fairness(self, ddof: int = 0) -> float:
        ever = self.active.any(axis=0)
        return fairness_index(self.node_rates()[ever], self.node_class[ever], self.class_weights, ddof)

    def overall_mbps(self) -> float:
        bits = self.successes.sum() * self.payload_bits
        return float(bits / self.time_us.sum()) if self.time_us.sum() > 0 else 0.0

    def _band(self) -> np.ndarray:
        return self.conv_tol + self.conv_rtol * np.abs(self.p[-1])

    @property
    def converged(self) -> np.ndarray:
        """Per node: p stayed inside the band around its final value over the last conv_window stages."""
        w = min(self.conv_window, self.n_stages)
        ok = np.all(np.abs(self.p[-w:] - self.p[-1]) <= self._band(), axis=0)
        return ok | ~self.active[-1]

    @property
    def converged_stage(self) -> int | None:
        """First stage from which every active node stays inside the band around the final profile."""
        if not self.converged.all():
            return None
        out = np.where(self.active, np.abs(self.p - self.p[-1]) > self._band(), False).any(axis=1)
        bad = np.flatnonzero(out)
        return int(bad[-1] + 1) if bad.size else 0

    def summary(self) -> dict:
        return {
            "stages": self.n_stages,
            "sim_time_s": self.sim_time_s,
            "converged": bool(self.converged.all()),
            "converged_stage": self.converged_stage,
            "final_profile": self.p[-1].tolist(),
            "mean_mbps": self.overall_mbps(),
            "std_expected_mbps": float(np.std(self.expected_mbps)),
            "std_mbps": float(np.std(self.mbps)),
            "fairness_index": self.overall_fairness(),
            "kernel": self.backend,
        }


def _stage_rng(seed: int, node: int, stage: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(node, stage))))


def _draw(gens, active, m, K) -> np.ndarray:
    u = np.zeros((m, K))
    for k in np.flatnonzero(active):
        u[:, k] = gens[k].random(m)
    return u


def run_sim(config: SimConfig) -> SimTrace:
    c = config
    K = c.graph.node_count
    indptr, indices = c.graph.csr()
    proto_names = c.protocols
    proto = np.array([PROTOCOLS[n] for n in proto_names], dtype=np.int8)
    learner = np.array([n.startswith("conjecture") for n in proto_names])
    is_gp = np.array([n == "conjecture_gp" for n in proto_names])
    persists = proto == kernel.PERSIST
    gam = c.stepsize

    active = c.initially_active.copy()
    slopes = c.slopes.copy()
    probs = c.initial_probs.copy()
    win = c.estimator_window
    cw = np.full(K, c.cw_min, dtype=np.int64)
    counter = np.zeros(K, dtype=np.int64)
    for k in range(K):
        if proto[k] == kernel.DCF:
            counter[k] = int(np.floor(_stage_rng(c.seed, k, 1 << 31).random() * c.cw_min))
            probs[k] = 2.0 / (1.0 + c.cw_min)
    gap_run = np.zeros(K, dtype=np.int64)
    seen_idle = np.zeros(K, dtype=np.uint8)
    gap_buf = np.zeros((K, max(win, 1)), dtype=np.int64)
    gap_pos = np.zeros(K, dtype=np.int64)
    gap_count = np.zeros(K, dtype=np.int64)
    gap_sum = np.zeros(K, dtype=np.int64)

    def reset_estimator(mask):
        for arr in (gap_run, seen_idle, gap_pos, gap_count, gap_sum):
            arr[mask] = 0
        gap_buf[mask] = 0

    s_prev = np.full(K, np.nan)
    p_prev = probs.copy()

    # adaptive outer loop
    adapting = bool(c.adaptive)
    direction = -1.0
    period_bits = period_time = 0.0
    period_len = 0
    last_period = None

    rec: dict[str, list] = {n: [] for n in (
        "p", "s_hat", "successes", "attempts", "u_conj", "slopes", "active", "slots", "idle_slots",
        "success_slots", "collision_slots", "time_us", "mbps", "expected_mbps", "fairness")}
    events = list(c.events)
    ev_i = 0
    elapsed = 0.0
    stage = 0
    limit = c.n_stages if c.duration_s is None else c.max_stages
    bits = c.phy.payload_bits

    while stage < limit:
        while ev_i < len(events) and events[ev_i].stage == stage:
            e = events[ev_i]
            ev_i += 1
            nodes = np.array(e.nodes, dtype=int)
            if e.kind == "join":
                for n in nodes:
                    peers = active & (c.node_class == c.node_class[n]) & learner
                    peers[nodes] = False
                    if learner[n] and peers.any():
                        slopes[n] = slopes[peers].mean()
                        probs[n] = probs[peers].mean()
                active[nodes] = True
                reset_estimator(nodes)
                s_prev[nodes] = np.nan
                p_prev[nodes] = probs[nodes]
                for n in nodes:
                    if proto[n] == kernel.DCF:
                        cw[n] = c.cw_min
                        counter[n] = int(np.floor(_stage_rng(c.seed, int(n), 1 << 31).random() * c.cw_min))
                        probs[n] = 2.0 / (1.0 + c.cw_min)
            else:
                active[nodes] = False
            if c.adaptive:
                adapting = True
                direction = 1.0 if e.kind == "join" else -1.0
                period_bits = period_time = 0.0
                period_len = 0
                last_period = None

        if c.estimator_reset:
            reset_estimator(np.ones(K, dtype=bool))
        p_stage = probs.copy()
        attempts = np.zeros(K, dtype=np.int64)
        succ = np.zeros(K, dtype=np.int64)
        idle_k = np.zeros(K, dtype=np.int64)
        chan = np.zeros(3, dtype=np.int64)
        stage_succ = np.zeros(1, dtype=np.int64)
        gens = [_stage_rng(c.seed, k, stage) if active[k] else None for k in range(K)]
        act_u8 = active.astype(np.uint8)
        target = c.successes_per_stage or 0
        cap = c.max_slots_per_stage if target else c.slots_per_stage
        used = 0
        while used < cap:
            m = min(cap - used, CHUNK if target else cap - used)
            u = _draw(gens, active, m, K)
            used += kernel.simulate_chunk(
                u, act_u8, proto, probs, slopes, gam, indptr, indices,
                cw, counter, c.cw_min, c.cw_max,
                gap_run, seen_idle, gap_buf, gap_pos, gap_count, gap_sum, win,
                attempts, succ, idle_k, chan, stage_succ, target,
            )
            if target and stage_succ[0] >= target:
                break

        # contention estimate per node
        s_hat = np.full(K, np.nan)
        for k in np.flatnonzero(active):
            pk = p_stage[k] if persists[k] else attempts[k] / used
            if gap_count[k] > 0 and pk < 1.0:
                s_hat[k] = estimate_from_moments(float(gap_sum[k]), int(gap_count[k]), pk)
            elif attempts[k] > 0:
                s_hat[k] = succ[k] / attempts[k]
            else:
                s_hat[k] = 0.0

        p_rec = np.where(persists, p_stage, attempts / used)
        u_conj = np.where(np.isnan(s_prev), np.nan, p_rec * (s_prev - slopes * (p_rec - p_prev)))
        t_us = c.phy.airtime(*chan)
        act_nodes = np.flatnonzero(active)
        exp_mbps = bianchi_throughput(p_rec[act_nodes], np.ones(act_nodes.size), c.phy) if act_nodes.size else 0.0
        tot = succ[act_nodes].sum()
        fair = fairness_index(succ[act_nodes], c.node_class[act_nodes], c.class_weights) if tot > 0 else np.nan

        rec["p"].append(p_rec)
        rec["s_hat"].append(s_hat)
        rec["successes"].append(succ)
        rec["attempts"].append(attempts)
        rec["u_conj"].append(np.where(active, u_conj, np.nan))
        rec["slopes"].append(slopes.copy())
        rec["active"].append(active.copy())
        rec["slots"].append(used)
        rec["idle_slots"].append(chan[0])
        rec["success_slots"].append(chan[1])
        rec["collision_slots"].append(chan[2])
        rec["time_us"].append(t_us)
        rec["mbps"].append(tot * bits / t_us if t_us > 0 else 0.0)
        rec["expected_mbps"].append(exp_mbps)
        rec["fairness"].append(fair)

        # stage-level learning with the estimated state
        upd = active & learner
        s_use = np.where(np.isnan(s_hat), 0.0, s_hat)
        br = np.minimum(p_stage / 2.0 + s_use / (2.0 * slopes), 1.0)
        gp = np.clip(p_stage + gam * (s_use - slopes * p_stage), 0.0, 1.0)
        probs = np.where(upd, np.where(is_gp, gp, br), probs)
        p_prev = p_rec
        s_prev = np.where(active, s_hat, np.nan)

        elapsed += t_us
        if adapting:
            period_bits += tot * bits
            period_time += t_us
            period_len += 1
            if period_len == c.adapt_every:
                value = period_bits / period_time if period_time > 0 else 0.0
                sum_p = float(probs[active].sum())
                if c.adapt_stop == "throughput_peak" and last_period is not None and value < last_period:
                    adapting = False
                elif c.adapt_stop == "sum_p_near_one" and sum_p >= 1.0 - c.sum_eps:
                    adapting = False
                else:
                    slopes = np.where(upd, slopes * (1.0 + direction * c.discount), slopes)
                last_period = value
                period_bits = period_time = 0.0
                period_len = 0
        stage += 1
        if c.duration_s is not None and elapsed >= c.duration_s * 1e6:
            break

    arr = {k: np.array(v) for k, v in rec.items()}
    mbps = arr.pop("mbps")
    return SimTrace(
        p=arr["p"], s_hat=arr["s_hat"], successes=arr["successes"], attempts=arr["attempts"],
        u_conj=arr["u_conj"], slopes=arr["slopes"], active=arr["active"], slots=arr["slots"],
        idle_slots=arr["idle_slots"], success_slots=arr["success_slots"],
        collision_slots=arr["collision_slots"], time_us=arr["time_us"],
        slot_throughput=arr["successes"].sum(axis=1) / arr["slots"], mbps=mbps,
        expected_mbps=arr["expected_mbps"], fairness=arr["fairness"],
        node_class=c.node_class.copy(), class_weights=c.class_weights.copy(),
        conv_tol=c.conv_tol, conv_rtol=c.conv_rtol, conv_window=c.conv_window, payload_bits=bits,
    )
