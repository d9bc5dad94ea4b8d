import numpy as np
import pytest

from conjmac.dynamics import LearnerConfig, br_step, gp_step, run
from conjmac.errors import ConjmacError, EstimatorUndefinedError
from conjmac.game import InterferenceGraph, contention_state, throughput
from conjmac.netsim import (
    DcfState,
    PhyParams,
    SimConfig,
    SimEvent,
    bianchi_throughput,
    dcf_step,
    estimate_state,
    expected_slot_br,
    expected_slot_gp,
    run_sim,
    slot_rule_br,
    slot_rule_gp,
    transmission_probs,
)
from conjmac.netsim import _pykernel, kernel
from conjmac.netsim import sim as simmod


# ---------------------------------------------------------------- estimator
def test_estimator_examples():
    assert estimate_state([0, 0, 0], 0.0) == 1.0
    assert estimate_state([1, 1], 0.0) == 0.5
    assert estimate_state([0, 2], 0.5) == 1.0  # clamped
    with pytest.raises(EstimatorUndefinedError):
        estimate_state([1], 1.0)
    with pytest.raises(ConjmacError):
        estimate_state([], 0.2)


def idle_gaps(local_idle):
    """Busy-run lengths between consecutive idle slots of one node."""
    idx = np.flatnonzero(local_idle)
    return np.diff(idx) - 1


def test_estimator_monte_carlo_pair():
    rng = np.random.default_rng(4)
    p = np.array([0.3, 0.3])
    n = 100_000
    tx = rng.random((n, 2)) < p
    for k in range(2):
        est = estimate_state(idle_gaps(~tx.any(axis=1)), p[k])
        # delta method: var(p_idle_hat) ~ q(1-q)/n, q = (1-p) s
        q = 0.49
        se = np.sqrt(q * (1 - q) / n) / (1 - p[k])
        assert abs(est - 0.7) < 3 * se


# ---------------------------------------------------------------- slot rules
def test_slot_rule_br_examples():
    assert slot_rule_br(0.4, 4, "busy") == pytest.approx(0.2)
    assert slot_rule_br(0.4, 4, "idle") == pytest.approx(0.125)
    assert slot_rule_br(0.4, 4, "own_success") == pytest.approx(0.625)
    with pytest.raises(ConjmacError):
        slot_rule_br(0.4, 1.0, "busy")


def test_slot_rule_gp_examples():
    assert slot_rule_gp(0.4, 2, 0.1, "busy") == pytest.approx(0.32)
    assert slot_rule_gp(0.4, 2, 0.1, "not_busy") == pytest.approx(0.42)
    with pytest.raises(ConjmacError):
        slot_rule_gp(0.4, 2, 0.5, "busy")


def test_slot_rule_expectations_match_stage_maps():
    rng = np.random.default_rng(0)
    for _ in range(100):
        k = int(rng.integers(2, 7))
        g = InterferenceGraph.single_cell(k)
        p = rng.uniform(0.01, 0.99, k)
        a = rng.uniform(1.01, 10, k)
        s = contention_state(p, g)
        stage = np.minimum(p / 2 + s / (2 * a), 1)
        assert np.max(np.abs(expected_slot_br(p, a, s) - br_step(p, a, g))) < 1e-12
        # scalar rule weighted by outcome probabilities
        for j in range(k):
            e = (1 - s[j]) * slot_rule_br(p[j], a[j], "busy") + (1 - p[j]) * s[j] * slot_rule_br(p[j], a[j], "idle") + p[j] * s[j] * slot_rule_br(p[j], a[j], "own_success")
            assert abs(e - stage[j]) < 1e-12
        gamma = 0.9 / a.max()
        assert np.max(np.abs(expected_slot_gp(p, a, gamma, s) - gp_step(p, a, gamma, g))) < 1e-12


def test_slot_rules_monte_carlo():
    rng = np.random.default_rng(1)
    p = np.array([0.3, 0.2])
    a = np.array([3.0, 4.0])
    g = InterferenceGraph.single_cell(2)
    n = 200_000
    tx = rng.random((n, 2)) < p
    busy0 = tx[:, 1]
    nxt = np.where(busy0, p[0] / 2, np.where(tx[:, 0], (1 + 1 / a[0]) / 2, 1 / (2 * a[0])))
    assert abs(nxt.mean() - br_step(p, a, g)[0]) < 4 * nxt.std() / np.sqrt(n)


# ---------------------------------------------------------------- DCF
def test_dcf_examples():
    assert dcf_step(DcfState(16), "own_collision").cw == 32
    assert dcf_step(DcfState(1024), "own_collision").cw == 1024
    assert dcf_step(DcfState(512), "own_success").cw == 16
    s = dcf_step(DcfState(64, counter=5), "no_own_attempt")
    assert s.cw == 64 and s.counter == 4
    assert DcfState(16).p == pytest.approx(2 / 17)
    st = dcf_step(DcfState(16), "own_collision", np.random.default_rng(0))
    assert 0 <= st.counter < 32
    with pytest.raises(ConjmacError):
        DcfState(24)


# ---------------------------------------------------------------- airtime model
def test_phy_durations():
    phy = PhyParams()
    assert phy.t_success == pytest.approx(20 + 8 * 2332 / 54 + 16 + 20 + 8 * 14 / 54 + 34 + 2)
    assert phy.t_collision == pytest.approx(20 + 8 * 2332 / 54 + 34 + 1)
    with pytest.raises(ConjmacError):
        PhyParams(rate=0)


def test_bianchi_examples():
    phy = PhyParams()
    assert bianchi_throughput([1.0], [1], phy) == pytest.approx(8 * 2304 / phy.t_success)
    assert bianchi_throughput([0.0, 0.0], [3, 4]) == 0.0
    assert bianchi_throughput([0.3], [0]) == 0.0


def test_transmission_probs_unequal_sizes():
    p = np.array([0.1, 0.3])
    sizes = [2, 1]
    nodes = np.array([0.1, 0.1, 0.3])
    exact_tr = 1 - np.prod(1 - nodes)
    exact_s = sum(nodes[i] * np.prod(np.delete(1 - nodes, i)) for i in range(3))
    p_tr, p_s = transmission_probs(p, sizes)
    assert p_tr == pytest.approx(exact_tr) and p_s == pytest.approx(exact_s)
    assert p_s == pytest.approx(throughput(nodes, InterferenceGraph.single_cell(3)).sum())


def monte_carlo_mbps(class_probs, sizes, n_slots, seed, phy=PhyParams()):
    rng = np.random.default_rng(seed)
    n_tx = sum(rng.binomial(s, p, n_slots) for p, s in zip(class_probs, sizes))
    idle = np.sum(n_tx == 0)
    succ = np.sum(n_tx == 1)
    coll = n_slots - idle - succ
    return succ * phy.payload_bits / phy.airtime(idle, succ, coll)


def test_bianchi_matches_monte_carlo():
    p, sizes = [0.02, 0.01], [25, 25]
    mc = monte_carlo_mbps(p, sizes, 10_000_000, 0)
    assert abs(mc / bianchi_throughput(p, sizes) - 1) < 0.01


# ---------------------------------------------------------------- simulator
def test_kernel_backend_is_compiled():
    assert kernel.KERNEL_BACKEND in ("cython", "python")


def _swap_kernel(monkeypatch):
    monkeypatch.setattr(simmod.kernel, "simulate_chunk", _pykernel.simulate_chunk)


@pytest.mark.parametrize("mode", ["slots", "successes"])
def test_kernels_bit_identical(monkeypatch, mode):
    g = InterferenceGraph.from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (0, 3)])
    extra = {"successes_per_stage": 20} if mode == "successes" else {"slots_per_stage": 400}
    cfg = dict(
        graph=g,
        protocols=["conjecture_br", "dcf", "slot_br", "slot_gp", "conjecture_gp", "dcf"],
        slopes=[3, 4, 5, 6, 7, 8],
        stepsize=0.05,
        n_stages=8,
        seed=99,
        events=[SimEvent(3, "leave", (2,)), SimEvent(5, "join", (2,))],
        estimator_window=50,
        **extra,
    )
    a = run_sim(SimConfig(**cfg))
    _swap_kernel(monkeypatch)
    b = run_sim(SimConfig(**cfg))
    for f in ("p", "s_hat", "successes", "attempts", "slopes", "slots", "u_conj", "time_us", "active"):
        assert np.array_equal(getattr(a, f), getattr(b, f), equal_nan=True), f


def test_two_node_br_tracks_exact_fixed_point():
    tr = run_sim(SimConfig(InterferenceGraph.single_cell(2), "conjecture_br", slopes=[3, 3], n_stages=100, seed=2))
    exact = run("best_response", LearnerConfig([3, 3], tr.p[0]), InterferenceGraph.single_cell(2)).final
    assert np.allclose(exact, 0.25)
    assert np.all(np.abs(tr.p[10:] - 0.25) < 0.02)


def test_single_dcf_node():
    tr = run_sim(SimConfig(InterferenceGraph.single_cell(1), "dcf", n_stages=50, slots_per_stage=2000, seed=5))
    assert tr.collision_slots.sum() == 0
    rate = tr.successes.sum() / tr.slots.sum()
    n = tr.slots.sum()
    assert abs(rate - 2 / 17) < 4 * np.sqrt(2 / 17 * (15 / 17) / n)


def test_seed_reproducible_and_sensitive():
    cfg = dict(graph=InterferenceGraph.single_cell(3), protocols="conjecture_gp", slopes=[4, 5, 6], n_stages=10, seed=1)
    a, b = run_sim(SimConfig(**cfg)), run_sim(SimConfig(**cfg))
    for f in ("p", "s_hat", "successes", "mbps"):
        assert np.array_equal(getattr(a, f), getattr(b, f), equal_nan=True)
    c = run_sim(SimConfig(**{**cfg, "seed": 2}))
    assert not np.array_equal(a.successes, c.successes)


def test_trace_accounting():
    g = InterferenceGraph.single_cell(4)
    tr = run_sim(SimConfig(g, "conjecture_br", slopes=[5, 6, 7, 8], n_stages=20, seed=3))
    assert np.all(tr.successes <= tr.slots[:, None])
    assert np.array_equal(tr.success_slots, tr.successes.sum(axis=1))  # single cell: one success per success slot
    assert np.array_equal(tr.idle_slots + tr.success_slots + tr.collision_slots, tr.slots)
    assert np.allclose(tr.slot_throughput * tr.slots, tr.successes.sum(axis=1))
    assert np.all((tr.p >= 0) & (tr.p <= 1))
    phy = PhyParams()
    assert np.allclose(tr.time_us, tr.idle_slots * phy.t_slot + tr.success_slots * phy.t_success + tr.collision_slots * phy.t_collision)


def test_persistent_rates_match_throughput():
    # Large slopes and zero discount keep p almost fixed; compare per-node rates to p_k s_k
    g = InterferenceGraph.from_edges(3, [(0, 1), (1, 2)])
    p = np.array([0.3, 0.2, 0.4])
    a = contention_state(p, g) / p
    tr = run_sim(SimConfig(g, "conjecture_br", slopes=a, initial_probs=p, n_stages=1, slots_per_stage=300_000, seed=8))
    u = throughput(p, g)
    n = tr.slots[0]
    se = np.sqrt(u * (1 - u) / n)
    assert np.all(np.abs(tr.successes[0] / n - u) < 3 * se)


def test_estimator_accuracy_in_simulator():
    g = InterferenceGraph.single_cell(3)
    rng = np.random.default_rng(0)
    errs = []
    for run_id in range(10):
        p = rng.uniform(0.05, 0.5, 3)
        a = contention_state(p, g) / p
        tr = run_sim(SimConfig(g, "conjecture_br", slopes=a, initial_probs=p, n_stages=1, slots_per_stage=100_000, seed=run_id, estimator_window=0))
        errs.append(np.abs(tr.s_hat[0] - contention_state(p, g)))
    assert np.mean(errs) < 0.01


def test_dcf_throughput_decreases_with_size():
    mbps, per_slot = [], []
    for k in (4, 10, 20, 50):
        tr = run_sim(SimConfig(InterferenceGraph.single_cell(k), "dcf", n_stages=20, slots_per_stage=20_000, seed=k))
        mbps.append(tr.overall_mbps())
        per_slot.append(tr.slot_throughput.mean())
    assert all(x > y for x, y in zip(mbps, mbps[1:]))
    # successes per slot rise instead: idle slots are what shrink
    assert per_slot[-1] > per_slot[0]


def test_join_leave_activation():
    K = 6
    cfg = SimConfig(
        InterferenceGraph.single_cell(K), "conjecture_br", slopes=np.full(K, 12.0), n_stages=30, seed=4,
        events=[SimEvent(10, "join", (4, 5)), SimEvent(20, "leave", (4, 5))], adaptive=True, adapt_every=2,
        node_class=np.array([0, 0, 1, 1, 0, 1]), class_weights=np.array([1.0, 0.5]),
    )
    tr = run_sim(cfg)
    assert not tr.active[:10, 4:].any() and tr.active[10:20, 4:].all() and not tr.active[20:, 4:].any()
    assert np.all(tr.successes[:10, 4:] == 0)
    # joiners copy the class slope
    assert tr.slopes[10, 4] == pytest.approx(tr.slopes[9, :2].mean())
    # adaptation after the join raises slopes
    assert tr.slopes[12, 0] > tr.slopes[10, 0]


def test_adaptive_sim_stops_and_is_fair():
    K = 6
    cls = np.array([0, 0, 0, 1, 1, 1])
    chi = np.array([1.0, 0.5])
    tr = run_sim(SimConfig(
        InterferenceGraph.single_cell(K), "conjecture_br", slopes=3 * K / chi[cls], node_class=cls, class_weights=chi,
        adaptive=True, successes_per_stage=50, duration_s=20, n_stages=None, seed=1,
    ))
    assert tr.overall_fairness() > 0.9
    assert tr.sim_time_s >= 20
    assert tr.slopes[-1, 0] < tr.slopes[0, 0]


def test_slot_rule_protocols_run():
    g = InterferenceGraph.single_cell(3)
    tr = run_sim(SimConfig(g, ["slot_br", "slot_gp", "slot_br"], slopes=[4, 4, 4], stepsize=0.05, n_stages=5, seed=0))
    assert np.all((tr.p >= 0) & (tr.p <= 1))
    with pytest.raises(ConjmacError):
        SimConfig(g, "slot_br", slopes=[0.5, 2, 2])
    with pytest.raises(ConjmacError):
        SimConfig(g, "slot_gp", slopes=[4, 4, 4], stepsize=0.5)


def test_config_validation():
    g = InterferenceGraph.single_cell(2)
    with pytest.raises(ConjmacError):
        SimConfig(g, "conjecture_br")
    with pytest.raises(ConjmacError):
        SimConfig(g, "aloha", slopes=[2, 2])
    with pytest.raises(ConjmacError):
        SimConfig(g, "conjecture_br", slopes=[2, 2], n_stages=10, events=[SimEvent(10, "join", (0,))])
