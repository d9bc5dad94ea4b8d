"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and replayed in the terminal summary, so they
show up under plain ``pytest -v`` without ``-s``.
"""
from __future__ import annotations

import time

import numpy as np
import pytest

from conjmac.dynamics import LearnerConfig, br_step, run
from conjmac.game import (
    InterferenceGraph,
    ce_slopes_for_target,
    contention_state,
    random_simplex_point,
    throughput,
)
from conjmac.hetero import (
    ClassSpec,
    solve_steady_state,
    steady_state_residual,
    weighted_fairness_gap,
)
from conjmac.netsim import SimConfig, bianchi_throughput, run_sim
from conjmac.netsim.rules import slot_rule_br, slot_rule_gp
from conjmac.stability import (
    ParetoWeights,
    br_matrix_general,
    gp_matrix,
    jacobian_br,
    pareto_stability_scan,
    random_placements,
)

pytestmark = pytest.mark.acceptance

REPORT: list[str] = []


def record(num: int, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {num:>2}: {detail}"
    REPORT.append(line)
    print(line)
    return ok


def random_graph(rng, k, density=0.4) -> InterferenceGraph:
    edges = [(i, j) for i in range(k) for j in range(i + 1, k) if rng.random() < density]
    return InterferenceGraph.from_edges(k, edges)


# ---------------------------------------------------------------- 1
def test_criterion_01_fixed_point_exactness():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        k = int(rng.integers(2, 11))
        g = InterferenceGraph.single_cell(k)
        p = rng.uniform(0.01, 0.99, k)
        a = ce_slopes_for_target(p, g)
        worst = max(worst, float(np.max(np.abs(br_step(p, a, g) - p))))
    dt = time.perf_counter() - t0
    ok = worst < 1e-12 and dt < 1.0
    assert record(1, ok, f"max fixed-point residual {worst:.2e} (< 1e-12), {dt:.2f}s (< 1s)")


# ---------------------------------------------------------------- 2
def test_criterion_02_convergence_reproduction():
    g = InterferenceGraph.single_cell(5)
    t0 = time.perf_counter()
    br_stages, gp_stages, gaps = [], [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        a = rng.uniform(5, 10, 5)
        p0 = rng.uniform(0, 1, 5)
        br = run("best_response", LearnerConfig(a, p0, max_stages=1000, convergence_tol=1e-6), g)
        gp = run("gradient_play", LearnerConfig(a, p0, stepsize=0.02, max_stages=5000, convergence_tol=1e-6), g)
        br_stages.append(br.stages_to_converge if br.converged else np.inf)
        gp_stages.append(gp.stages_to_converge if gp.converged else np.inf)
        gaps.append(float(np.max(np.abs(br.final - gp.final))))
    dt = time.perf_counter() - t0
    br_ok = max(br_stages) <= 20
    gp_ok = max(gp_stages) <= 80
    gap_ok = max(gaps) < 1e-5
    ok = br_ok and gp_ok and gap_ok and dt < 5
    detail = (
        f"BR stages {min(br_stages)}-{max(br_stages)} (<= 20: {br_ok}); "
        f"GP stages {min(gp_stages)}-{max(gp_stages)} (<= 80: {gp_ok}); "
        f"max profile gap {max(gaps):.2e} (< 1e-5: {gap_ok}); {dt:.2f}s"
    )
    assert record(2, ok, detail)


# ---------------------------------------------------------------- 3
def test_criterion_03_global_convergence():
    rng = np.random.default_rng(303)
    g = InterferenceGraph.single_cell(6)
    t0 = time.perf_counter()
    vectors, worst_spread, failures = 0, 0.0, 0
    while vectors < 50:
        a = rng.uniform(3, 15, 6)
        if not np.all(np.sum(1 / a) - 1 / a < 1):
            continue
        vectors += 1
        finals = []
        for p0 in rng.uniform(0, 1, (100, 6)):
            tr = run("best_response", LearnerConfig(a, p0, max_stages=2000, convergence_tol=1e-12), g)
            failures += not tr.converged
            finals.append(tr.final)
        finals = np.array(finals)
        worst_spread = max(worst_spread, float(np.max(finals.max(axis=0) - finals.min(axis=0))))
    dt = time.perf_counter() - t0
    ok = failures == 0 and worst_spread < 1e-6 and dt < 30
    assert record(3, ok, f"5000 runs, {failures} not converged, max spread {worst_spread:.2e} (< 1e-6), {dt:.1f}s (< 30s)")


# ---------------------------------------------------------------- 4
def test_criterion_04_spectral_checks():
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    rho_interior = 0.0
    for _ in range(1000):
        k = int(rng.integers(2, 11))
        p = random_simplex_point(rng, k, rng.uniform(0.01, 0.999))
        rho_interior = max(rho_interior, jacobian_br(p, InterferenceGraph.single_cell(k)).spectral_radius)
    rho_pareto, min_eig = 0.0, 0.0
    for _ in range(1000):
        k = int(rng.integers(3, 11))
        p = random_simplex_point(rng, k, 1.0)
        rep = jacobian_br(p, InterferenceGraph.single_cell(k))
        rho_pareto = max(rho_pareto, rep.spectral_radius)
        min_eig = max(min_eig, float(np.min(np.abs(rep.eigenvalues))))
    dt = time.perf_counter() - t0
    ok = rho_interior < 1 and rho_pareto < 1 and min_eig < 1e-9 and dt < 60
    detail = (
        f"(a) max rho {rho_interior:.4f} (< 1); (b) max rho {rho_pareto:.4f} (< 1); "
        f"(c) worst smallest |eig| {min_eig:.1e} (< 1e-9); {dt:.1f}s"
    )
    assert record(4, ok, detail)


# ---------------------------------------------------------------- 5
def _fd_jacobian(f, p, h=1e-6):
    k = p.size
    out = np.empty((k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = h
        out[:, j] = (f(p + e) - f(p - e)) / (2 * h)
    return out


def test_criterion_05_finite_differences():
    rng = np.random.default_rng(505)
    t0 = time.perf_counter()
    worst = {"br single": 0.0, "br adhoc": 0.0, "gp single": 0.0, "gp adhoc": 0.0, "br equilibrium": 0.0}
    for i in range(100):
        k = int(rng.integers(2, 9))
        for topo in ("single", "adhoc"):
            g = InterferenceGraph.single_cell(k) if topo == "single" else random_graph(rng, k)
            p = rng.uniform(0.05, 0.6, k)
            a = rng.uniform(1.5, 10, k)
            gamma = 0.5 / np.max(a * (1 + g.adjacency @ (1 / a)))
            br = lambda q: q / 2 + contention_state(q, g) / (2 * a)
            gp = lambda q: q + gamma * (contention_state(q, g) - a * q)
            worst[f"br {topo}"] = max(worst[f"br {topo}"], float(np.max(np.abs(br_matrix_general(p, a, g) - _fd_jacobian(br, p)))))
            worst[f"gp {topo}"] = max(worst[f"gp {topo}"], float(np.max(np.abs(gp_matrix(p, a, gamma, g) - _fd_jacobian(gp, p)))))
            # equilibrium form, CE slopes frozen at the target
            ae = ce_slopes_for_target(p, g)
            bre = lambda q: q / 2 + contention_state(q, g) / (2 * ae)
            worst["br equilibrium"] = max(worst["br equilibrium"], float(np.max(np.abs(jacobian_br(p, g).matrix - _fd_jacobian(bre, p)))))
    dt = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-5 and dt < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert record(5, ok, f"max entrywise error: {detail} (< 1e-5), {dt:.1f}s")


# ---------------------------------------------------------------- 6
def _random_spec(rng):
    n = int(rng.integers(1, 4))
    return ClassSpec.from_arrays(rng.uniform(2, 40, n), rng.integers(1, 6, n))


def test_criterion_06_hetero_solver():
    rng = np.random.default_rng(606)
    t0 = time.perf_counter()
    worst_res = 0.0
    for _ in range(100):
        spec = _random_spec(rng)
        sol = solve_steady_state(spec)
        worst_res = max(worst_res, abs(steady_state_residual(sol.varrho, spec)))
    closed = []
    for phi in (2.0, 3.0, 4.0, 10.0, 37.5):
        closed.append(abs(solve_steady_state(ClassSpec.from_arrays([phi], [1])).class_probs[0] - 1 / phi))
    closed.append(abs(solve_steady_state(ClassSpec.from_arrays([4.0], [2])).class_probs[0] - 0.2))
    checked, worst_dyn = 0, 0.0
    while checked < 30:
        spec = _random_spec(rng)
        a = spec.node_slopes()
        if not np.all(np.sum(1 / a) - 1 / a < 1):
            continue
        checked += 1
        g = InterferenceGraph.single_cell(a.size)
        tr = run("best_response", LearnerConfig(a, rng.uniform(0, 1, a.size), max_stages=5000, convergence_tol=1e-13), g)
        target = solve_steady_state(spec).node_probs(spec)
        worst_dyn = max(worst_dyn, float(np.max(np.abs(tr.final - target))) if tr.converged else np.inf)
    dt = time.perf_counter() - t0
    ok = worst_res < 1e-12 and max(closed) < 1e-12 and worst_dyn < 1e-6 and dt < 30
    detail = (
        f"max residual {worst_res:.1e} (< 1e-12); closed forms {max(closed):.1e} (< 1e-12); "
        f"dynamics gap {worst_dyn:.1e} over {checked} specs (< 1e-6); {dt:.1f}s"
    )
    assert record(6, ok, detail)


# ---------------------------------------------------------------- 7
def test_criterion_07_weighted_fairness():
    t0 = time.perf_counter()
    phi = np.array([30.0, 60.0])
    spec = ClassSpec.from_arrays(phi, [25, 25], 1 / phi)
    gap = weighted_fairness_gap(solve_steady_state(spec).class_probs, 1 / phi)
    dt = time.perf_counter() - t0
    assert record(7, gap < 0.05 and dt < 1, f"weighted fairness gap {gap:.4f} (< 0.05), {dt:.3f}s")


# ---------------------------------------------------------------- 8
def _persistent(g, p, slots, seed, **kw):
    a = contention_state(p, g) / p
    return run_sim(SimConfig(g, "conjecture_br", slopes=a, initial_probs=p, n_stages=1, slots_per_stage=slots, seed=seed, **kw))


def test_criterion_08_simulator_fidelity():
    t0 = time.perf_counter()
    worst_z = 0.0
    cases = [
        (InterferenceGraph.single_cell(4), np.array([0.1, 0.2, 0.15, 0.3])),
        (InterferenceGraph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)]), np.array([0.25, 0.1, 0.3, 0.2, 0.4])),
    ]
    for i, (g, p) in enumerate(cases):
        tr = _persistent(g, p, 1_000_000, 80 + i)
        n = tr.slots[0]
        u = throughput(p, g)
        se = np.sqrt(u * (1 - u) / n)
        worst_z = max(worst_z, float(np.max(np.abs(tr.successes[0] / n - u) / se)))
    rng = np.random.default_rng(808)
    errs = []
    for run_id in range(10):
        k = int(rng.integers(2, 7))
        g = InterferenceGraph.single_cell(k)
        p = rng.uniform(0.02, 0.5, k)
        tr = _persistent(g, p, 100_000, 900 + run_id, estimator_window=0)
        errs.append(np.abs(tr.s_hat[0] - contention_state(p, g)))
    mae = float(np.mean(np.concatenate(errs)))
    dt = time.perf_counter() - t0
    ok = worst_z < 3 and mae < 0.01 and dt < 60
    assert record(8, ok, f"max |z| {worst_z:.2f} (< 3 SE over 1e6 slots); estimator MAE {mae:.4f} (< 0.01); {dt:.1f}s")


# ---------------------------------------------------------------- 9
def test_criterion_09_slot_rule_identities():
    rng = np.random.default_rng(909)
    t0 = time.perf_counter()
    err_br = err_gp = 0.0
    for _ in range(100):
        p, s = rng.uniform(0, 1, 2)
        a = rng.uniform(1.01, 20)
        gamma = rng.uniform(0.01, 0.99) / a
        e_br = (1 - s) * slot_rule_br(p, a, "busy") + (1 - p) * s * slot_rule_br(p, a, "idle") + p * s * slot_rule_br(p, a, "own_success")
        e_gp = (1 - s) * slot_rule_gp(p, a, gamma, "busy") + s * slot_rule_gp(p, a, gamma, "not_busy")
        err_br = max(err_br, abs(e_br - (p / 2 + s / (2 * a))))
        err_gp = max(err_gp, abs(e_gp - (p + gamma * (s - a * p))))
    dt = time.perf_counter() - t0
    ok = err_br < 1e-12 and err_gp < 1e-12 and dt < 1
    assert record(9, ok, f"best-response identity {err_br:.1e}, gradient identity {err_gp:.1e} (< 1e-12), {dt:.3f}s")


# ---------------------------------------------------------------- 10
def _two_class(k, protocol, seconds, seed=5):
    chi = np.array([1.0, 0.5])
    cls = np.repeat([0, 1], [(k + 1) // 2, k // 2])
    slopes = None if protocol == "dcf" else 3.0 * k / chi[cls]
    return run_sim(SimConfig(
        InterferenceGraph.single_cell(k), protocol, slopes=slopes, node_class=cls, class_weights=chi,
        adaptive=protocol != "dcf", successes_per_stage=50, duration_s=seconds, n_stages=None, seed=seed,
    ))


def test_criterion_10_fairness_index():
    t0 = time.perf_counter()
    conj = {k: _two_class(k, "conjecture_br", 180.0).overall_fairness() for k in (4, 10, 20)}
    dcf20 = _two_class(20, "dcf", 180.0).overall_fairness()
    dt = time.perf_counter() - t0
    ok = min(conj.values()) > 0.95 and dcf20 < conj[20] and dt < 300
    vals = ", ".join(f"K={k} F={v:.4f}" for k, v in conj.items())
    assert record(10, ok, f"{vals} (> 0.95); DCF K=20 F={dcf20:.4f} (< {conj[20]:.4f}); {dt:.1f}s")


# ---------------------------------------------------------------- 11
def test_criterion_11_adhoc_scan():
    t0 = time.perf_counter()
    fracs, max_rho = [], 0.0
    for n in (10, 20, 40):
        res = pareto_stability_scan(random_placements(200, n, 100.0, 40.0, seed=1100 + n), ParetoWeights.two_tier(n))
        fracs.append(res.fraction_stable)
        max_rho = max(max_rho, res.max_rho)
    dt = time.perf_counter() - t0
    monotone = all(x <= y for x, y in zip(fracs, fracs[1:]))
    ok = max_rho <= 1 + 1e-9 and monotone and dt < 300
    detail = f"max rho {max_rho:.12f} (<= 1 + 1e-9); stable fractions 10/20/40 = {fracs} (non-decreasing: {monotone}); {dt:.1f}s"
    assert record(11, ok, detail)


# ---------------------------------------------------------------- 12
def test_criterion_12_throughput_substitute():
    t0 = time.perf_counter()
    g = InterferenceGraph.single_cell(50)
    p = np.repeat([0.02, 0.01], 25)
    tr = _persistent(g, p, 2_000_000, 1200)
    model = bianchi_throughput([0.02, 0.01], [25, 25])
    rel = abs(tr.mbps[0] / model - 1)
    order = {}
    for k in (4, 10, 20, 30, 40, 50):
        order[k] = (_two_class(k, "conjecture_br", 20.0).overall_mbps(), _two_class(k, "dcf", 20.0).overall_mbps())
    ordered = all(c >= d for c, d in order.values())
    dt = time.perf_counter() - t0
    ok = rel < 0.01 and ordered
    pairs = ", ".join(f"K={k} {c:.1f}/{d:.1f}" for k, (c, d) in order.items())
    assert record(12, ok, f"Monte-Carlo {tr.mbps[0]:.3f} vs model {model:.3f} Mbps (rel {rel:.2e} < 1%); conjecture/DCF Mbps {pairs}; {dt:.1f}s")


@pytest.fixture(scope="module", autouse=True)
def _summary(request):
    yield
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is None or not REPORT:
        return
    reporter.write_sep("=", "acceptance criteria")
    for line in sorted(REPORT, key=lambda s: int(s.split()[2].rstrip(":"))):
        reporter.write_line(line)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
