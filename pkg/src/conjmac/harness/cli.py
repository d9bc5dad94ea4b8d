"""Command line entry point: ``conjmac {equilibrium,learn,stability,simulate}``.

Exit codes: 0 success, 2 configuration error (nothing written),
3 a run that must converge did not.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..dynamics import LearnerConfig, aggregate_throughput, run, run_adaptive, safe_stepsize
from ..errors import ConjmacError, ScenarioError
from ..game import belief_at, ce_slopes_for_target, contention_state, verify_ce
from ..hetero import ClassSpec, solve_steady_state, weighted_fairness_gap
from ..netsim import SimConfig, SimEvent, run_sim
from ..stability import ParetoWeights, jacobian_br, jacobian_gp, pareto_stability_scan, random_placements, sufficient_conditions
from .scenario import Scenario, build_graph, class_layout, load_scenario, node_count, two_class_layout

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 2, 3


@dataclass
class RunArtifact:
    scenario_name: str
    scenario_hash: str
    command: str
    seed: int
    summary: dict
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    tool_version: str = __version__
    converged: bool = True

    def manifest(self, files: list[str]) -> dict:
        return {
            "scenario": self.scenario_name,
            "scenario_hash": self.scenario_hash,
            "tool_version": self.tool_version,
            "command": self.command,
            "seed": self.seed,
            "trace_files": files,
            "summary": self.summary,
        }


def _f(x) -> float | None:
    x = float(x)
    return None if np.isnan(x) else x


def _artifact(scn: Scenario, command: str) -> RunArtifact:
    return RunArtifact(scn.name, scn.hash(), command, scn.seed, {})


# ---------------------------------------------------------------- equilibrium
def cmd_equilibrium(scn: Scenario) -> RunArtifact:
    spec = scn.equilibrium
    if (spec is None or spec.target is None) and not scn.classes:
        raise ScenarioError("equilibrium: give 'equilibrium.target' or 'classes'")
    art = _artifact(scn, "equilibrium")
    if spec is not None and spec.target is not None:
        graph = build_graph(scn)
        slopes = ce_slopes_for_target(spec.target, graph)
        check = verify_ce(spec.target, belief_at(spec.target, graph, slopes), graph, spec.tol)
        s = contention_state(spec.target, graph)
        art.tables["equilibrium"] = (
            ["node", "target", "slope", "s", "belief_residual", "action_residual"],
            [[k, spec.target[k], slopes[k], s[k], check.belief_residual[k], check.action_residual[k]] for k in range(graph.node_count)],
        )
        art.summary.update(slopes=slopes.tolist(), ce_verified=check.ok, max_residual=float(check.residual.max()))
    if scn.classes:
        if any(c.phi is None for c in scn.classes):
            raise ScenarioError("classes: every class needs 'phi' for the steady-state solver")
        cs = ClassSpec.from_arrays([c.phi for c in scn.classes], [c.size for c in scn.classes], [c.weight for c in scn.classes])
        allow = spec.allow_small_phi if spec is not None else False
        sol = solve_steady_state(cs, allow_small_phi=allow)
        art.tables["classes"] = (
            ["class", "phi", "size", "weight", "p"],
            [[n, c.phi, c.size, c.weight, sol.class_probs[n]] for n, c in enumerate(cs.classes)],
        )
        art.summary.update(
            varrho=sol.varrho,
            class_probs=sol.class_probs.tolist(),
            residual=sol.residual,
            within_theorem=sol.within_theorem,
            fairness_gap_inverse_phi=weighted_fairness_gap(sol.class_probs, 1.0 / cs.phis),
            fairness_gap_weights=weighted_fairness_gap(sol.class_probs, cs.weights),
        )
    return art


# ---------------------------------------------------------------- learn
def _learner_inputs(scn: Scenario, k: int):
    L = scn.learner
    rng = np.random.default_rng(scn.seed)
    if L.slopes is not None:
        slopes = np.asarray(L.slopes, dtype=float)
    elif L.slope_range is not None:
        slopes = rng.uniform(*L.slope_range, size=k)
    elif scn.classes and all(c.phi is not None for c in scn.classes):
        slopes = np.repeat([c.phi for c in scn.classes], [c.size for c in scn.classes]).astype(float)
    else:
        raise ScenarioError("learner: give 'slopes', 'slope_range' or classes with 'phi'")
    if slopes.size != k:
        raise ScenarioError(f"learner.slopes: {slopes.size} values for {k} nodes")
    p0 = rng.uniform(0.0, 1.0, size=k) if L.initial_profile == "random" else np.asarray(L.initial_profile, dtype=float)
    if p0.size != k:
        raise ScenarioError(f"learner.initial_profile: {p0.size} values for {k} nodes")
    return slopes, p0


def cmd_learn(scn: Scenario) -> RunArtifact:
    if scn.learner is None:
        raise ScenarioError("learn: scenario has no 'learner' section")
    L = scn.learner
    k = sum(c.size for c in scn.classes) if scn.classes else node_count(scn)
    graph = build_graph(scn, k)
    slopes, p0 = _learner_inputs(scn, graph.node_count)
    cfg = LearnerConfig(slopes, p0, L.stepsize, L.discount, L.max_stages, L.convergence_tol)
    kinds = ["best_response", "gradient_play"] if L.rule == "both" else [L.rule]
    art = _artifact(scn, "learn")
    finals, ok = {}, True
    for kind in kinds:
        if L.adaptive:
            res = run_adaptive(kind, cfg, graph, L.stop)
            rows = []
            for it, (a, traj) in enumerate(res):
                agg = aggregate_throughput(traj.final, graph)
                for node in range(graph.node_count):
                    rows.append([it, node, a[node], traj.final[node], traj.final.sum(), agg])
            art.tables[f"adaptive_{kind}"] = (["iteration", "node", "slope", "p", "sum_p", "aggregate_throughput"], rows)
            final = res[-1][1].final
            ok &= not res.failed
            art.summary[kind] = {"outer_iterations": len(res), "stop_reason": res.stop_reason, "final_profile": final.tolist(), "sum_p": float(final.sum())}
        else:
            traj = run(kind, cfg, graph)
            rows = [
                [t, node, p[node], s[node], _f(u[node])]
                for t, p, u, s in traj.stages
                for node in range(graph.node_count)
            ]
            art.tables[f"learn_{kind}"] = (["stage", "node", "p", "s", "conjectured_utility"], rows)
            final = traj.final
            ok &= traj.converged
            art.summary[kind] = {
                "converged": traj.converged,
                "stages_to_converge": traj.stages_to_converge,
                "final_profile": final.tolist(),
            }
            if kind == "gradient_play":
                art.summary[kind]["stepsize"] = cfg.stepsize if cfg.stepsize is not None else safe_stepsize(slopes, graph)
        finals[kind] = final
    art.summary["slopes"] = slopes.tolist()
    art.summary["converged"] = bool(ok)
    if len(finals) == 2:
        art.summary["final_profile_gap"] = float(np.max(np.abs(finals["best_response"] - finals["gradient_play"])))
    art.converged = ok or not L.require_convergence
    return art


# ---------------------------------------------------------------- stability
def _jacobian_rows(rep) -> list[list]:
    K = rep.matrix.shape[0]
    return [[i, j, rep.matrix[i, j]] for i in range(K) for j in range(K)]


def cmd_stability(scn: Scenario) -> RunArtifact:
    spec = scn.stability
    if spec is None:
        raise ScenarioError("stability: scenario has no 'stability' section")
    if spec.point is None and spec.slopes is None and spec.scan is None:
        raise ScenarioError("stability: give 'point', 'slopes' or 'scan'")
    art = _artifact(scn, "stability")
    if spec.point is not None or spec.slopes is not None:
        graph = build_graph(scn)
        if spec.point is None:
            art.summary["conditions"] = sufficient_conditions(graph, None, spec.slopes).as_dict()
        else:
            kinds = ["best_response", "gradient_play"] if spec.kind == "both" else [spec.kind]
            for kind in kinds:
                if kind == "best_response":
                    rep = jacobian_br(spec.point, graph, spec.slopes)
                else:
                    a = spec.slopes if spec.slopes is not None else ce_slopes_for_target(spec.point, graph)
                    gamma = spec.stepsize or safe_stepsize(a, graph)
                    rep = jacobian_gp(spec.point, gamma, graph, spec.slopes)
                art.tables[f"jacobian_{kind}"] = (["row", "col", "value"], _jacobian_rows(rep))
                art.summary[kind] = rep.as_dict()
    if spec.scan is not None:
        t = scn.topology
        scans = {}
        for n in spec.scan.nodes:
            weights = ParetoWeights.two_tier(n) if spec.scan.weights == "two_tier" else ParetoWeights(np.ones(n))
            res = pareto_stability_scan(random_placements(spec.scan.placements, n, t.side, t.threshold, scn.seed), weights, spec.scan.workers)
            x, cdf = res.cdf
            art.tables[f"scan_{n}"] = (["rank", "rho", "cdf"], [[i, x[i], cdf[i]] for i in range(x.size)])
            scans[str(n)] = {
                "fraction_stable": res.fraction_stable,
                "fraction_marginal": res.fraction_marginal,
                "max_rho": res.max_rho,
            }
        art.summary["scan"] = scans
    return art


# ---------------------------------------------------------------- simulate
def _sim_config(scn: Scenario, S, k_override: int | None = None, protocol: str | None = None) -> SimConfig:
    protocol = protocol or S.protocol
    if k_override is not None:
        classes = scn.classes or []
        chis = [c.weight for c in classes] or [1.0, 1.0]
        sizes = two_class_layout(k_override) if len(chis) == 2 else [k_override // len(chis)] * len(chis)
        sizes[0] += k_override - sum(sizes)
        labels = np.repeat(np.arange(len(chis)), sizes)
        events = []
    elif scn.classes:
        chis = [c.weight for c in scn.classes]
        labels, events = class_layout(scn.classes, S.events)
    else:
        chis = [1.0]
        labels = np.zeros(node_count(scn), dtype=int)
        events = [(e.stage, e.kind, tuple(e.nodes or ())) for e in S.events]
        if any(e.class_counts is not None for e in S.events):
            raise ScenarioError("simulation.events.class_counts needs a 'classes' section")
    K = labels.size
    chis = np.asarray(chis, dtype=float)
    if protocol == "dcf":
        slopes = None
    elif S.slopes is not None and k_override is None:
        slopes = np.asarray(S.slopes, dtype=float)
    elif S.phi_per_node is not None:
        slopes = S.phi_per_node * K / chis[labels]
    elif scn.classes and all(c.phi is not None for c in scn.classes):
        slopes = np.asarray([scn.classes[n].phi for n in labels], dtype=float)
    else:
        raise ScenarioError("simulation: give 'slopes', 'phi_per_node' or classes with 'phi'")
    if scn.topology.kind == "single_cell" or k_override is not None:
        graph = build_graph(scn.model_copy(update={"topology": scn.topology.model_copy(update={"kind": "single_cell", "nodes": K})}), K)
    else:
        graph = build_graph(scn, K)
        if graph.node_count != K:
            raise ScenarioError(f"topology has {graph.node_count} nodes, classes need {K}")
    return SimConfig(
        graph,
        protocol,
        slopes=slopes,
        initial_probs=S.initial_probs if k_override is None else None,
        stepsize=S.stepsize,
        discount=S.discount,
        adaptive=S.adaptive and protocol != "dcf",
        adapt_every=S.adapt_every,
        adapt_stop=S.adapt_stop,
        slots_per_stage=S.slots_per_stage,
        successes_per_stage=S.successes_per_stage,
        n_stages=None if S.duration_s is not None else S.n_stages,
        duration_s=S.duration_s,
        seed=scn.seed,
        events=[SimEvent(*e) for e in events],
        node_class=labels,
        class_weights=chis,
        estimator_window=S.estimator_window,
    )


def cmd_simulate(scn: Scenario) -> RunArtifact:
    S = scn.simulation
    if S is None:
        raise ScenarioError("simulate: scenario has no 'simulation' section")
    art = _artifact(scn, "simulate")
    if S.sweep is not None:
        configs = [(k, proto, _sim_config(scn, S, k, proto)) for k in S.sweep.nodes for proto in S.sweep.protocols]
        rows = []
        for k, proto, cfg in configs:
            tr = run_sim(cfg)
            rows.append([proto, k, tr.overall_mbps(), float(np.mean(tr.expected_mbps)), float(tr.slot_throughput.mean()), tr.overall_fairness(), tr.n_stages])
        art.tables["sweep"] = (["protocol", "nodes", "mbps", "expected_mbps", "slot_throughput", "fairness", "stages"], rows)
        art.summary["sweep"] = [dict(zip(art.tables["sweep"][0], r)) for r in rows]
        return art
    tr = run_sim(_sim_config(scn, S))
    K = tr.p.shape[1]
    rows = []
    for t in range(tr.n_stages):
        for k in range(K):
            if tr.active[t, k]:
                rows.append([t, k, tr.p[t, k], _f(tr.s_hat[t, k]), _f(tr.u_conj[t, k]), int(tr.successes[t, k])])
    art.tables["simulate"] = (["stage", "node", "p", "s_hat", "u_conj", "successes"], rows)
    stage_rows = [
        [t, int(tr.slots[t]), int(tr.idle_slots[t]), int(tr.success_slots[t]), int(tr.collision_slots[t]),
         float(tr.time_us[t]), float(tr.mbps[t]), float(tr.expected_mbps[t]), _f(tr.fairness[t]),
         float(tr.p[t][tr.active[t]].sum()), int(tr.active[t].sum())]
        for t in range(tr.n_stages)
    ]
    art.tables["simulate_stages"] = (
        ["stage", "slots", "idle_slots", "success_slots", "collision_slots", "time_us", "mbps", "expected_mbps", "fairness", "sum_p", "active_nodes"],
        stage_rows,
    )
    art.summary.update(tr.summary())
    return art


COMMANDS = {
    "equilibrium": cmd_equilibrium,
    "learn": cmd_learn,
    "stability": cmd_stability,
    "simulate": cmd_simulate,
}


def _render(header, rows, fmt: str) -> str:
    if fmt == "json":
        return json.dumps([dict(zip(header, r)) for r in rows], default=_json_default) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in r])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def write_artifact(art: RunArtifact, out: Path, fmt: str) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, (header, rows) in art.tables.items():
        fname = f"{name}.{fmt}"
        (out / fname).write_text(_render(header, rows, fmt))
        files.append(fname)
    (out / "summary.json").write_text(json.dumps(art.manifest(files), indent=2, sort_keys=True, default=_json_default) + "\n")
    return files


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conjmac", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"conjmac {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--scenario", required=True, help="YAML scenario file")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--out", default=None, help="output directory (default: scenario output.dir)")
        sp.add_argument("--format", choices=("csv", "json"), default=None, help="trace file format")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scn = load_scenario(args.scenario)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ScenarioError("--seed must be an unsigned 64-bit integer")
            scn = scn.model_copy(update={"seed": args.seed})
        art = COMMANDS[args.command](scn)
    except ConjmacError as exc:
        print(f"conjmac: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or scn.output.dir)
    fmt = args.format or scn.output.format
    write_artifact(art, out, fmt)
    print(json.dumps({"out": str(out), "summary": art.summary}, default=_json_default, sort_keys=True))
    if not art.converged:
        print("conjmac: run did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
