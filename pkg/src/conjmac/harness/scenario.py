"""Scenario files: YAML documents validated by pydantic models.

Unknown keys are rejected everywhere. The scenario hash is the sha256 of
the canonical JSON dump, so it does not depend on key order in the file.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ScenarioError
from ..game import InterferenceGraph, NodePlacement, graph_from_placement
from ..stability import random_placements


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Topology(_Strict):
    kind: Literal["single_cell", "placement", "random_placement"] = "single_cell"
    nodes: int | None = Field(None, ge=1)
    positions: list[tuple[float, float]] | None = None
    file: str | None = None  # whitespace/comma separated x y rows
    threshold: float = Field(40.0, gt=0)
    side: float = Field(100.0, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "single_cell" and self.nodes is None:
            raise ValueError("single_cell topology needs 'nodes'")
        if self.kind == "placement" and (self.positions is None) == (self.file is None):
            raise ValueError("placement topology needs exactly one of 'positions' or 'file'")
        if self.kind == "random_placement" and self.nodes is None:
            raise ValueError("random_placement topology needs 'nodes'")
        return self


class ClassEntry(_Strict):
    size: int = Field(ge=1)
    weight: float = Field(1.0, gt=0)
    phi: float | None = Field(None, gt=0)


class Learner(_Strict):
    rule: Literal["best_response", "gradient_play", "both"] = "best_response"
    slopes: list[float] | None = None
    slope_range: tuple[float, float] | None = None  # uniform draw per node
    initial_profile: list[float] | Literal["random"] = "random"
    stepsize: float | None = Field(None, gt=0)
    discount: float = Field(0.05, ge=0, lt=1)
    max_stages: int = Field(1000, ge=1)
    convergence_tol: float = Field(1e-8, ge=0)
    adaptive: bool = False
    stop: Literal["sum_p_near_one", "aggregate_throughput_peak"] = "sum_p_near_one"
    require_convergence: bool = True


class ScanSpec(_Strict):
    placements: int = Field(200, ge=1)
    nodes: list[int] = [10]
    weights: Literal["equal", "two_tier"] = "two_tier"
    workers: int = Field(1, ge=1)


class StabilitySpec(_Strict):
    point: list[float] | None = None
    slopes: list[float] | None = None
    stepsize: float | None = Field(None, gt=0)
    kind: Literal["best_response", "gradient_play", "both"] = "best_response"
    scan: ScanSpec | None = None


class EquilibriumSpec(_Strict):
    target: list[float] | None = None
    tol: float = Field(1e-9, gt=0)
    allow_small_phi: bool = False


class EventSpec(_Strict):
    stage: int = Field(ge=0)
    kind: Literal["join", "leave"]
    nodes: list[int] | None = None
    class_counts: list[int] | None = None

    @model_validator(mode="after")
    def _check(self):
        if (self.nodes is None) == (self.class_counts is None):
            raise ValueError("an event needs exactly one of 'nodes' or 'class_counts'")
        return self


class SweepSpec(_Strict):
    nodes: list[int] = Field(min_length=1)
    protocols: list[Literal["conjecture_br", "conjecture_gp", "dcf"]] = ["conjecture_br", "dcf"]


class Simulation(_Strict):
    protocol: Literal["conjecture_br", "conjecture_gp", "dcf", "slot_br", "slot_gp"] = "conjecture_br"
    slopes: list[float] | None = None
    phi_per_node: float | None = Field(None, gt=0)  # class slope = phi_per_node * K / chi
    initial_probs: list[float] | None = None
    stepsize: float | None = Field(None, gt=0)
    discount: float = Field(0.05, ge=0, lt=1)
    adaptive: bool = False
    adapt_every: int = Field(5, ge=1)
    adapt_stop: Literal["throughput_peak", "sum_p_near_one", "never"] = "throughput_peak"
    slots_per_stage: int = Field(2000, ge=1)
    successes_per_stage: int | None = Field(None, ge=1)
    n_stages: int | None = Field(100, ge=1)
    duration_s: float | None = Field(None, gt=0)
    estimator_window: int = Field(500, ge=0)
    events: list[EventSpec] = []
    sweep: SweepSpec | None = None


class Output(_Strict):
    dir: str = "out"
    format: Literal["csv", "json"] = "csv"


class Scenario(_Strict):
    name: str
    seed: int = Field(0, ge=0, lt=2**64)
    topology: Topology = Topology(nodes=2)
    classes: list[ClassEntry] | None = None
    equilibrium: EquilibriumSpec | None = None
    learner: Learner | None = None
    stability: StabilitySpec | None = None
    simulation: Simulation | None = None
    output: Output = Output()

    def canonical(self) -> dict:
        return self.model_dump(mode="json")

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.canonical(), sort_keys=True)


def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_scenario(text: str) -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping at the top level")
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(_describe(exc)) from None


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
    scn = parse_scenario(text)
    if scn.topology.file is not None and not Path(scn.topology.file).is_absolute():
        topo = scn.topology.model_copy(update={"file": str(path.parent / scn.topology.file)})
        scn = scn.model_copy(update={"topology": topo})
    return scn


def node_count(scn: Scenario) -> int:
    t = scn.topology
    if t.kind == "placement":
        return len(t.positions) if t.positions is not None else _read_positions(t.file).shape[0]
    return int(t.nodes)


def _read_positions(path: str) -> np.ndarray:
    try:
        rows = np.loadtxt(path, delimiter=None if not path.endswith(".csv") else ",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ScenarioError(f"topology.file: cannot read positions ({exc})") from None
    if rows.shape[1] != 2:
        raise ScenarioError("topology.file: expected two columns (x, y)")
    return rows


def build_graph(scn: Scenario, k: int | None = None) -> InterferenceGraph:
    t = scn.topology
    if t.kind == "single_cell":
        return InterferenceGraph.single_cell(k or t.nodes)
    if t.kind == "placement":
        pos = np.asarray(t.positions, dtype=float) if t.positions is not None else _read_positions(t.file)
        return graph_from_placement(NodePlacement(pos, t.threshold))
    placement = random_placements(1, k or t.nodes, t.side, t.threshold, scn.seed)[0]
    return graph_from_placement(placement)


def class_layout(classes: list[ClassEntry], events: list[EventSpec]):
    """Per-node class labels and resolved event node lists.

    Class n occupies a contiguous block: its initial members, then every
    node that joins it later. Leaves by class count remove the most
    recently joined active members first.
    """
    n_cls = len(classes)
    extra = [0] * n_cls
    for e in events:
        if e.class_counts is not None:
            if len(e.class_counts) != n_cls:
                raise ScenarioError("simulation.events.class_counts: one count per class is required")
            if e.kind == "join":
                extra = [a + b for a, b in zip(extra, e.class_counts)]
    blocks, labels, start = [], [], 0
    for n, c in enumerate(classes):
        total = c.size + extra[n]
        blocks.append(list(range(start, start + total)))
        labels += [n] * total
        start += total
    active = [set(b[: classes[n].size]) for n, b in enumerate(blocks)]
    next_new = [classes[n].size for n in range(n_cls)]
    resolved = []
    for e in sorted(events, key=lambda e: e.stage):
        if e.nodes is not None:
            resolved.append((e.stage, e.kind, tuple(e.nodes)))
            continue
        nodes = []
        for n, cnt in enumerate(e.class_counts):
            if e.kind == "join":
                new = blocks[n][next_new[n] : next_new[n] + cnt]
                next_new[n] += cnt
                active[n].update(new)
            else:
                if cnt > len(active[n]):
                    raise ScenarioError("simulation.events: more nodes leave a class than are active")
                new = sorted(active[n], reverse=True)[:cnt]
                active[n].difference_update(new)
            nodes += new
        resolved.append((e.stage, e.kind, tuple(nodes)))
    return np.array(labels, dtype=int), resolved


def two_class_layout(k: int) -> list[int]:
    return [math.ceil(k / 2), k // 2]
