"""Workflow graph extraction and stochastic walks.

Nodes are the non-idle classes, edges the transitions observed between
consecutive non-idle runs of the source tracks. Idle ("no tool in contact")
is not a node: idle runs ride inside the segments.

A walk starts at a start class, picks outgoing edges in proportion to their
live weights and stops on entering a final class. After every pick the chosen
edge loses ``(1 - decay)`` of its weight, spread equally over the node's other
edges, so a node's live weights always sum to one and long cycles become
unlikely. Live weights are reset from the base weights for every walk.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import networkx as nx
import numpy as np

from workflowaug.exceptions import GraphError, WalkError
from workflowaug.models import ClassCatalog, LabelTrack
from workflowaug.services.annotation import active_runs
from workflowaug.storage import atomic_write_text, dumps_json, read_json

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-9


# ---------- Graph ----------

class WorkflowGraph:
    """Immutable weighted workflow graph backed by a networkx DiGraph."""

    def __init__(
        self,
        graph: nx.DiGraph,
        starts: frozenset,
        finals: frozenset,
        start_counts: Optional[dict] = None,
    ):
        self._graph = nx.freeze(graph)
        self.starts = frozenset(starts)
        self.finals = frozenset(finals)
        self.start_counts = dict(start_counts or {s: 1 for s in self.starts})
        self._successors = {
            node: sorted(self._graph.successors(node)) for node in self._graph.nodes
        }
        self.validate()

    @property
    def nodes(self) -> list[int]:
        return sorted(self._graph.nodes)

    @property
    def nx_graph(self) -> nx.DiGraph:
        return self._graph

    def phase(self, node: int) -> Optional[str]:
        return self._graph.nodes[node].get("phase")

    def successors(self, node: int) -> list[int]:
        return self._successors[node]

    def base_weights(self, node: int) -> np.ndarray:
        return np.array(
            [self._graph.edges[node, succ]["weight"] for succ in self._successors[node]],
            dtype=np.float64,
        )

    def edges(self) -> list[tuple[int, int, float]]:
        return [
            (a, b, self._graph.edges[a, b]["weight"])
            for a in self.nodes
            for b in self._successors[a]
        ]

    def validate(self) -> None:
        if not self.starts:
            raise GraphError("graph has no start classes")
        if not self.finals:
            raise GraphError("graph has no final classes")
        unknown = (self.starts | self.finals) - set(self._graph.nodes)
        if unknown:
            raise GraphError(f"start/final classes {sorted(unknown)} are not graph nodes")
        for node in self._graph.nodes:
            if not self._successors[node]:
                continue
            weights = self.base_weights(node)
            if np.any(weights < 0):
                raise GraphError(f"node {node} has a negative edge weight")
            total = float(weights.sum())
            if abs(total - 1.0) > WEIGHT_TOLERANCE:
                raise GraphError(f"outgoing weights of node {node} sum to {total}, not 1")

    def to_dict(self, catalog: Optional[ClassCatalog] = None) -> dict:
        return {
            "nodes": [
                {
                    "id": n,
                    "name": catalog.name(n) if catalog else None,
                    "phase": self.phase(n),
                }
                for n in self.nodes
            ],
            "starts": sorted(self.starts),
            "finals": sorted(self.finals),
            "start_counts": {str(k): v for k, v in sorted(self.start_counts.items())},
            "edges": [
                {
                    "from": a,
                    "to": b,
                    "weight": w,
                    "count": self._graph.edges[a, b].get("count", 0),
                }
                for a, b, w in self.edges()
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "WorkflowGraph":
        graph = nx.DiGraph()
        try:
            for node in payload["nodes"]:
                graph.add_node(int(node["id"]), phase=node.get("phase"))
            for edge in payload["edges"]:
                a, b = int(edge["from"]), int(edge["to"])
                if a not in graph or b not in graph:
                    raise GraphError(f"edge {a} -> {b} references an unknown node")
                graph.add_edge(a, b, weight=float(edge["weight"]), count=int(edge.get("count", 0)))
            starts = frozenset(int(s) for s in payload["starts"])
            finals = frozenset(int(f) for f in payload["finals"])
            start_counts = {int(k): int(v) for k, v in payload.get("start_counts", {}).items()}
        except (KeyError, TypeError, ValueError) as e:
            raise GraphError(f"malformed graph description: {e}") from e
        return cls(graph, starts, finals, start_counts or None)


def extract_graph(
    tracks: list[LabelTrack],
    catalog: ClassCatalog,
    mode: str = "uniform",
) -> WorkflowGraph:
    """Build the workflow graph from the non-idle run sequences of the tracks."""
    if not tracks:
        raise GraphError("no tracks to extract a workflow from")
    if mode not in ("uniform", "empirical"):
        raise GraphError(f"unknown weight mode {mode}")

    transitions: Counter = Counter()
    start_counts: Counter = Counter()
    finals: set = set()
    nodes: set = set()
    for track in tracks:
        sequence = [r.class_id for r in active_runs(track)]
        if not sequence:
            raise GraphError(f"track {track.video_id} has no non-idle run")
        nodes.update(sequence)
        start_counts[sequence[0]] += 1
        finals.add(sequence[-1])
        transitions.update(zip(sequence, sequence[1:]))

    graph = nx.DiGraph()
    for node in sorted(nodes):
        graph.add_node(node, phase=catalog.phase_of(node))

    outgoing: dict[int, list[tuple[int, int]]] = {}
    for (a, b), count in sorted(transitions.items()):
        outgoing.setdefault(a, []).append((b, count))
    for a, targets in outgoing.items():
        total = sum(count for _, count in targets)
        for b, count in targets:
            weight = 1.0 / len(targets) if mode == "uniform" else count / total
            graph.add_edge(a, b, weight=weight, count=count)

    starts = set(start_counts)
    if catalog.start_names:
        starts = {catalog.index_of(n) for n in catalog.start_names}
    if catalog.final_names:
        finals = {catalog.index_of(n) for n in catalog.final_names}

    workflow = WorkflowGraph(graph, frozenset(starts), frozenset(finals), dict(start_counts))
    logger.info(
        f"Extracted workflow graph from {len(tracks)} tracks: {graph.number_of_nodes()} classes, "
        f"{graph.number_of_edges()} transitions, {len(starts)} starts, {len(finals)} finals ({mode})"
    )
    return workflow


def dump_graph(graph: WorkflowGraph, path: str | Path, catalog: Optional[ClassCatalog] = None) -> Path:
    return atomic_write_text(path, dumps_json(graph.to_dict(catalog)))


def load_graph(path: str | Path) -> WorkflowGraph:
    return WorkflowGraph.from_dict(read_json(path))


def phase_report(graph: WorkflowGraph, catalog: ClassCatalog) -> dict:
    """Classes, starts and finals grouped by phase, in catalog phase order."""
    order = list(catalog.phases)
    report: dict[str, dict] = {}
    for node in graph.nodes:
        phase = graph.phase(node) or "unassigned"
        if phase not in order:
            order.append(phase)
        entry = report.setdefault(phase, {"classes": [], "starts": [], "finals": []})
        entry["classes"].append(catalog.name(node))
        if node in graph.starts:
            entry["starts"].append(catalog.name(node))
        if node in graph.finals:
            entry["finals"].append(catalog.name(node))
    return {phase: report[phase] for phase in order if phase in report}


# ---------- Walks ----------

@dataclass
class WalkState:
    """Single-owner state of one walk: current node, live weights, random stream."""

    graph: WorkflowGraph
    current: int
    rng: np.random.Generator
    live: dict = field(default_factory=dict)

    def weights(self, node: int) -> np.ndarray:
        if node not in self.live:
            self.live[node] = self.graph.base_weights(node)
        return self.live[node]

    def reset(self, current: int) -> None:
        self.current = current
        self.live.clear()


def decay_select(state: WalkState, decay: float = 0.5) -> int:
    """Pick an outgoing edge of the current node and apply the decay rule.

    The chosen weight ``w_j`` becomes ``decay * w_j``; each of the other
    ``N - 1`` edges gains ``(1 - decay) * w_j / (N - 1)``. With one edge the
    weight stays untouched; with ``decay == 1`` nothing changes.
    """
    if not 0 < decay <= 1:
        raise WalkError(f"decay must be in (0, 1], got {decay}")
    targets = state.graph.successors(state.current)
    if not targets:
        raise WalkError(f"dead end at class {state.current}: no outgoing transitions")

    weights = state.weights(state.current)
    cumulative = np.cumsum(weights)
    u = state.rng.random() * cumulative[-1]
    j = min(int(np.searchsorted(cumulative, u, side="right")), len(targets) - 1)

    n = len(targets)
    if n > 1:
        old = weights[j]
        share = (1.0 - decay) * old / (n - 1)
        for k in range(n):
            if k != j:
                weights[k] += share
        weights[j] = decay * old

    state.current = targets[j]
    return state.current


def choose_start(graph: WorkflowGraph, rng: np.random.Generator, mode: str = "uniform") -> int:
    starts = sorted(graph.starts)
    if mode == "empirical":
        counts = np.array([graph.start_counts.get(s, 0) for s in starts], dtype=np.float64)
        if counts.sum() > 0:
            return starts[int(rng.choice(len(starts), p=counts / counts.sum()))]
    return starts[int(rng.integers(len(starts)))]


def sample_sequence(
    graph: WorkflowGraph,
    seed: int,
    max_len: int,
    decay: float = 0.5,
    continue_probability: float = 0.0,
    start_mode: str = "uniform",
) -> list[int]:
    """Walk the graph from a start class to a final class.

    A final class without outgoing edges always ends the walk; one with
    outgoing edges ends it unless a draw falls below ``continue_probability``.
    """
    if max_len < 2:
        raise WalkError(f"max_len must be >= 2, got {max_len}")
    rng = np.random.default_rng(seed)
    start = choose_start(graph, rng, start_mode)
    state = WalkState(graph, start, rng)
    sequence = [start]

    if not graph.successors(start):
        if start in graph.finals:
            return sequence
        raise WalkError(f"dead end at start class {start}")

    while True:
        if len(sequence) >= max_len:
            raise WalkError(f"walk did not terminate within {max_len} classes")
        node = decay_select(state, decay)
        sequence.append(node)
        has_exit = bool(graph.successors(node))
        if node in graph.finals:
            if not has_exit or continue_probability == 0 or rng.random() >= continue_probability:
                return sequence
        elif not has_exit:
            raise WalkError(f"dead end at class {node}: not a final class")
