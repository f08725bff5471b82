import time

import networkx as nx
import numpy as np
import pytest

from tests.conftest import make_track
from workflowaug.exceptions import GraphError, WalkError
from workflowaug.models import ClassCatalog
from workflowaug.services.workflow_graph import (
    WalkState,
    WorkflowGraph,
    decay_select,
    dump_graph,
    extract_graph,
    load_graph,
    phase_report,
    sample_sequence,
)

S, A, B, F = 1, 2, 3, 4


@pytest.fixture
def catalog():
    return ClassCatalog.build(
        ["s", "a", "b", "f"],
        [
            {"tools": ["s"], "phase": "open"},
            {"tools": ["a"], "phase": "work"},
            {"tools": ["b"], "phase": "work"},
            {"tools": ["f"], "phase": "close"},
        ],
        phases=["open", "work", "close"],
    )


def build_graph(edges, starts, finals) -> WorkflowGraph:
    graph = nx.DiGraph()
    for a, b, w in edges:
        graph.add_edge(a, b, weight=w)
    return WorkflowGraph(graph, frozenset(starts), frozenset(finals))


class FirstEdgeRng:
    """Always draws 0.0, so the first outgoing edge with weight is picked."""

    def random(self):
        return 0.0


# ---------- Extraction ----------

def test_extract_single_track(catalog):
    graph = extract_graph([make_track("v", [(0, 3), (S, 4), (A, 4), (0, 2), (F, 4)])], catalog)
    assert graph.nodes == [S, A, F]
    assert graph.edges() == [(S, A, 1.0), (A, F, 1.0)]
    assert graph.starts == {S} and graph.finals == {F}


def test_extract_uniform_weights_over_four_edges():
    catalog = ClassCatalog.build(list("sabcdf"), [{"tools": [t]} for t in "sabcdf"])
    tracks = [make_track(f"v{i}", [(1, 2), (target, 2), (6, 2)]) for i, target in enumerate([2, 3, 4, 5, 2, 2])]
    graph = extract_graph(tracks, catalog, mode="uniform")
    assert graph.base_weights(1).tolist() == [0.25] * 4


def test_extract_empirical_weights(catalog):
    tracks = [
        make_track("v1", [(S, 2), (A, 2), (F, 2)]),
        make_track("v2", [(S, 2), (B, 2), (F, 2)]),
    ]
    graph = extract_graph(tracks, catalog, mode="empirical")
    assert graph.base_weights(S).tolist() == [0.5, 0.5]

    tracks.append(make_track("v3", [(S, 2), (A, 2), (F, 2)]))
    graph = extract_graph(tracks, catalog, mode="empirical")
    assert graph.base_weights(S).tolist() == pytest.approx([2 / 3, 1 / 3])


def test_catalog_start_and_final_names_override():
    catalog = ClassCatalog.build(
        ["s", "a", "f"], [{"tools": [t]} for t in "saf"], start_names=["s"], final_names=["f"]
    )
    tracks = [make_track("v1", [(1, 2), (2, 2), (3, 2)]), make_track("v2", [(2, 2), (3, 2)])]
    graph = extract_graph(tracks, catalog)
    assert graph.starts == {1}
    assert graph.start_counts == {1: 1, 2: 1}


def test_extract_rejects_empty_input(catalog):
    with pytest.raises(GraphError):
        extract_graph([], catalog)
    with pytest.raises(GraphError, match="no non-idle run"):
        extract_graph([make_track("v", [(0, 5)])], catalog)


def test_graph_weights_must_sum_to_one():
    with pytest.raises(GraphError, match="sum to"):
        build_graph([(S, A, 0.5), (S, F, 0.3), (A, F, 1.0)], {S}, {F})


def test_dump_and_load(tmp_path, catalog):
    tracks = [make_track("v1", [(S, 2), (A, 2), (F, 2)]), make_track("v2", [(S, 2), (B, 2), (A, 1), (F, 2)])]
    graph = extract_graph(tracks, catalog, mode="empirical")
    path = dump_graph(graph, tmp_path / "graph.json", catalog)
    loaded = load_graph(path)
    assert loaded.edges() == graph.edges()
    assert loaded.starts == graph.starts and loaded.finals == graph.finals
    assert loaded.phase(A) == "work"
    assert path.read_bytes() == dump_graph(loaded, tmp_path / "again.json", catalog).read_bytes()


def test_phase_report(catalog):
    graph = extract_graph([make_track("v", [(S, 2), (A, 2), (B, 2), (F, 2)])], catalog)
    report = phase_report(graph, catalog)
    assert list(report) == ["open", "work", "close"]
    assert report["work"]["classes"] == ["a", "b"]
    assert report["open"]["starts"] == ["s"]
    assert report["close"]["finals"] == ["f"]


# ---------- Decay rule ----------

def test_decay_select_three_edges():
    graph = build_graph([(S, A, 1 / 3), (S, B, 1 / 3), (S, F, 1 / 3)], {S}, {A, B, F})
    state = WalkState(graph, S, FirstEdgeRng())
    assert decay_select(state, 0.5) == A
    weights = state.live[S]
    assert weights.tolist() == pytest.approx([1 / 6, 5 / 12, 5 / 12])
    assert sum(float(w) for w in weights) == pytest.approx(1.0)


def test_decay_select_single_edge_is_unchanged():
    graph = build_graph([(S, F, 1.0)], {S}, {F})
    state = WalkState(graph, S, np.random.default_rng(0))
    decay_select(state, 0.5)
    assert state.live[S].tolist() == [1.0]


def test_repeated_selection_decays_geometrically():
    graph = build_graph([(S, A, 1 / 3), (S, B, 1 / 3), (S, F, 1 / 3)], {S}, {A, B, F})
    state = WalkState(graph, S, FirstEdgeRng())
    for k in range(1, 6):
        state.current = S
        decay_select(state, 0.5)
        assert state.live[S][0] == pytest.approx(0.5**k / 3)


def test_decay_rejects_out_of_range():
    graph = build_graph([(S, F, 1.0)], {S}, {F})
    with pytest.raises(WalkError):
        decay_select(WalkState(graph, S, np.random.default_rng(0)), 0.0)


def test_weight_algebra_on_random_graphs():
    rng = np.random.default_rng(7)
    started = time.perf_counter()
    for trial in range(100):
        n = int(rng.integers(3, 11))
        raw = rng.random(n) + 0.01
        graph = build_graph([(0, k + 1, w) for k, w in enumerate(raw / raw.sum())], {0}, set(range(1, n + 1)))
        state = WalkState(graph, 0, rng)
        for _ in range(100):
            state.current = 0
            decay_select(state, 0.5)
            total = float(np.sum(state.live[0]))
            assert 1 - 1e-9 <= total <= 1 + 1e-9

        state = WalkState(graph, 0, rng)
        before = graph.base_weights(0).copy()
        for _ in range(20):
            state.current = 0
            decay_select(state, 1.0)
        assert np.array_equal(state.live[0], before)
    assert time.perf_counter() - started < 5


def test_first_pick_follows_uniform_weights():
    n, draws = 4, 100_000
    graph = build_graph([(0, k, 1 / n) for k in range(1, n + 1)], {0}, set(range(1, n + 1)))
    state = WalkState(graph, 0, np.random.default_rng(17))
    counts = np.zeros(n + 1, dtype=np.int64)
    for _ in range(draws):
        state.reset(0)
        counts[decay_select(state, 0.5)] += 1
    sigma = np.sqrt(draws * (1 / n) * (1 - 1 / n))
    assert np.all(np.abs(counts[1:] - draws / n) < 3 * sigma)


# ---------- Walks ----------

def test_walk_single_edge():
    graph = build_graph([(S, F, 1.0)], {S}, {F})
    for seed in range(10):
        assert sample_sequence(graph, seed, max_len=10) == [S, F]


def test_walk_with_self_loop_terminates_on_valid_paths():
    graph = build_graph([(S, A, 1.0), (A, A, 0.5), (A, F, 0.5)], {S}, {F})
    for seed in range(2000):
        sequence = sample_sequence(graph, seed, max_len=500)
        assert sequence[0] == S and sequence[-1] == F
        for a, b in zip(sequence, sequence[1:]):
            assert graph.nx_graph.has_edge(a, b)


def test_walk_is_deterministic():
    graph = build_graph([(S, A, 0.5), (S, B, 0.5), (A, B, 0.5), (A, F, 0.5), (B, A, 0.5), (B, F, 0.5)], {S}, {F})
    assert sample_sequence(graph, 42, 100) == sample_sequence(graph, 42, 100)


def test_walk_dead_end():
    graph = build_graph([(S, A, 1.0), (S, F, 0.0)], {S}, {F})
    with pytest.raises(WalkError, match="dead end"):
        sample_sequence(graph, 0, 10)


def test_walk_must_terminate():
    graph = build_graph([(S, A, 1.0), (A, S, 1.0), (F, S, 1.0)], {S}, {F})
    with pytest.raises(WalkError, match="did not terminate within 50"):
        sample_sequence(graph, 0, 50)


def test_continue_probability_passes_through_final():
    graph = build_graph([(S, F, 1.0), (F, A, 1.0), (A, F, 1.0)], {S}, {F})
    assert sample_sequence(graph, 3, 100, continue_probability=0.0) == [S, F]
    lengths = {len(sample_sequence(graph, seed, 1000, continue_probability=0.9)) for seed in range(50)}
    assert max(lengths) > 2
