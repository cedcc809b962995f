from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bfwsim.graph import (GNP_MAX_ATTEMPTS, ConnectivityRetryError, DisconnectedGraphError,
                          EdgeListParseError, Graph, GraphSpecError, SelfLoopError, distances,
                          generate, load_edge_list, resolve)


def bfs_eccentricities(g: Graph) -> list[int]:
    """Plain-Python BFS, independent of the scipy-backed table."""
    out = []
    for s in range(g.n):
        seen = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for v in g.adjacency[u]:
                if v not in seen:
                    seen[v] = seen[u] + 1
                    q.append(v)
        out.append(max(seen.values()))
    return out


def grid_edges(w: int, h: int) -> set[tuple[int, int]]:
    edges = set()
    for r in range(h):
        for c in range(w):
            u = r * w + c
            if c + 1 < w:
                edges.add((u, u + 1))
            if r + 1 < h:
                edges.add((u, u + w))
    return edges


def test_grid_3x3_has_12_edges_and_diameter_4():
    g = generate("grid:3x3")
    assert g.n == 9
    assert g.num_edges == 12
    assert set(g.edges) == grid_edges(3, 3)
    assert distances(g).diameter == 4


def test_grid_4x4_diameter():
    assert distances(generate("grid:4x4")).diameter == 6


def test_single_node_clique():
    g = generate("clique:1")
    assert g.n == 1 and g.num_edges == 0
    assert distances(g).diameter == 0


def test_clique_7_diameter_one():
    g = generate("clique:7")
    assert g.num_edges == 21
    assert distances(g).diameter == 1


@pytest.mark.parametrize("n", [1, 2, 3, 7, 20])
def test_path_and_cycle_diameters(n):
    assert distances(generate(f"path:{n}")).diameter == n - 1
    if n >= 3:
        assert distances(generate(f"cycle:{n}")).diameter == n // 2


@pytest.mark.parametrize("spec", ["path:9", "cycle:10", "grid:5x3", "tree:25:4", "gnp:30:0.15:2",
                                  "clique:6"])
def test_distance_table_matches_python_bfs(spec):
    g = generate(spec)
    dt = distances(g)
    ecc = bfs_eccentricities(g)
    assert dt.diameter == max(ecc)
    assert np.array_equal(dt.dist.max(axis=1), ecc)
    assert np.array_equal(dt.dist, dt.dist.T)
    assert not dt.dist.flags.writeable


def test_tree_is_spanning_tree_and_deterministic():
    g = generate("tree:40:7")
    assert g.num_edges == 39 and g.is_connected()
    assert generate("tree:40:7") == g
    assert generate("tree:40:8") != g


def test_gnp_is_connected_and_seeded():
    g = generate("gnp:50:0.08:3")
    assert g.is_connected()
    assert generate("gnp:50:0.08:3") == g


def test_gnp_retry_cap_is_reported():
    with pytest.raises(ConnectivityRetryError) as exc:
        generate("gnp:40:0.0:1")
    assert str(GNP_MAX_ATTEMPTS) in str(exc.value)


@pytest.mark.parametrize("bad", ["", "path", "path:0", "path:x", "grid:3", "grid:0x2",
                                 "tree:5", "gnp:5:1.5:1", "star:5"])
def test_malformed_specs(bad):
    with pytest.raises(GraphSpecError):
        generate(bad)


def test_small_cycles_degrade_to_paths():
    assert generate("cycle:2") == generate("path:2")
    assert generate("cycle:1") == generate("path:1")


def test_edge_list_comments_and_blank_lines():
    g = load_edge_list("# a triangle\n\n0 1\n1 2\n  # indented comment\n2 0\n")
    assert g.n == 3 and g.num_edges == 3


def test_edge_list_rejects_self_loops_and_disconnection():
    with pytest.raises(SelfLoopError):
        load_edge_list("0 1\n1 1\n")
    with pytest.raises(DisconnectedGraphError):
        load_edge_list("0 1\n2 3\n")
    with pytest.raises(EdgeListParseError):
        load_edge_list("0 1 2\n")
    with pytest.raises(EdgeListParseError):
        load_edge_list("0 -1\n")


def test_duplicate_edges_collapse():
    g = load_edge_list("0 1\n1 0\n0 1\n")
    assert g.num_edges == 1


def test_resolve_reads_files(tmp_path):
    f = tmp_path / "g.txt"
    f.write_text(generate("cycle:6").to_edge_list())
    assert resolve(str(f)) == generate("cycle:6")
    assert resolve("cycle:6") == generate("cycle:6")


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(1, 25))
    # random spanning tree plus extra edges keeps it connected
    edges = set()
    for v in range(1, n):
        u = draw(st.integers(0, v - 1))
        edges.add((u, v))
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=30))
    edges |= {(min(a, b), max(a, b)) for a, b in extra if a != b}
    return Graph.from_edges(n, edges)


@settings(max_examples=80, deadline=None)
@given(connected_graphs())
def test_edge_list_round_trip(g):
    assert load_edge_list(g.to_edge_list()) == g


@settings(max_examples=80, deadline=None)
@given(connected_graphs())
def test_graph_invariants(g):
    assert g.is_connected()
    for u, v in g.edges:
        assert u < v
        assert g.has_edge(u, v) and g.has_edge(v, u)
        assert v in g.adjacency[u] and u in g.adjacency[v]
    assert sum(g.degree(u) for u in range(g.n)) == 2 * g.num_edges
    src, dst = g.arcs
    assert src.size == 2 * g.num_edges
    dt = distances(g)
    assert dt.diameter == max(bfs_eccentricities(g))
    # triangle inequality along every edge
    for u, v in g.edges:
        assert np.all(np.abs(dt.dist[u] - dt.dist[v]) <= 1)
