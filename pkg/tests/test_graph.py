import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qroute.graph import (GraphFormatError, InteractionGraph, SwapLayer, count_matchings,
                          enumerate_matchings, from_edges, grid, read_graph, write_graph)


def brute_force_matchings(g):
    """All edge subsets that are matchings, by exhaustive subset scan."""
    out = []
    m = g.edge_count
    for k in range(m + 1):
        for subset in itertools.combinations(range(m), k):
            verts = [v for e in subset for v in g.edges[e]]
            if len(verts) == len(set(verts)):
                out.append(subset)
    return out


@st.composite
def connected_graphs(draw, max_vertices=7, max_edges=12):
    n = draw(st.integers(2, max_vertices))
    tree = [(draw(st.integers(0, v - 1)), v) for v in range(1, n)]
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=max_edges))
    # a random spanning tree keeps the graph connected
    extra = sorted({(min(a, b), max(a, b)) for a, b in extra if a != b} - set(tree))
    return from_edges(n, tree + extra[: max_edges - len(tree)])


def test_grid_sizes():
    g = grid(4, 4)
    assert g.vertex_count == 16
    assert g.edge_count == 24
    g = grid(1, 2)
    assert (g.vertex_count, g.edge_count) == (2, 1)


def test_grid_distances():
    assert grid(4, 4).distance(0, 15) == 6
    assert grid(2, 2).distance(0, 3) == 2
    assert grid(4, 4).distance_table.max() == 6


@pytest.mark.parametrize("rows,cols", [(0, 3), (1, 1), (-1, 2)])
def test_grid_rejects_degenerate(rows, cols):
    with pytest.raises(ValueError):
        grid(rows, cols)


def test_graph_invariants():
    g = grid(3, 4)
    d = g.distance_table
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0)
    adjacent = {(u, v) for u in range(g.vertex_count) for v in range(u + 1, g.vertex_count) if d[u, v] == 1}
    assert adjacent == set(g.edges)


def test_edges_are_deduplicated_and_loops_rejected():
    g = from_edges(3, [(1, 0), (0, 1), (1, 2)])
    assert g.edges == ((0, 1), (1, 2))
    with pytest.raises(ValueError, match="self-loop"):
        from_edges(2, [(0, 0), (0, 1)])


def test_disconnected_graph_names_pair():
    with pytest.raises(ValueError, match="unreachable"):
        from_edges(4, [(0, 1), (2, 3)])


@settings(max_examples=40, deadline=None)
@given(connected_graphs())
def test_distances_match_bfs(g):
    G = nx.Graph(list(g.edges))
    G.add_nodes_from(range(g.vertex_count))
    for src, lengths in nx.all_pairs_shortest_path_length(G):
        for dst, d in lengths.items():
            assert g.distance(src, dst) == d


def test_small_matching_counts():
    assert count_matchings(grid(2, 2), include_empty=True) == 7
    assert count_matchings(grid(2, 2), include_empty=False) == 6
    assert count_matchings(grid(1, 2), include_empty=False) == 1
    ms = enumerate_matchings(grid(2, 2))
    assert len(ms) == 7
    assert sum(1 for m in ms if len(m) == 2) == 2


def test_3x3_count_against_brute_force():
    g = grid(3, 3)
    assert count_matchings(g) == len(brute_force_matchings(g)) == 131


def test_enumeration_is_lexicographic_and_unique():
    ms = [m.swaps for m in enumerate_matchings(grid(2, 3))]
    assert ms == sorted(ms)
    assert len(set(ms)) == len(ms)
    assert set(ms) == set(brute_force_matchings(grid(2, 3)))


@settings(max_examples=40, deadline=None)
@given(connected_graphs())
def test_count_equals_enumeration(g):
    ms = enumerate_matchings(g, include_empty=True)
    assert count_matchings(g, include_empty=True) == len(ms)
    assert count_matchings(g, include_empty=False) == len(ms) - 1
    for m in ms:
        assert m.is_valid(g)


@settings(max_examples=40, deadline=None)
@given(connected_graphs(), st.data())
def test_edge_deletion_recurrence(g, data):
    # count(g) = count(g - e) + count(g - endpoints(e)); uses the raw edge-list
    # recursion so disconnected remainders are allowed
    def count_edges(edges):
        if not edges:
            return 1
        (u, v), rest = edges[0], edges[1:]
        return count_edges(rest) + count_edges([f for f in rest if u not in f and v not in f])

    e = data.draw(st.sampled_from(g.edges))
    without = [f for f in g.edges if f != e]
    without_ends = [f for f in g.edges if e[0] not in f and e[1] not in f]
    assert count_matchings(g) == count_edges(without) + count_edges(without_ends)


def test_swap_layer_validation():
    g = grid(2, 2)
    assert SwapLayer((g.edge_index(0, 1), g.edge_index(2, 3))).is_valid(g)
    bad = SwapLayer((g.edge_index(0, 1), g.edge_index(0, 2)))
    with pytest.raises(ValueError, match="not a matching"):
        bad.validate(g)
    with pytest.raises(ValueError, match="out of range"):
        SwapLayer((99,)).validate(g)


def test_graph_file_roundtrip(tmp_path):
    g = grid(3, 3)
    p = tmp_path / "g.txt"
    write_graph(g, p)
    h = read_graph(p)
    assert h.edges == g.edges and h.vertex_count == 9


def test_graph_file_errors_carry_line_number(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("3\n0 1\n1 x\n")
    with pytest.raises(GraphFormatError, match=":3:"):
        read_graph(p)
