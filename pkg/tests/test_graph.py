import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tvswarm.graph import PAPER_EDGES, Graph, paper_graph


@st.composite
def graphs(draw, max_n=9):
    n = draw(st.integers(1, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = draw(st.lists(st.sampled_from(pairs), max_size=len(pairs))) if pairs else []
    return Graph.from_edge_list(n, edges)


def test_benchmark_topology_has_fourteen_edges():
    g = paper_graph()
    assert g.n == 12
    assert g.n_edges == 14
    assert len(PAPER_EDGES) == 14


def test_benchmark_neighbors_of_node_three():
    g = paper_graph()
    assert {j + 1 for j in g.neighbors(2)} == {2, 4, 6, 7}
    assert g.is_connected()


def test_path_graph_degrees_and_laplacian():
    g = Graph.from_edge_list(3, [(1, 2), (2, 3)], one_based=True)
    assert list(g.degree()) == [1, 2, 1]
    np.testing.assert_array_equal(g.laplacian, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    assert set(g.neighbors(1)) == {0, 2}


def test_two_isolated_nodes_are_a_valid_disconnected_graph():
    g = Graph.from_edge_list(2, [])
    assert g.n_edges == 0
    assert not g.is_connected()


def test_incidence_columns_have_one_tail_and_one_head():
    D = paper_graph().incidence
    assert np.all(np.sort(D, axis=0)[0] == -1)
    assert np.all(np.sort(D, axis=0)[-1] == 1)
    assert np.all(np.count_nonzero(D, axis=0) == 2)


def test_laplacian_equals_incidence_product_on_benchmark():
    g = paper_graph()
    assert np.max(np.abs(g.laplacian - g.incidence @ g.incidence.T)) == 0


def test_duplicates_collapse_and_orientation_is_min_max():
    g = Graph.from_edge_list(3, [(2, 0), (0, 2), (1, 2)])
    assert g.edges == ((0, 2), (1, 2))


@pytest.mark.parametrize("edges", [[(1, 1)], [(0, 3)], [(-1, 0)]])
def test_bad_edges_are_rejected(edges):
    with pytest.raises(ValueError):
        Graph.from_edge_list(3, edges)


def test_neighbors_out_of_range():
    with pytest.raises(IndexError):
        paper_graph().neighbors(12)


@given(graphs())
def test_laplacian_identities(g):
    L = g.laplacian
    assert np.max(np.abs(L - g.incidence @ g.incidence.T)) == 0
    np.testing.assert_array_equal(L @ np.ones(g.n), np.zeros(g.n))
    np.testing.assert_array_equal(L, L.T)


@given(graphs())
def test_spectrum_matches_connectivity(g):
    eig = np.linalg.eigvalsh(g.laplacian)
    assert abs(eig[0]) < 1e-9
    if g.n > 1:
        assert (eig[1] > 1e-9) == g.is_connected()


@given(graphs())
def test_neighbor_relation_is_symmetric(g):
    for i in range(g.n):
        for j in g.neighbors(i):
            assert i in g.neighbors(j)
