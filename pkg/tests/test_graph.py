import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from consensus_ioc.graph import (GraphError, apply_in_laplacian, build_graph, in_laplacian,
                                 incidence)


def laplacian_by_entries(num_nodes, edges, w):
    """Accumulate w_k (e_i e_i^T - e_i e_j^T) edge by edge."""
    L = np.zeros((num_nodes, num_nodes))
    for k, (j, i) in enumerate(edges):
        L[i - 1, i - 1] += w[k]
        L[i - 1, j - 1] -= w[k]
    return L


@st.composite
def graphs(draw, max_nodes=6):
    n = draw(st.integers(2, max_nodes))
    pairs = [(j, i) for j in range(1, n + 1) for i in range(1, n + 1) if i != j]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=10))
    d = draw(st.integers(1, 3))
    return build_graph(n, chosen, d)


def test_case_study_graph(case_graph):
    assert case_graph.num_edges == 7
    assert case_graph.dim == 16


def test_empty_edge_set():
    g = build_graph(3, [], 1)
    assert g.num_edges == 0
    assert incidence(g).D.shape == (3, 0)
    assert np.array_equal(in_laplacian(g, np.zeros(0)), np.zeros((3, 3)))


@pytest.mark.parametrize("edges, fragment", [
    ([(1, 1)], "self-loop"),
    ([(1, 3)], "outside"),
    ([(0, 1)], "outside"),
    ([(1, 2), (1, 2)], "duplicate"),
    ([(1, 2, 3)], "pair"),
    ([(1.5, 2)], "non-integer"),
])
def test_invalid_edges(edges, fragment):
    with pytest.raises(GraphError, match=fragment):
        build_graph(2, edges)


def test_invalid_sizes():
    with pytest.raises(GraphError):
        build_graph(0, [])
    with pytest.raises(GraphError):
        build_graph(2, [], state_dim=0)


def test_incidence_hand_example():
    inc = incidence(build_graph(3, [(1, 2), (2, 3)]))
    assert np.array_equal(inc.D, [[-1, 0], [1, -1], [0, 1]])
    assert np.array_equal(inc.D_in, [[0, 0], [1, 0], [0, 1]])
    assert np.array_equal(inc.D_out, [[1, 0], [0, 1], [0, 0]])


def test_case_study_first_column(case_graph):
    D_in = incidence(case_graph).D_in
    assert D_in[2, 0] == 1 and D_in[:, 0].sum() == 1


def test_two_node_laplacian():
    g = build_graph(2, [(1, 2)])
    assert np.array_equal(in_laplacian(g, [2.5]), [[0, 0], [-2.5, 2.5]])


def test_laplacian_length_mismatch():
    g = build_graph(2, [(1, 2)])
    with pytest.raises(GraphError):
        in_laplacian(g, [1.0, 2.0])


@settings(max_examples=60, deadline=None)
@given(graphs(), st.integers(0, 2**32 - 1))
def test_laplacian_properties(g, seed):
    rng = np.random.default_rng(seed)
    inc = incidence(g)
    assert np.array_equal(inc.D, inc.D_in - inc.D_out)
    assert np.all(inc.D.sum(axis=0) == 0)
    w = rng.normal(size=g.num_edges)
    L = in_laplacian(g, w)
    np.testing.assert_allclose(L, laplacian_by_entries(g.num_nodes, g.edges, w), atol=1e-14)
    np.testing.assert_allclose(L @ np.ones(g.num_nodes), 0.0, atol=1e-12)
    assert np.array_equal(in_laplacian(g, np.zeros(g.num_edges)), np.zeros_like(L))
    # the blockwise product matches the materialized Kronecker product
    x = rng.normal(size=g.dim)
    np.testing.assert_allclose(apply_in_laplacian(g, w, x),
                               np.kron(L, np.eye(g.state_dim)) @ x, atol=1e-12)
    # consensus states are fixed points
    agree = np.tile(rng.normal(size=g.state_dim), g.num_nodes)
    np.testing.assert_allclose(apply_in_laplacian(g, w, agree), 0.0, atol=1e-12)
