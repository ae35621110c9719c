import itertools

import numpy as np
import pytest

from lss_basis.errors import DisconnectedGraphError
from lss_basis.graph import (
    build_graph,
    chain_factorize,
    count_spanning_trees,
    is_connected,
    matrix_tree_count,
    spanning_tree,
)
from lss_basis.local import random_transform

from conftest import rel


def transforms(sigma, n, seed):
    rng = np.random.default_rng(seed)
    return {j: random_transform(n, rng) for j in range(1, sigma + 1)}


def pair_solutions(T, pairs):
    return {(a, b): np.linalg.inv(T[b]) @ T[a] for a, b in pairs}


def brute_force_trees(sigma, edges):
    """Enumerate (sigma-1)-edge subsets that connect every vertex."""
    count = 0
    for sub in itertools.combinations(edges, sigma - 1):
        parent = list(range(sigma + 1))

        def find(v):
            while parent[v] != v:
                v = parent[v]
            return v

        ok = True
        for a, b in sub:
            ra, rb = find(a), find(b)
            if ra == rb:
                ok = False
                break
            parent[ra] = rb
        count += ok
    return count


def test_complete_graph_edge_count():
    T = transforms(4, 3, 0)
    g = build_graph(pair_solutions(T, itertools.permutations(range(1, 5), 2)), 4)
    assert len(g.edges) == 6
    assert is_connected(g)
    assert spanning_tree(g) == ((1, 2), (1, 3), (1, 4))


def test_disconnected_names_unreachable():
    T = transforms(4, 2, 1)
    g = build_graph(pair_solutions(T, [(1, 2), (1, 4), (2, 4)]), 4)
    assert not is_connected(g)
    with pytest.raises(DisconnectedGraphError) as info:
        spanning_tree(g)
    assert set(info.value.unreachable) == {3}
    assert info.value.code == "no_spanning_tree"


def test_path_graph_chain_rule():
    T = transforms(3, 3, 2)
    U = pair_solutions(T, [(1, 2), (2, 3)])
    g = build_graph(U, 3)
    tree = spanning_tree(g)
    assert tree == ((1, 2), (2, 3))
    anchored = chain_factorize(g, tree)
    expected = np.linalg.inv(U[(1, 2)]) @ np.linalg.inv(U[(2, 3)])
    assert rel(anchored[3], expected) <= 1e-10
    for j in (1, 2, 3):
        assert rel(anchored[j], np.linalg.inv(T[1]) @ T[j]) <= 1e-6


def test_reverse_orientation_is_inverse():
    T = transforms(2, 3, 3)
    g = build_graph(pair_solutions(T, [(2, 1)]), 2)
    assert np.allclose(g.upsilon(1, 2) @ g.upsilon(2, 1), np.eye(3))


@pytest.mark.parametrize("sigma", [2, 3, 4, 5, 6])
def test_cayley_matches_kirchhoff(sigma):
    edges = list(itertools.combinations(range(1, sigma + 1), 2))
    assert count_spanning_trees(sigma) == matrix_tree_count(sigma, edges)
    if sigma <= 5:
        assert brute_force_trees(sigma, edges) == count_spanning_trees(sigma)


def test_known_counts():
    assert count_spanning_trees(4) == 16
    assert count_spanning_trees(5) == 125
    assert count_spanning_trees(1) == 1


def test_kirchhoff_on_sparse_graph():
    edges = [(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)]
    assert matrix_tree_count(4, edges) == brute_force_trees(4, edges) == 8


@pytest.mark.parametrize("seed", range(10))
def test_random_connected_graph_tree(seed):
    rng = np.random.default_rng(seed)
    sigma = int(rng.integers(3, 7))
    # random tree plus random extra edges, so the graph is connected
    pairs = {(int(rng.integers(1, v)), v) for v in range(2, sigma + 1)}
    for a, b in itertools.combinations(range(1, sigma + 1), 2):
        if rng.random() < 0.3:
            pairs.add((b, a) if rng.random() < 0.5 else (a, b))
    T = transforms(sigma, 3, seed + 100)
    g = build_graph(pair_solutions(T, pairs), sigma)
    tree = spanning_tree(g)
    assert len(tree) == sigma - 1
    assert matrix_tree_count(sigma, tree) == 1  # acyclic and spanning
    anchored = chain_factorize(g, tree)
    for j in range(1, sigma + 1):
        assert rel(anchored[j], np.linalg.inv(T[1]) @ T[j]) <= 1e-6


def test_path_independence_across_trees():
    T = transforms(4, 3, 4)
    g = build_graph(pair_solutions(T, itertools.combinations(range(1, 5), 2)), 4)
    star = chain_factorize(g, ((1, 2), (1, 3), (1, 4)))
    path = chain_factorize(g, ((1, 2), (2, 3), (3, 4)))
    for j in range(1, 5):
        assert rel(star[j], path[j]) <= 1e-6


def test_residual_preference():
    T = transforms(3, 2, 5)
    U = pair_solutions(T, itertools.combinations(range(1, 4), 2))

    class Sol:
        def __init__(self, u, r):
            self.upsilon, self.residual, self.z_norm = u, r, 1.0

    g = build_graph({(1, 2): Sol(U[(1, 2)], 1e-3), (1, 3): Sol(U[(1, 3)], 1e-12),
                     (2, 3): Sol(U[(2, 3)], 1e-12)}, 3)
    assert spanning_tree(g) == ((1, 3), (2, 3))


def test_dot_output():
    T = transforms(3, 2, 6)
    g = build_graph(pair_solutions(T, [(1, 2), (2, 3)]), 3)
    dot = g.to_dot(spanning_tree(g))
    assert dot.startswith("graph upsilon {")
    assert '1 -- 2 [style=bold, label="tree"];' in dot
    assert "2 -- 3" in dot
