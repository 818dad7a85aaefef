import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy.sparse.csgraph import shortest_path

import oracles
from helpers import make_graph, named_graph
from slogic.subgraph import SubgraphStore, extract_all, extract_subgraph, remove_target_edge

seeds = st.integers(0, 2**32 - 1)


def star(spokes):
    return make_graph([(0, 0, i) for i in range(1, spokes + 1)])


def oracle_distances(sg):
    n = sg.num_nodes
    e = sg.edges
    m = sp.csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 2])), shape=(n, n))
    d = shortest_path(m, unweighted=True, directed=False, indices=0)
    return np.where(np.isinf(d), -1, d)


class TestExtraction:
    def test_small_star(self):
        sg = extract_subgraph(star(3), 0, 1, 100)
        assert sg.num_nodes == 4
        assert len(sg.edges) == 6  # three undirected pairs, both directions
        np.testing.assert_allclose(sg.features[0], [1, 0, 0, np.log1p(3)], rtol=1e-6)

    def test_large_star_is_capped(self):
        sg = extract_subgraph(star(200), 0, 1, 100)
        assert sg.num_nodes == 101

    def test_hop_bound(self):
        g, v = named_graph([("a", "r", "b"), ("b", "r", "c")])
        sg = extract_subgraph(g, v.entity_id("a"), 1, 100)
        assert v.entity_id("c") not in sg.nodes.tolist()
        b_local = sg.nodes.tolist().index(v.entity_id("b"))
        assert sg.features[b_local, 2] == 1
        assert sg.features[b_local, 1] == 1 and sg.features[b_local, 0] == 0

    def test_isolated_entity(self):
        g = make_graph([(0, 0, 1)], num_entities=3)
        sg = extract_subgraph(g, 2, 2, 10)
        assert sg.num_nodes == 1 and len(sg.edges) == 0
        np.testing.assert_array_equal(sg.features, [[1, 0, 0, 0]])

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            extract_subgraph(star(2), 0, 0, 10)

    def test_seed_changes_sample_on_hub(self):
        g = star(50)
        a = extract_all(g, 1, 10, seed=0)
        b = extract_all(g, 1, 10, seed=1)
        assert not np.array_equal(a[0].nodes, b[0].nodes)

    @given(seeds, st.integers(1, 3), st.integers(1, 6))
    def test_distances_and_cap(self, seed, k, alpha):
        n, R, triples = oracles.random_triples(np.random.default_rng(seed), 20, 3)
        g = make_graph(triples, n, R)
        h = int(np.random.default_rng(seed).integers(n))
        sg = extract_subgraph(g, h, k, alpha, seed)
        assert sg.nodes[0] == h and len(set(sg.nodes.tolist())) == sg.num_nodes
        np.testing.assert_array_equal(sg.features[:, 2], oracle_distances(sg))
        assert sg.features[:, 2].max() <= k
        # every node is expanded at most once and adds at most alpha neighbours
        assert sg.num_nodes <= sum(alpha**i for i in range(k + 1))
        # edges are real graph edges and come in inverse pairs
        glob = {(int(sg.nodes[u]), int(r), int(sg.nodes[w])) for u, r, w in sg.edges.tolist()}
        assert glob <= {tuple(x) for x in g.triples.tolist()}
        assert {(w, g.inverse(r), u) for u, r, w in glob} == glob
        np.testing.assert_allclose(sg.features[:, 3], np.log1p(g.global_degree[sg.nodes]), rtol=1e-6)

    @given(seeds)
    def test_features_ignore_entity_ids(self, seed):
        rng = np.random.default_rng(seed)
        n, R, triples = oracles.random_triples(rng, 15, 2)
        perm = rng.permutation(n)
        g = make_graph(triples, n, R)
        gp = make_graph(np.stack([perm[triples[:, 0]], triples[:, 1], perm[triples[:, 2]]], axis=1), n, R)
        h = int(rng.integers(n))
        # alpha above any degree so no sampling happens
        a = extract_subgraph(g, h, 2, 1000)
        b = extract_subgraph(gp, int(perm[h]), 2, 1000)
        fa = {int(perm[v]): tuple(f) for v, f in zip(a.nodes.tolist(), a.features.tolist())}
        fb = {v: tuple(f) for v, f in zip(b.nodes.tolist(), b.features.tolist())}
        assert fa == fb


class TestTargetRemoval:
    def test_removes_both_directions(self):
        g = make_graph([(0, 0, 1), (0, 0, 2)])
        sg = extract_subgraph(g, 0, 1, 100)
        out = remove_target_edge(sg, 0, 0, 1, 1)
        assert len(out.edges) == len(sg.edges) - 2
        # t stays, features untouched even though it is now isolated
        assert out.num_nodes == sg.num_nodes
        np.testing.assert_array_equal(out.features, sg.features)

    def test_absent_edge_is_noop(self):
        sg = extract_subgraph(star(3), 0, 1, 100)
        assert remove_target_edge(sg, 0, 0, 9, 1) is sg


class TestStore:
    def test_one_subgraph_per_entity(self):
        g = make_graph([(0, 0, 1), (1, 0, 2)])
        store = extract_all(g, 1, 100)
        assert len(store) == 3
        for e in range(3):
            ref = extract_subgraph(g, e, 1, 100)
            np.testing.assert_array_equal(store[e].nodes, ref.nodes)
            np.testing.assert_array_equal(store[e].edges, ref.edges)

    def test_save_is_deterministic(self, tmp_path):
        n, R, triples = oracles.random_triples(np.random.default_rng(5), 40, 3)
        g = make_graph(triples, n, R)
        extract_all(g, 2, 3, seed=4).save(tmp_path / "a.bin")
        extract_all(g, 2, 3, seed=4).save(tmp_path / "b.bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
        loaded = SubgraphStore.load(tmp_path / "a.bin")
        assert loaded.meta == {"k": 2, "alpha": 3, "seed": 4}
        np.testing.assert_array_equal(loaded[7].features, extract_subgraph(g, 7, 2, 3, 4).features)

    def test_threads_match_serial(self, tmp_path):
        n, R, triples = oracles.random_triples(np.random.default_rng(6), 40, 3)
        g = make_graph(triples, n, R)
        extract_all(g, 2, 3, 1, threads=1).save(tmp_path / "a.bin")
        extract_all(g, 2, 3, 1, threads=2).save(tmp_path / "b.bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
