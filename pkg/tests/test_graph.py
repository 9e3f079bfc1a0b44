import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from azwhite.graph import (
    DynamicGraph,
    GraphValidationError,
    GraphValidationWarning,
    build_multiplex,
    community_line,
    complete_graph,
    erdos_renyi,
    generate_graph,
    graph_from_distances,
    khop_augment,
    symmetrize,
    temporal_weight,
    validate,
    w2,
)

from conftest import random_dynamic_instance
from oracle import pair_weights


def edge_set(g):
    return {(frozenset((u, v)) if not g.directed else (u, v)): w for u, v, w in g.edges}


weights = st.floats(min_value=0.01, max_value=100.0, allow_nan=False)
raw_edges = st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7), weights), max_size=30)


class TestValidate:
    def test_self_loop_removed_with_count(self):
        with pytest.warns(GraphValidationWarning, match="1 self-loop"):
            g = validate([(1, 1, 1.0), (1, 2, 1.0)])
        assert g.edges == [(1, 2, 1.0)]

    def test_duplicates_merged_by_sum(self):
        with pytest.warns(GraphValidationWarning, match="merged 1 duplicate"):
            g = validate([(1, 2, 0.5), (1, 2, 0.25)])
        assert g.edges == [(1, 2, 0.75)]

    def test_reversed_pair_is_duplicate_when_undirected(self):
        with pytest.warns(GraphValidationWarning):
            g = validate([(1, 2, 0.5), (2, 1, 0.25)])
        assert g.edges == [(1, 2, 0.75)]

    def test_reversed_pair_kept_when_directed(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            g = validate([(1, 2, 0.5), (2, 1, 0.25)], directed=True)
        assert sorted(g.edges) == [(1, 2, 0.5), (2, 1, 0.25)]

    @pytest.mark.parametrize("w", [-1.0, 0.0, math.inf, math.nan])
    def test_bad_weight_names_edge(self, w):
        with pytest.raises(GraphValidationError, match=r"\(1, 2\)"):
            validate([(1, 2, w)])

    def test_declared_nodes_join_node_set(self):
        g = validate([("a", "b")], nodes=["z"])
        assert set(g.nodes) == {"a", "b", "z"}
        assert g.edges == [("a", "b", 1.0)]

    def test_malformed_edge(self):
        with pytest.raises(GraphValidationError, match="malformed"):
            validate([(1, 2, 3, 4)])

    @given(raw_edges, st.booleans())
    def test_invariants_hold_after_validation(self, edges, directed):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", GraphValidationWarning)
            g = validate(edges, directed=directed)
        assert all(u != v for u, v, _ in g.edges)
        assert all(w > 0 for _, _, w in g.edges)
        keys = [frozenset((u, v)) if not directed else (u, v) for u, v, _ in g.edges]
        assert len(keys) == len(set(keys))
        total = math.fsum(w for u, v, w in edges if u != v)
        assert math.isclose(math.fsum(g.weight), total, rel_tol=1e-12)
        if g.n_edges:
            assert w2(g) > 0


class TestSymmetrize:
    def test_reciprocal_weights_add(self):
        g = symmetrize(validate([(1, 2, 1.0), (2, 1, 2.0)], directed=True))
        assert not g.directed
        assert g.edges == [(1, 2, 3.0)]

    def test_single_direction_kept(self):
        assert symmetrize(validate([(1, 2, 1.0)], directed=True)).edges == [(1, 2, 1.0)]

    def test_empty(self):
        assert symmetrize(validate([], directed=True, nodes=[1, 2])).edges == []

    def test_undirected_unchanged(self):
        g = validate([(1, 2, 1.0)])
        assert symmetrize(g) is g

    @given(raw_edges)
    def test_preserves_w2(self, edges):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", GraphValidationWarning)
            g = validate(edges, directed=True)
        if g.n_edges == 0:
            return
        assert w2(symmetrize(g)) == w2(g)
        # Independent route: squared total weight per unordered pair.
        ref = math.fsum(w * w for w in pair_weights(g.edges).values())
        assert math.isclose(w2(g), ref, rel_tol=1e-12)


class TestW2:
    def test_unit_edges(self):
        assert w2(validate([(1, 2), (2, 3)])) == 2.0

    def test_reciprocal_directed(self):
        assert w2(validate([(1, 2, 1.0), (2, 1, 2.0)], directed=True)) == 9.0

    def test_mixed_weights(self):
        assert w2(validate([(1, 2, 2.0), (2, 3, 0.5)])) == 4.25

    def test_empty_raises(self):
        with pytest.raises(GraphValidationError, match="no edges: statistic undefined"):
            w2(validate([], nodes=[1]))


class TestKhop:
    def test_path_adds_far_pair(self):
        g = khop_augment(validate([(1, 2), (2, 3)]), 2)
        assert edge_set(g) == {frozenset((1, 2)): 1.0, frozenset((2, 3)): 1.0, frozenset((1, 3)): 1.0}

    def test_triangle_unchanged(self):
        tri = validate([(1, 2), (2, 3), (1, 3)])
        assert edge_set(khop_augment(tri, 2)) == edge_set(tri)

    def test_star_connects_leaves(self):
        g = khop_augment(validate([("c", "a"), ("c", "b"), ("c", "d")]), 2)
        new = set(edge_set(g)) - {frozenset(("c", x)) for x in "abd"}
        assert new == {frozenset(p) for p in [("a", "b"), ("a", "d"), ("b", "d")]}

    def test_inverse_rule_and_limit(self):
        path = validate([(i, i + 1) for i in range(5)])
        g = khop_augment(path, 3, weight_rule="inverse")
        es = edge_set(g)
        assert es[frozenset((0, 2))] == 0.5
        assert es[frozenset((0, 3))] == pytest.approx(1 / 3)
        assert frozenset((0, 4)) not in es

    def test_callable_rule(self):
        g = khop_augment(validate([(1, 2), (2, 3)]), 2, weight_rule=lambda k: 10.0 * k)
        assert edge_set(g)[frozenset((1, 3))] == 20.0

    @pytest.mark.parametrize("K", [0, -1, 1.5])
    def test_bad_k(self, K):
        with pytest.raises(ValueError, match="K must be"):
            khop_augment(validate([(1, 2)]), K)

    def test_directed_rejected(self):
        with pytest.raises(ValueError, match="undirected"):
            khop_augment(validate([(1, 2)], directed=True), 2)

    @given(raw_edges)
    def test_k1_identity(self, edges):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", GraphValidationWarning)
            g = validate(edges)
        assert khop_augment(g, 1).edges == g.edges


class TestMultiplex:
    def test_static_counts(self):
        g = validate([(1, 2), (2, 3)])
        m = build_multiplex(DynamicGraph.from_static(g, 2))
        assert (len(m.nodes), len(m.spatial_edges), len(m.temporal_edges)) == (6, 4, 3)

    def test_node_missing_later_has_no_temporal_edge(self):
        dg = DynamicGraph((validate([(1, 2)], nodes=[3]), validate([(1, 2)])))
        m = build_multiplex(dg)
        assert ((3, 1), (3, 2)) not in m.temporal_edges
        assert len(m.temporal_edges) == 2

    def test_single_step_has_no_temporal_edges(self):
        m = build_multiplex(DynamicGraph.from_static(validate([(1, 2)]), 1))
        assert m.temporal_edges == () and m.w_tm is None

    def test_balanced_weight_and_override(self):
        g = validate([(1, 2, 2.0), (2, 3, 1.0)])
        dg = DynamicGraph.from_static(g, 3)
        m = build_multiplex(dg)
        assert m.w_tm == pytest.approx(math.sqrt(3 * 5.0 / 6))
        assert build_multiplex(dg, w_tm_override=0.3).w_tm == 0.3
        with pytest.raises(ValueError):
            build_multiplex(dg, w_tm_override=0.0)

    def test_flattened_graph(self):
        g = validate([(1, 2)])
        flat = build_multiplex(DynamicGraph.from_static(g, 2)).as_weighted_graph()
        assert flat.n_nodes == 4 and flat.n_edges == 4

    def test_counting_identities_random(self):
        rng = np.random.default_rng(2024)
        for _ in range(120):
            dg, _, raw, _ = random_dynamic_instance(rng)
            m = build_multiplex(dg)
            assert len(m.nodes) == sum(len(nodes) for nodes, _ in raw)
            assert len(m.spatial_edges) == sum(len(edges) for _, edges in raw)
            expected_tm = sum(len(set(raw[t][0]) & set(raw[t + 1][0])) for t in range(len(raw) - 1))
            assert len(m.temporal_edges) == expected_tm
            for (a, ta), (b, tb) in m.temporal_edges:
                assert a == b and tb == ta + 1

    @given(st.integers(1, 8), st.integers(1, 6))
    def test_static_replica_counts(self, n, T):
        g = complete_graph(tuple(range(n)))
        m = build_multiplex(DynamicGraph.from_static(g, T))
        assert len(m.nodes) == n * T
        assert len(m.temporal_edges) == (T - 1) * n


class TestTemporalWeight:
    def test_values(self):
        assert temporal_weight(4.0, 3) == pytest.approx(1.1547005383792515, abs=1e-15)
        assert temporal_weight(5.0, 5) == 1.0
        assert temporal_weight(1.0, 4) == 0.5

    def test_no_temporal_edges(self):
        with pytest.raises(ValueError, match="no temporal edges"):
            temporal_weight(1.0, 0)

    @given(st.floats(1e-6, 1e6), st.integers(1, 10**6))
    def test_variance_identity(self, w2_sp, n):
        w = temporal_weight(w2_sp, n)
        assert math.isclose(n * w * w, w2_sp, rel_tol=1e-12)


class TestDistances:
    def test_kappa_is_open(self):
        g = graph_from_distances([(1, 2, 0.5), (2, 3, 1.0), (1, 3, 2.0)], kappa=2.0)
        assert len(g.edges) == 2

    def test_unit_exponent(self):
        # Kept distances {0.5, 1.0}: sigma = 0.25 = 0.5 ** 2.
        g = graph_from_distances([(1, 2, 0.5), (2, 3, 1.0)], kappa=2.0)
        assert dict(((u, v), w) for u, v, w in g.edges)[1, 2] == pytest.approx(math.exp(-1.0), abs=1e-15)

    def test_population_std(self):
        g = graph_from_distances([(1, 2, 1.0), (2, 3, 2.0), (1, 3, 3.0)], kappa=2.5)
        w = dict(((u, v), w) for u, v, w in g.edges)
        assert w == {(1, 2): pytest.approx(math.exp(-2.0)), (2, 3): pytest.approx(math.exp(-8.0))}
        assert g.n_nodes == 3

    def test_zero_distance_dropped(self):
        g = graph_from_distances([(1, 2, 0.0), (2, 3, 1.0), (3, 4, 2.0)], kappa=5)
        assert {(u, v) for u, v, _ in g.edges} == {(2, 3), (3, 4)}

    def test_empty(self):
        with pytest.raises(GraphValidationError, match="empty graph"):
            graph_from_distances([(1, 2, 3.0)], kappa=2.0)

    def test_equal_distances(self):
        with pytest.raises(GraphValidationError, match="kernel width"):
            graph_from_distances([(1, 2, 1.0), (2, 3, 1.0)], kappa=2.0)

    def test_negative_distance(self):
        with pytest.raises(GraphValidationError, match=r"\(1, 2\)"):
            graph_from_distances([(1, 2, -1.0)], kappa=2.0)


class TestGenerators:
    def test_er_extremes(self):
        assert erdos_renyi(5, 0.0, seed=1).n_edges == 0
        assert erdos_renyi(5, 1.0, seed=1).n_edges == 10

    def test_community_line_deterministic(self):
        a = community_line(5, 6, 0.8, seed=3)
        b = community_line(5, 6, 0.8, seed=3)
        assert a.edges == b.edges
        assert a.n_nodes == 30
        assert community_line(5, 6, 0.8, seed=4).edges != a.edges

    def test_community_line_structure(self):
        g = community_line(4, 5, 1.0, seed=0)
        cross = [(u, v) for u, v, _ in g.edges if u // 5 != v // 5]
        assert len(cross) == 3
        assert all(abs(u // 5 - v // 5) == 1 for u, v in cross)
        assert g.n_edges == 4 * 10 + 3

    def test_generate_graph_dispatch(self):
        g = generate_graph({"kind": "erdos_renyi", "n": 6, "p": 1.0})
        assert g.n_edges == 15 and not g.directed
        with pytest.raises(ValueError):
            generate_graph({"kind": "ring"})
        with pytest.raises(ValueError):
            generate_graph({"kind": "erdos_renyi", "n": 6, "p": 1.5})


class TestDynamicGraph:
    def test_from_edges_and_presence(self):
        dg = DynamicGraph.from_edges([(1, "a", "b", 2.0), (2, "b", "c")], presence=[(3, "a")])
        assert dg.T == 3
        assert dg[1].edges == [("a", "b", 2.0)]
        assert dg[3].nodes == ("a",)
        assert set(dg.node_union()) == {"a", "b", "c"}

    def test_time_range_checked(self):
        with pytest.raises(GraphValidationError, match="1..2"):
            DynamicGraph.from_edges([(3, 1, 2)], T=2)
        with pytest.raises(GraphValidationError):
            DynamicGraph(())
