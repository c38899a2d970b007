"""Builders: batch equivalence, seeding, counters, KNNG, connectivity."""

import numpy as np
import pytest

from graphtune.build import (HnswParams, NsgParams, SeedStreams, VamanaParams,
                             assign_layer, build_batch, build_initial_knng,
                             build_multi_hnsw, build_multi_nsg,
                             build_multi_vamana, build_one, coerce_params,
                             ensure_connectivity, nearest_to_centroid)
from graphtune.data import DistanceCounter, brute_force_knn, gen_synthetic
from graphtune.graph import LayerAdjacency, ProximityGraph, graphs_equal

PARAMS = {
    "hnsw": [{"M": 6, "efc": 30}, {"M": 8, "efc": 40}, {"M": 8, "efc": 60}],
    "vamana": [{"L": 24, "M": 10, "alpha": 1.0},
               {"L": 32, "M": 12, "alpha": 1.2},
               {"L": 32, "M": 12, "alpha": 1.4}],
    "nsg": [{"K": 10, "L": 24, "M": 10}, {"K": 10, "L": 32, "M": 12},
            {"K": 14, "L": 32, "M": 12}],
}


class TestSeedStreams:
    def test_node_uniform_in_half_open_interval(self):
        s = SeedStreams(0)
        vals = [s.node_uniform(SeedStreams.LAYERS, i) for i in range(2000)]
        assert min(vals) > 0.0 and max(vals) <= 1.0

    def test_draw_independent_of_order(self):
        s = SeedStreams(7)
        a = s.node_uniform(SeedStreams.EDGES, 5)
        s.node_uniform(SeedStreams.EDGES, 99)  # interleaved other node
        assert s.node_uniform(SeedStreams.EDGES, 5) == a

    def test_layer_fraction_matches_geometric(self):
        """With branching factor M the fraction of nodes above the base
        layer converges to 1/M."""
        s = SeedStreams(42)
        lv = np.array([assign_layer(i, s, 16) for i in range(100_000)])
        assert abs((lv >= 1).mean() - 1 / 16) < 0.01
        assert abs((lv >= 2).mean() - 1 / 256) < 0.005

    def test_u_near_one_gives_layer_zero(self, monkeypatch):
        s = SeedStreams(0)
        monkeypatch.setattr(SeedStreams, "node_uniform",
                            lambda self, p, i: 1.0)
        assert assign_layer(3, s, 16) == 0

    def test_rejects_small_m(self):
        with pytest.raises(ValueError, match="M"):
            assign_layer(0, SeedStreams(0), 1)


class TestParams:
    def test_hnsw_bounds(self):
        with pytest.raises(ValueError):
            HnswParams(M=1, efc=10)
        with pytest.raises(ValueError, match="efc"):
            HnswParams(M=16, efc=8)

    def test_vamana_bounds(self):
        with pytest.raises(ValueError, match="alpha"):
            VamanaParams(L=10, M=4, alpha=0.5)
        with pytest.raises(ValueError):
            VamanaParams(L=0, M=4)

    def test_nsg_bounds(self):
        with pytest.raises(ValueError):
            NsgParams(K=0, L=10, M=4)

    def test_coerce_from_dict_and_passthrough(self):
        p = coerce_params("hnsw", {"M": 4, "efc": 20})
        assert p == HnswParams(4, 20)
        assert coerce_params("hnsw", p) is p
        with pytest.raises(TypeError):
            coerce_params("hnsw", [4, 20])
        with pytest.raises(TypeError):
            coerce_params("vamana", {"L": 10, "M": 4, "beta": 2})


class TestBatchEquivalence:
    """A graph built inside a batch must be bit-identical to the same
    graph built alone with the same seed."""

    @pytest.mark.parametrize("kind", ["hnsw", "vamana", "nsg"])
    def test_batch_matches_singles(self, gauss_small, kind):
        batch = build_batch(gauss_small, kind, PARAMS[kind], seed=3)
        for i, p in enumerate(PARAMS[kind]):
            single = build_batch(gauss_small, kind, [p], seed=3)
            assert graphs_equal(batch.graphs[i], single.graphs[0])

    @pytest.mark.parametrize("kind", ["hnsw", "vamana", "nsg"])
    def test_deterministic_across_runs(self, gauss_small, kind):
        a = build_batch(gauss_small, kind, PARAMS[kind], seed=5)
        b = build_batch(gauss_small, kind, PARAMS[kind], seed=5)
        for ga, gb in zip(a.graphs, b.graphs):
            assert graphs_equal(ga, gb)

    @pytest.mark.parametrize("kind", ["hnsw", "vamana", "nsg"])
    def test_seed_changes_graph(self, gauss_small, kind):
        a = build_batch(gauss_small, kind, PARAMS[kind][:1], seed=1)
        b = build_batch(gauss_small, kind, PARAMS[kind][:1], seed=2)
        assert not graphs_equal(a.graphs[0], b.graphs[0])

    def test_build_one_equals_batch_of_one(self, gauss_small):
        g1, r1 = build_one(gauss_small, "hnsw", {"M": 6, "efc": 30}, seed=9)
        batch = build_batch(gauss_small, "hnsw", [{"M": 6, "efc": 30}],
                            seed=9)
        assert graphs_equal(g1, batch.graphs[0])
        a, b = r1.to_dict(), batch.reports[0].to_dict()
        a.pop("wall_ms"), b.pop("wall_ms")
        assert a == b


class TestCounters:
    @pytest.mark.parametrize("kind", ["hnsw", "vamana", "nsg"])
    def test_report_totals_consistent(self, gauss_small, kind):
        res = build_batch(gauss_small, kind, PARAMS[kind], seed=0)
        for r in res.reports:
            assert r.dist_total == r.dist_search + r.dist_prune \
                + r.dist_connect
            assert r.dist_total > 0
        assert res.dist_total == sum(r.dist_total for r in res.reports)

    @pytest.mark.parametrize("kind", ["hnsw", "vamana", "nsg"])
    def test_batch_saves_distances(self, gauss_small, kind):
        batch = build_batch(gauss_small, kind, PARAMS[kind], seed=0)
        seq = sum(build_batch(gauss_small, kind, [p], seed=0).dist_total
                  for p in PARAMS[kind])
        assert batch.dist_total < seq

    def test_report_degree_matches_graph(self, gauss_small):
        res = build_batch(gauss_small, "vamana", PARAMS["vamana"], seed=1)
        for g, r in zip(res.graphs, res.reports):
            assert r.avg_degree == pytest.approx(g.avg_degree(0))

    def test_knng_counted_once_per_k(self, gauss_small):
        """Two NSG configs sharing K reuse one KNNG; the second graph's
        connect phase must not pay for it again."""
        same = build_batch(gauss_small, "nsg",
                           [{"K": 12, "L": 24, "M": 10},
                            {"K": 12, "L": 32, "M": 12}], seed=0)
        alone = build_batch(gauss_small, "nsg",
                            [{"K": 12, "L": 32, "M": 12}], seed=0)
        n = gauss_small.shape[0]
        knng_cost = n * (n - 1)
        assert alone.reports[0].dist_connect >= knng_cost
        assert same.reports[1].dist_connect \
            <= alone.reports[0].dist_connect - knng_cost + 1
        assert graphs_equal(same.graphs[1], alone.graphs[0])


class TestMedoid:
    def test_matches_oracle(self, gauss_small):
        counters = np.zeros((2, 3), dtype=np.int64)
        got = nearest_to_centroid(gauss_small, counters, 0)
        centroid = gauss_small.astype(np.float64).mean(axis=0)
        want = int(np.argmin(
            ((gauss_small - centroid.astype(np.float32)) ** 2).sum(axis=1)))
        assert got == want
        assert counters[0, 2] == gauss_small.shape[0]


class TestInitialKnng:
    def test_exact_matches_brute_force(self, gauss_small):
        g = build_initial_knng(gauss_small, K=8, mode="exact")
        n = gauss_small.shape[0]
        for u in range(0, n, 37):
            ids, _ = brute_force_knn(gauss_small, gauss_small[u], 9)
            want = [i for i in ids if i != u][:8]
            np.testing.assert_array_equal(g.layers[0].neighbors(u), want)

    def test_exact_count(self, gauss_small):
        c = DistanceCounter()
        build_initial_knng(gauss_small, K=8, mode="exact", counter=c)
        n = gauss_small.shape[0]
        assert c.count == n * (n - 1)

    def test_nn_descent_recall(self, gauss_medium):
        exact = build_initial_knng(gauss_medium, K=10, mode="exact")
        approx = build_initial_knng(gauss_medium, K=10,
                                    mode="nn_descent", seed=0)
        n = gauss_medium.shape[0]
        hits = sum(np.intersect1d(exact.layers[0].neighbors(u),
                                  approx.layers[0].neighbors(u)).size
                   for u in range(n))
        assert hits / (n * 10) >= 0.9

    def test_nn_descent_cheaper_than_exact(self, gauss_medium):
        c = DistanceCounter()
        build_initial_knng(gauss_medium, K=10, mode="nn_descent", counter=c)
        n = gauss_medium.shape[0]
        assert c.count < n * (n - 1)

    def test_roundtrips_as_graph(self, gauss_small, tmp_path):
        g = build_initial_knng(gauss_small, K=6, mode="exact")
        g.save(tmp_path / "knng.pgx")
        back = ProximityGraph.load(tmp_path / "knng.pgx")
        assert graphs_equal(g, back)
        assert back.params == {"K": 6, "mode": "exact"}


def _two_islands(n_a=6, n_b=4):
    """Flat graph falling into two components, entry inside the first."""
    rng = np.random.default_rng(0)
    X = np.concatenate([
        rng.normal(0.0, 0.3, size=(n_a, 2)),
        rng.normal(5.0, 0.3, size=(n_b, 2)),
    ]).astype(np.float32)
    n = n_a + n_b
    adj = LayerAdjacency.empty(n, 4)
    for u in range(n_a):
        adj.set_list(u, np.array([(u + 1) % n_a], dtype=np.int32))
    for u in range(n_b):
        adj.set_list(n_a + u, np.array([n_a + (u + 1) % n_b],
                                       dtype=np.int32))
    g = ProximityGraph("knng", 2, np.zeros(n, dtype=np.int32), [adj], 0, 0,
                       {"K": 4, "mode": "exact"}, 0)
    return X, g


def _reachable_count(graph):
    seen = {graph.entry_point}
    stack = [graph.entry_point]
    while stack:
        u = stack.pop()
        for v in graph.layers[0].neighbors(u):
            if int(v) not in seen:
                seen.add(int(v))
                stack.append(int(v))
    return len(seen)


class TestEnsureConnectivity:
    def test_bridges_islands(self):
        X, g = _two_islands()
        c = DistanceCounter()
        added = ensure_connectivity(g, X, c)
        assert added == 1
        assert _reachable_count(g) == g.n
        assert c.count > 0

    def test_noop_when_connected(self):
        X, g = _two_islands()
        ensure_connectivity(g, X)
        assert ensure_connectivity(g, X) == 0

    def test_respects_degree_cap_by_dropping_farthest(self):
        X, g = _two_islands()
        # saturate every first-island node so the bridge must evict
        adj = g.layers[0]
        for u in range(6):
            others = [v for v in range(6) if v != u][:4]
            adj.set_list(u, np.array(others, dtype=np.int32))
        ensure_connectivity(g, X, max_degree=4)
        assert _reachable_count(g) == g.n
        assert int(adj.deg[:6].max()) <= 4

    def test_nsg_builds_are_connected(self, gauss_small):
        res = build_batch(gauss_small, "nsg", PARAMS["nsg"], seed=2)
        for g in res.graphs:
            assert _reachable_count(g) == g.n


class TestHnswShape:
    def test_levels_match_assign_layer(self, gauss_small):
        res = build_multi_hnsw(gauss_small, [{"M": 6, "efc": 30}], seed=4)
        g = res.graphs[0]
        s = SeedStreams(4)
        want = [0] + [assign_layer(u, s, 16)
                      for u in range(1, gauss_small.shape[0])]
        np.testing.assert_array_equal(g.node_levels, want)
        assert g.max_layer == max(want)

    def test_base_layer_degree_cap_doubled(self, gauss_small):
        res = build_multi_hnsw(gauss_small, [{"M": 6, "efc": 30}], seed=4)
        g = res.graphs[0]
        assert int(g.layers[0].deg.max()) <= 12
        for j in range(1, g.max_layer + 1):
            assert int(g.layers[j].deg.max()) <= 6

    def test_upper_layers_contain_only_high_nodes(self, gauss_small):
        res = build_multi_hnsw(gauss_small, [{"M": 6, "efc": 30}], seed=4)
        g = res.graphs[0]
        for j in range(1, g.max_layer + 1):
            active = np.flatnonzero(g.layers[j].deg > 0)
            assert np.all(g.node_levels[active] >= j)


class TestVamanaShape:
    def test_degree_cap(self, gauss_small):
        res = build_multi_vamana(gauss_small,
                                 [{"L": 24, "M": 10, "alpha": 1.2}], seed=0)
        assert int(res.graphs[0].layers[0].deg.max()) <= 10

    def test_entry_is_medoid(self, gauss_small):
        res = build_multi_vamana(gauss_small,
                                 [{"L": 24, "M": 10, "alpha": 1.2}], seed=0)
        counters = np.zeros((1, 3), dtype=np.int64)
        assert res.graphs[0].entry_point == nearest_to_centroid(
            gauss_small, counters, 0)


class TestNsgShape:
    def test_degree_cap_after_repair(self, gauss_small):
        res = build_multi_nsg(gauss_small, [{"K": 10, "L": 24, "M": 8}],
                              seed=0)
        g = res.graphs[0]
        # repair may widen a row only when every reached node is full
        assert int(g.layers[0].deg.max()) <= 8 + 1

    def test_batch_size_independence(self, gauss_small):
        alone = build_multi_nsg(gauss_small, [{"K": 10, "L": 24, "M": 10}],
                                seed=6)
        paired = build_multi_nsg(gauss_small,
                                 [{"K": 10, "L": 24, "M": 10},
                                  {"K": 14, "L": 40, "M": 12}], seed=6)
        assert graphs_equal(alone.graphs[0], paired.graphs[0])


class TestBuildDispatch:
    def test_unknown_kind(self, gauss_small):
        with pytest.raises(ValueError, match="kind"):
            build_batch(gauss_small, "nsw", [{}], seed=0)

    def test_empty_params_list(self, gauss_small):
        with pytest.raises(ValueError):
            build_batch(gauss_small, "hnsw", [], seed=0)
