"""Batched proximity-graph builders with shared distance accounting.

All three builders construct m graphs over the same vector set in one
interleaved pass: for each node, the per-source distance cache is reset
once and every graph's search/prune work for that node runs against it,
so a distance evaluated for one graph is a free cache hit for the rest.
A single-graph build is simply a batch of one; per-graph output depends
only on (data, that graph's parameters, seed), never on what else is in
the batch, so batch and standalone builds are byte-identical.

Determinism contract: node insertion in ascending id, all ties by
ascending id, and every random draw comes from a purpose- and
node-indexed stream derived from the seed (layer draws, seed-graph
edges), so draws are independent of batch size and build order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from ._kernels import PHASE_CONNECT, PHASE_PRUNE, PHASE_SEARCH
from .data import DistanceCounter, as_vectors
from .graph import (DistanceCache, LayerAdjacency, ProximityGraph,
                    SearchScratch)

DEFAULT_LEVEL_M = 16


class SeedStreams:
    """Purpose-tagged deterministic random streams derived from one seed.

    Streams are indexed by (purpose, node), not drawn sequentially, so a
    node's draw is identical regardless of batch size or build order.
    """

    LAYERS = 1
    EDGES = 2
    KNNG = 3
    QUERIES = 4

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)

    def generator(self, purpose: int, index: int = 0) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence([self.seed, purpose, index]))

    def node_uniform(self, purpose: int, node: int) -> float:
        # in (0, 1]: the log transform below must never see 0
        return 1.0 - self.generator(purpose, node).random()


def assign_layer(node_id: int, streams: SeedStreams, M: int) -> int:
    """Geometric layer draw: floor(-ln(U) / ln(M)), U node-indexed."""
    if M < 2:
        raise ValueError("M must be >= 2 for layer assignment")
    u = streams.node_uniform(SeedStreams.LAYERS, node_id)
    return int(math.floor(-math.log(u) / math.log(M)))


def _distinct_targets(streams: SeedStreams, purpose: int, node: int,
                      count: int, n: int) -> list[int]:
    """First `count` distinct non-self draws of the node's stream.

    Prefix-monotone in `count`, which keeps a graph's seed edges
    independent of the largest degree present in its batch.
    """
    gen = streams.generator(purpose, node)
    seen: set[int] = set()
    out: list[int] = []
    while len(out) < count:
        v = int(gen.integers(0, n))
        if v == node or v in seen:
            continue
        seen.add(v)
        out.append(v)
    return out


# --- parameter types ---------------------------------------------------------


@dataclass(frozen=True)
class HnswParams:
    M: int = 16
    efc: int = 200

    def __post_init__(self):
        if self.M < 2:
            raise ValueError(f"M must be >= 2, got {self.M}")
        if self.efc < self.M:
            raise ValueError(f"efc must be >= M, got efc={self.efc} M={self.M}")


@dataclass(frozen=True)
class VamanaParams:
    L: int = 100
    M: int = 32
    alpha: float = 1.2

    def __post_init__(self):
        if self.L < 1 or self.M < 1:
            raise ValueError("L and M must be positive")
        if self.alpha < 1.0:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")


@dataclass(frozen=True)
class NsgParams:
    K: int = 40
    L: int = 100
    M: int = 32

    def __post_init__(self):
        if self.K < 1 or self.L < 1 or self.M < 1:
            raise ValueError("K, L and M must be positive")


PARAM_TYPES = {"hnsw": HnswParams, "vamana": VamanaParams, "nsg": NsgParams}


def coerce_params(kind: str, params):
    if isinstance(params, PARAM_TYPES[kind]):
        return params
    if isinstance(params, dict):
        return PARAM_TYPES[kind](**params)
    raise TypeError(f"cannot interpret {params!r} as {kind} parameters")


@dataclass
class BuildReport:
    """Per-graph construction accounting."""

    kind: str
    params: dict
    seed: int
    dist_total: int
    dist_search: int
    dist_prune: int
    dist_connect: int
    wall_ms: float
    avg_degree: float
    layers: list[int]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": dict(self.params),
            "seed": int(self.seed),
            "dist_total": int(self.dist_total),
            "dist_search": int(self.dist_search),
            "dist_prune": int(self.dist_prune),
            "dist_connect": int(self.dist_connect),
            "wall_ms": float(self.wall_ms),
            "avg_degree": float(self.avg_degree),
            "layers": [int(x) for x in self.layers],
        }


@dataclass
class BatchBuildResult:
    graphs: list[ProximityGraph]
    reports: list[BuildReport]
    pair_sets: list[dict] | None = None   # per graph: phase -> unique pair codes

    @property
    def dist_total(self) -> int:
        return sum(r.dist_total for r in self.reports)


class _PairLog:
    """Per-graph, per-phase evaluated-pair buffers (dataset-member pairs)."""

    PHASES = ("search", "prune", "connect")

    def __init__(self, m: int, cap: int) -> None:
        self.bufs = [[np.empty(cap, dtype=np.int64) for _ in range(3)]
                     for _ in range(m)]
        self.pos = [[np.zeros(1, dtype=np.int64) for _ in range(3)]
                    for _ in range(m)]
        self.extra: list[list[list[np.ndarray]]] = [[[], [], []] for _ in range(m)]

    def buf(self, gi: int, phase: int):
        return self.bufs[gi][phase], self.pos[gi][phase]

    def add_codes(self, gi: int, phase: int, codes: np.ndarray) -> None:
        self.extra[gi][phase].append(np.asarray(codes, dtype=np.int64))

    def finish(self, gi: int) -> dict:
        out = {}
        for ph, name in enumerate(self.PHASES):
            used = int(self.pos[gi][ph][0])
            buf = self.bufs[gi][ph]
            if used > buf.shape[0]:
                raise RuntimeError(
                    "pair buffer overflow; raise pair_cap or disable pair mode")
            parts = [buf[:used]] + self.extra[gi][ph]
            out[name] = np.unique(np.concatenate(parts)) if parts else buf[:0]
        return out


_NO_PAIRS = (_kernels.EMPTY_I64, _kernels.NO_POS, False)


def _make_scratch(n: int, params_list) -> tuple[DistanceCache, SearchScratch]:
    return DistanceCache(n), SearchScratch(n)


def _reports(kind: str, params_dicts, seed, counters, wall_ms, graphs) -> list[BuildReport]:
    out = []
    m = len(params_dicts)
    for gi, pd in enumerate(params_dicts):
        s, p, c = (int(counters[gi, PHASE_SEARCH]),
                   int(counters[gi, PHASE_PRUNE]),
                   int(counters[gi, PHASE_CONNECT]))
        g = graphs[gi]
        out.append(BuildReport(kind, pd, seed, s + p + c, s, p, c,
                               wall_ms / m, g.avg_degree(0), g.layer_histogram()))
    return out


def _search_build(X, layer, qvec, ef, entry, scratch, cache, counters, row,
                  pairs, source):
    """Cached beam search during construction; returns copied (ids, d2)."""
    pool_ids, pool_d2, pool_exp = scratch.pool(ef)
    pb, pp, rec = pairs
    size = _kernels.search_layer(
        X, layer.adj, layer.deg, qvec, ef, entry,
        scratch.visited, scratch.next_tag(),
        cache.values, cache.epochs, cache.tag, True,
        counters, row, PHASE_SEARCH,
        pool_ids, pool_d2, pool_exp,
        pb, pp, rec, source)
    return pool_ids[:size].copy(), pool_d2[:size].copy()


def _prune_build(X, owner, cand_ids, cand_d2, limit, alpha, prev, counters,
                 row, pairs, out_ids, out_d2):
    """mprune step: reuse dominance skips when the previous alpha allows."""
    prev_sorted, prev_alpha = prev if prev is not None else (None, None)
    use_skip = prev_sorted is not None and prev_alpha <= alpha
    ps = prev_sorted if use_skip else _kernels.EMPTY_I32
    pb, pp, rec = pairs
    kept = _kernels.prune_kernel(
        X, cand_ids, cand_d2, limit, float(alpha), ps, use_skip,
        counters, row, PHASE_PRUNE, pb, pp, rec, out_ids, out_d2)
    return out_ids[:kept].copy(), out_d2[:kept].copy()


def _reverse_edges(X, layer, u, kept_ids, cap, alpha, counters, row, pairs,
                   work):
    """Insert u into its kept neighbors' lists, re-pruning any overflow."""
    work_ids, work_d2, rout_ids, rout_d2 = work
    pb, pp, rec = pairs
    _kernels.reverse_insert_kernel(
        X, layer.adj, layer.deg, u, kept_ids, cap, float(alpha),
        counters, row, PHASE_CONNECT, pb, pp, rec,
        work_ids, work_d2, rout_ids, rout_d2)


def nearest_to_centroid(X: np.ndarray, counters: np.ndarray, row: int) -> int:
    """Id of the vector closest to the dataset mean (ties: lowest id)."""
    c = X.mean(axis=0, dtype=np.float64).astype(np.float32)
    diff = X - c
    d2 = np.einsum("ij,ij->i", diff, diff)
    counters[row, PHASE_CONNECT] += X.shape[0]
    return int(np.argmin(d2))


# --- layered builder ---------------------------------------------------------


def build_multi_hnsw(data, params_list: Sequence, seed: int = 0, *,
                     level_m: int = DEFAULT_LEVEL_M, double_base: bool = True,
                     collect_pairs: bool = False,
                     pair_cap: int = 20_000_000) -> BatchBuildResult:
    """Build m layered graphs in one pass.

    Layer draws are node-indexed and use the batch-invariant `level_m`
    multiplier, so every graph in any batch (and any standalone build
    with the same seed) places each node at the same layer and evolves
    the same (entry point, top layer) bookkeeping.
    """
    X = as_vectors(data)
    n = X.shape[0]
    plist = [coerce_params("hnsw", p) for p in params_list]
    if not plist:
        raise ValueError("params_list must not be empty")
    m = len(plist)
    t0 = time.perf_counter()
    streams = SeedStreams(seed)

    levels = np.zeros(n, dtype=np.int32)
    for u in range(1, n):
        levels[u] = assign_layer(u, streams, level_m)
    top = int(levels.max()) if n > 1 else 0

    caps = []
    graphs_layers: list[list[LayerAdjacency]] = []
    for p in plist:
        base_cap = 2 * p.M if double_base else p.M
        caps.append([base_cap] + [p.M] * top)
        graphs_layers.append(
            [LayerAdjacency.empty(n, c + 1) for c in caps[-1]])

    counters = np.zeros((m, 3), dtype=np.int64)
    cache, scratch = _make_scratch(n, plist)
    pair_log = _PairLog(m, pair_cap) if collect_pairs else None
    max_cap = max(c[0] for c in caps)
    work = (np.empty(max_cap + 1, np.int32), np.empty(max_cap + 1, np.float32),
            np.empty(max_cap + 1, np.int32), np.empty(max_cap + 1, np.float32))
    out_ids = np.empty(max_cap + 1, np.int32)
    out_d2 = np.empty(max_cap + 1, np.float32)

    ep, mL = 0, 0
    for u in range(1, n):
        lvl = int(levels[u])
        cache.advance()
        qvec = X[u]
        old_ep, old_ml = ep, mL
        prev_by_layer: dict[int, tuple[np.ndarray, float]] = {}
        for gi, p in enumerate(plist):
            pairs_s = pair_log.buf(gi, PHASE_SEARCH) + (True,) if pair_log else _NO_PAIRS
            pairs_p = pair_log.buf(gi, PHASE_PRUNE) + (True,) if pair_log else _NO_PAIRS
            pairs_c = pair_log.buf(gi, PHASE_CONNECT) + (True,) if pair_log else _NO_PAIRS
            layers = graphs_layers[gi]
            c = old_ep
            for j in range(old_ml, lvl, -1):
                ids, _ = _search_build(X, layers[j], qvec, 1, c, scratch,
                                       cache, counters, gi, pairs_s, u)
                c = int(ids[0])
            entry = c
            for j in range(min(lvl, old_ml), -1, -1):
                cand_ids, cand_d2 = _search_build(
                    X, layers[j], qvec, p.efc, entry, scratch, cache,
                    counters, gi, pairs_s, u)
                entry = int(cand_ids[0])
                kept_ids, _ = _prune_build(
                    X, u, cand_ids, cand_d2, p.M, 1.0, prev_by_layer.get(j),
                    counters, gi, pairs_p, out_ids, out_d2)
                prev_by_layer[j] = (np.sort(kept_ids), 1.0)
                layers[j].set_list(u, kept_ids)
                _reverse_edges(X, layers[j], u, kept_ids, caps[gi][j], 1.0,
                               counters, gi, pairs_c, work)
        if lvl > mL:
            mL = lvl
            ep = u
    wall_ms = (time.perf_counter() - t0) * 1000.0

    graphs = []
    pdicts = []
    for gi, p in enumerate(plist):
        pd = {"M": p.M, "efc": p.efc, "level_m": level_m,
              "double_base": double_base}
        pdicts.append(pd)
        graphs.append(ProximityGraph("hnsw", X.shape[1], levels.copy(),
                                     graphs_layers[gi][: mL + 1], ep, mL,
                                     pd, seed))
    reports = _reports("hnsw", pdicts, seed, counters, wall_ms, graphs)
    pair_sets = [pair_log.finish(gi) for gi in range(m)] if pair_log else None
    return BatchBuildResult(graphs, reports, pair_sets)


# --- single-pass incremental builder ------------------------------------------


def build_multi_vamana(data, params_list: Sequence, seed: int = 0, *,
                       collect_pairs: bool = False,
                       pair_cap: int = 20_000_000) -> BatchBuildResult:
    """Build m flat graphs in one pass over random-regular seed graphs.

    Each graph starts from node-indexed random edge lists (degree = its
    M, a prefix of the shared per-node draw sequence). Graphs are
    processed per node in ascending alpha so prune reuse stays sound
    across the batch.
    """
    X = as_vectors(data)
    n = X.shape[0]
    plist = [coerce_params("vamana", p) for p in params_list]
    if not plist:
        raise ValueError("params_list must not be empty")
    for p in plist:
        if p.M > n - 1:
            raise ValueError(f"M={p.M} needs at least {p.M + 1} vectors")
    m = len(plist)
    t0 = time.perf_counter()
    streams = SeedStreams(seed)

    order = sorted(range(m), key=lambda i: (plist[i].alpha, i))
    max_m = max(p.M for p in plist)
    layers = [LayerAdjacency.empty(n, p.M + 1) for p in plist]
    for u in range(n):
        targets = _distinct_targets(streams, SeedStreams.EDGES, u, max_m, n)
        for gi, p in enumerate(plist):
            layers[gi].set_list(u, np.asarray(targets[: p.M], dtype=np.int32))

    counters = np.zeros((m, 3), dtype=np.int64)
    cache, scratch = _make_scratch(n, plist)
    pair_log = _PairLog(m, pair_cap) if collect_pairs else None
    max_cap = max_m
    work = (np.empty(max_cap + 1, np.int32), np.empty(max_cap + 1, np.float32),
            np.empty(max_cap + 1, np.int32), np.empty(max_cap + 1, np.float32))
    out_ids = np.empty(max_cap + 1, np.int32)
    out_d2 = np.empty(max_cap + 1, np.float32)

    medoid = nearest_to_centroid(X, counters, 0)
    for u in range(n):
        cache.advance()
        qvec = X[u]
        prev: tuple[np.ndarray, float] | None = None
        for gi in order:
            p = plist[gi]
            pairs_s = pair_log.buf(gi, PHASE_SEARCH) + (True,) if pair_log else _NO_PAIRS
            pairs_p = pair_log.buf(gi, PHASE_PRUNE) + (True,) if pair_log else _NO_PAIRS
            pairs_c = pair_log.buf(gi, PHASE_CONNECT) + (True,) if pair_log else _NO_PAIRS
            cand_ids, cand_d2 = _search_build(
                X, layers[gi], qvec, p.L, medoid, scratch, cache,
                counters, gi, pairs_s, u)
            keep = cand_ids != u
            if not keep.all():
                cand_ids, cand_d2 = cand_ids[keep], cand_d2[keep]
            kept_ids, _ = _prune_build(
                X, u, cand_ids, cand_d2, p.M, p.alpha, prev,
                counters, gi, pairs_p, out_ids, out_d2)
            prev = (np.sort(kept_ids), p.alpha)
            layers[gi].set_list(u, kept_ids)
            _reverse_edges(X, layers[gi], u, kept_ids, p.M, p.alpha,
                           counters, gi, pairs_c, work)
    wall_ms = (time.perf_counter() - t0) * 1000.0

    levels = np.zeros(n, dtype=np.int32)
    graphs = []
    pdicts = []
    for gi, p in enumerate(plist):
        pd = {"L": p.L, "M": p.M, "alpha": p.alpha}
        pdicts.append(pd)
        graphs.append(ProximityGraph("vamana", X.shape[1], levels.copy(),
                                     [layers[gi]], medoid, 0, pd, seed))
    reports = _reports("vamana", pdicts, seed, counters, wall_ms, graphs)
    pair_sets = [pair_log.finish(gi) for gi in range(m)] if pair_log else None
    return BatchBuildResult(graphs, reports, pair_sets)


# --- KNNG-seeded flat builder --------------------------------------------------


def _initial_knng_lists(data, K: int, seed: int = 0, mode: str = "exact",
                        counter: DistanceCounter | None = None,
                        collect_pairs: bool = False):
    """K-nearest-neighbor lists, exact or by iterative neighbor descent.

    Returns (LayerAdjacency, pair_codes or None). Exact mode is a full
    scan (n-1 evaluations per node). Descent mode refines node-indexed
    random lists by local joins until the update rate drops below 0.001
    or 10 rounds pass; deterministic under the seed.
    """
    X = as_vectors(data)
    n = X.shape[0]
    if not 1 <= K <= n - 1:
        raise ValueError(f"K={K} out of range for n={n}")
    if mode not in ("exact", "nn_descent"):
        raise ValueError(f"unknown KNNG mode {mode!r}")
    if counter is None:
        counter = DistanceCounter()
    if mode == "exact":
        Xd = X.astype(np.float64)
        norms = np.einsum("ij,ij->i", Xd, Xd)
        adj = np.empty((n, K), dtype=np.int32)
        block = max(1, min(n, 2_000_000 // max(n, 1) + 1))
        for start in range(0, n, block):
            rows = slice(start, min(start + block, n))
            D = norms[rows, None] + norms[None, :] - 2.0 * (Xd[rows] @ Xd.T)
            for bi in range(D.shape[0]):
                u = start + bi
                row = D[bi]
                row[u] = np.inf
                idx = np.argpartition(row, K)[:K]
                thr = row[idx].max()
                sel = np.flatnonzero(row <= thr)
                order = np.lexsort((sel, row[sel]))
                adj[u] = sel[order][:K]
        counter.add(n * (n - 1))
        pairs = None
        if collect_pairs:
            iu, ju = np.triu_indices(n, k=1)
            pairs = iu.astype(np.int64) * n + ju
        return LayerAdjacency(adj, np.full(n, K, dtype=np.int32)), pairs

    streams = SeedStreams(seed)
    knn_ids = np.empty((n, K), dtype=np.int32)
    for u in range(n):
        knn_ids[u] = _distinct_targets(streams, SeedStreams.KNNG, u, K, n)
    knn_d2 = np.empty((n, K), dtype=np.float32)
    knn_new = np.ones((n, K), dtype=np.uint8)
    if collect_pairs:
        buf = np.empty(60 * n * K, dtype=np.int64)
        pos = np.zeros(1, dtype=np.int64)
        rec = True
    else:
        buf, pos, rec = _NO_PAIRS
    _kernels.init_knn_lists(X, knn_ids, knn_d2, knn_new,
                            counter.cells, 0, 0, buf, pos, rec)
    for _ in range(10):
        updates = _kernels.nn_descent_round(X, knn_ids, knn_d2, knn_new,
                                            counter.cells, 0, 0, buf, pos, rec)
        if updates / (n * K) < 0.001:
            break
    pairs = None
    if collect_pairs:
        if int(pos[0]) > buf.shape[0]:
            raise RuntimeError("pair buffer overflow in KNNG descent")
        pairs = np.unique(buf[: int(pos[0])])
    return LayerAdjacency(knn_ids, np.full(n, K, dtype=np.int32)), pairs


def build_initial_knng(data, K: int, seed: int = 0, mode: str = "exact",
                       counter: DistanceCounter | None = None) -> ProximityGraph:
    """K-nearest-neighbor graph as a flat ProximityGraph (entry point 0)."""
    X = as_vectors(data)
    layer, _ = _initial_knng_lists(X, K, seed, mode, counter)
    levels = np.zeros(X.shape[0], dtype=np.int32)
    return ProximityGraph("knng", X.shape[1], levels, [layer], 0, 0,
                          {"K": int(K), "mode": mode}, seed)


def build_multi_nsg(data, params_list: Sequence, seed: int = 0, *,
                    knng_mode: str = "exact", collect_pairs: bool = False,
                    pair_cap: int = 20_000_000) -> BatchBuildResult:
    """Build m flat graphs by pruning searches over initial KNN graphs.

    Graphs with equal K share one KNNG construction (counted once, on
    the first such graph). Candidate searches run over the static KNNG;
    the pruned graph is assembled separately, then connectivity from the
    centroid-nearest entry is repaired per graph.
    """
    X = as_vectors(data)
    n = X.shape[0]
    plist = [coerce_params("nsg", p) for p in params_list]
    if not plist:
        raise ValueError("params_list must not be empty")
    for p in plist:
        if p.K > n - 1:
            raise ValueError(f"K={p.K} needs at least {p.K + 1} vectors")
    m = len(plist)
    t0 = time.perf_counter()

    counters = np.zeros((m, 3), dtype=np.int64)
    pair_log = _PairLog(m, pair_cap) if collect_pairs else None
    knngs: dict[int, LayerAdjacency] = {}
    for gi, p in enumerate(plist):
        if p.K not in knngs:
            kc = DistanceCounter()
            knng, kpairs = _initial_knng_lists(X, p.K, seed, knng_mode, kc,
                                               collect_pairs)
            counters[gi, PHASE_CONNECT] += kc.count
            knngs[p.K] = knng
            if pair_log is not None and kpairs is not None:
                pair_log.add_codes(gi, PHASE_CONNECT, kpairs)

    cache, scratch = _make_scratch(n, plist)
    max_cap = max(p.M for p in plist)
    layers = [LayerAdjacency.empty(n, p.M + 1) for p in plist]
    work = (np.empty(max_cap + 1, np.int32), np.empty(max_cap + 1, np.float32),
            np.empty(max_cap + 1, np.int32), np.empty(max_cap + 1, np.float32))
    out_ids = np.empty(max_cap + 1, np.int32)
    out_d2 = np.empty(max_cap + 1, np.float32)

    medoid = nearest_to_centroid(X, counters, 0)
    for u in range(n):
        cache.advance()
        qvec = X[u]
        prev: tuple[np.ndarray, float] | None = None
        for gi, p in enumerate(plist):
            pairs_s = pair_log.buf(gi, PHASE_SEARCH) + (True,) if pair_log else _NO_PAIRS
            pairs_p = pair_log.buf(gi, PHASE_PRUNE) + (True,) if pair_log else _NO_PAIRS
            pairs_c = pair_log.buf(gi, PHASE_CONNECT) + (True,) if pair_log else _NO_PAIRS
            cand_ids, cand_d2 = _search_build(
                X, knngs[p.K], qvec, p.L, medoid, scratch, cache,
                counters, gi, pairs_s, u)
            keep = cand_ids != u
            if not keep.all():
                cand_ids, cand_d2 = cand_ids[keep], cand_d2[keep]
            kept_ids, _ = _prune_build(
                X, u, cand_ids, cand_d2, p.M, 1.0, prev,
                counters, gi, pairs_p, out_ids, out_d2)
            prev = (np.sort(kept_ids), 1.0)
            layers[gi].set_list(u, kept_ids)
            _reverse_edges(X, layers[gi], u, kept_ids, p.M, 1.0,
                           counters, gi, pairs_c, work)

    levels = np.zeros(n, dtype=np.int32)
    graphs = []
    pdicts = []
    for gi, p in enumerate(plist):
        pd = {"K": p.K, "L": p.L, "M": p.M}
        pdicts.append(pd)
        g = ProximityGraph("nsg", X.shape[1], levels.copy(), [layers[gi]],
                           medoid, 0, pd, seed)
        cc = DistanceCounter()
        ensure_connectivity(g, X, counter=cc, max_degree=p.M)
        counters[gi, PHASE_CONNECT] += cc.count
        graphs.append(g)
    wall_ms = (time.perf_counter() - t0) * 1000.0
    reports = _reports("nsg", pdicts, seed, counters, wall_ms, graphs)
    pair_sets = [pair_log.finish(gi) for gi in range(m)] if pair_log else None
    return BatchBuildResult(graphs, reports, pair_sets)


# --- connectivity repair -------------------------------------------------------


def _reachable(layer: LayerAdjacency, entry: int, n: int) -> np.ndarray:
    seen = np.zeros(n, dtype=bool)
    seen[entry] = True
    stack = [entry]
    while stack:
        u = stack.pop()
        for v in layer.adj[u, : layer.deg[u]]:
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return seen


def _weak_components(layer: LayerAdjacency, members: np.ndarray) -> list[np.ndarray]:
    pos = {int(u): i for i, u in enumerate(members)}
    parent = list(range(len(members)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for u in members:
        iu = pos[int(u)]
        for v in layer.adj[u, : layer.deg[u]]:
            j = pos.get(int(v))
            if j is not None:
                a, b = find(iu), find(j)
                if a != b:
                    parent[max(a, b)] = min(a, b)
    groups: dict[int, list[int]] = {}
    for i, u in enumerate(members):
        groups.setdefault(find(i), []).append(int(u))
    return [np.asarray(groups[r], dtype=np.int64)
            for r in sorted(groups, key=lambda r: groups[r][0])]


def ensure_connectivity(graph: ProximityGraph, data,
                        counter: DistanceCounter | None = None,
                        max_degree: int | None = None) -> int:
    """Make every node reachable from the entry point; returns edges added.

    Repeatedly: find nodes unreachable from the entry, group them into
    weakly connected components, and bridge each with one edge from the
    nearest reached node (over all member/reached pairs) to that member.
    With a degree cap, the nearest reached node with spare capacity is
    preferred; if none has room, the nearest one drops its farthest
    neighbor. All distance evaluations are counted.
    """
    if graph.max_layer != 0:
        raise ValueError("connectivity repair expects a flat graph")
    X = as_vectors(data)
    n = X.shape[0]
    if n != graph.n:
        raise ValueError("data does not match graph size")
    if counter is None:
        counter = DistanceCounter()
    layer = graph.layers[0]
    added = 0
    while True:
        reached = _reachable(layer, graph.entry_point, n)
        if reached.all():
            return added
        r_ids = np.flatnonzero(reached)
        u_ids = np.flatnonzero(~reached)
        for comp in _weak_components(layer, u_ids):
            best = None  # (d2, reached id, member id)
            for x in comp:
                diff = X[r_ids] - X[x]
                d2 = np.einsum("ij,ij->i", diff, diff)
                counter.add(r_ids.shape[0])
                i = int(np.argmin(d2))
                cand = (float(d2[i]), int(r_ids[i]), int(x))
                if best is None or cand < best:
                    best = cand
            _, r, x = best
            if max_degree is not None and layer.deg[r] >= max_degree:
                spare = None
                for xx in comp:
                    diff = X[r_ids] - X[xx]
                    d2 = np.einsum("ij,ij->i", diff, diff)
                    counter.add(r_ids.shape[0])
                    room = layer.deg[r_ids] < max_degree
                    if room.any():
                        j = np.flatnonzero(room)[np.argmin(d2[room])]
                        cand = (float(d2[j]), int(r_ids[j]), int(xx))
                        if spare is None or cand < spare:
                            spare = cand
                if spare is not None:
                    _, r, x = spare
                else:
                    lst = layer.adj[r, : layer.deg[r]]
                    diff = X[lst] - X[r]
                    d2 = np.einsum("ij,ij->i", diff, diff)
                    counter.add(lst.shape[0])
                    drop = int(np.argmax(d2))
                    keep = np.delete(lst, drop)
                    layer.set_list(r, keep)
            if layer.deg[r] >= layer.adj.shape[1]:
                widen = np.full((n, layer.adj.shape[1] + 4), -1, dtype=np.int32)
                widen[:, : layer.adj.shape[1]] = layer.adj
                layer.adj = widen
            layer.adj[r, layer.deg[r]] = x
            layer.deg[r] += 1
            added += 1


def build_batch(data, kind: str, params_list: Sequence, seed: int = 0,
                **kwargs) -> BatchBuildResult:
    """Dispatch to the kind-specific batch builder."""
    builders = {"hnsw": build_multi_hnsw, "vamana": build_multi_vamana,
                "nsg": build_multi_nsg}
    if kind not in builders:
        raise ValueError(f"unknown graph kind {kind!r}")
    return builders[kind](data, params_list, seed, **kwargs)


def build_one(data, kind: str, params, seed: int = 0, **kwargs):
    """Single-graph convenience wrapper (a batch of one)."""
    res = build_batch(data, kind, [params], seed, **kwargs)
    return res.graphs[0], res.reports[0]
