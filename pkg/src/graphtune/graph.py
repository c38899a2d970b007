"""Proximity graph container, beam search, distance cache, serialization.

A graph is a list of layers; each layer is a padded adjacency matrix plus
a degree vector. Flat graph kinds have a single layer. Node membership in
an upper layer is `node_levels[u] >= layer`. Out-neighbor lists are
ordered (insertion order from pruning), which the binary format preserves
exactly, so structurally identical builds serialize byte-identically.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .data import DistanceCounter

GRAPH_KINDS = ("hnsw", "vamana", "nsg", "knng")
_MAGIC = b"PGX1"
_FORMAT_VERSION = 1


class GraphFormatError(ValueError):
    """Raised for malformed graph files."""


@dataclass
class LayerAdjacency:
    """Padded out-neighbor lists for one layer."""

    adj: np.ndarray   # int32 (n, cap)
    deg: np.ndarray   # int32 (n,)

    @classmethod
    def empty(cls, n: int, cap: int) -> "LayerAdjacency":
        return cls(np.full((n, max(cap, 1)), -1, dtype=np.int32),
                   np.zeros(n, dtype=np.int32))

    def neighbors(self, u: int) -> np.ndarray:
        return self.adj[u, : self.deg[u]].copy()

    def set_list(self, u: int, ids: np.ndarray) -> None:
        k = ids.shape[0]
        self.adj[u, :k] = ids
        self.deg[u] = k


class DistanceCache:
    """Per-source memo of squared distances with O(1) epoch reset.

    An entry for target v is valid iff its stamp equals the current
    epoch; advancing the epoch invalidates everything without touching
    the arrays. Values come from the same kernel as every other distance
    evaluation, so a hit is bit-identical to a recomputation.
    """

    __slots__ = ("values", "epochs", "tag")

    def __init__(self, n: int) -> None:
        self.values = np.zeros(n, dtype=np.float32)
        self.epochs = np.zeros(n, dtype=np.int64)
        self.tag = 1

    def advance(self) -> None:
        self.tag += 1

    def valid_count(self) -> int:
        return int((self.epochs == self.tag).sum())


class SearchScratch:
    """Reusable visited stamps and pool buffers for one search worker."""

    def __init__(self, n: int, max_ef: int = 512) -> None:
        self.visited = np.zeros(n, dtype=np.int64)
        self.vtag = 0
        self._pool_ids = np.empty(max_ef, dtype=np.int32)
        self._pool_d2 = np.empty(max_ef, dtype=np.float32)
        self._pool_exp = np.zeros(max_ef, dtype=np.bool_)

    def next_tag(self) -> int:
        self.vtag += 1
        return self.vtag

    def pool(self, ef: int):
        if ef > self._pool_ids.shape[0]:
            self._pool_ids = np.empty(ef, dtype=np.int32)
            self._pool_d2 = np.empty(ef, dtype=np.float32)
            self._pool_exp = np.zeros(ef, dtype=np.bool_)
        return self._pool_ids, self._pool_d2, self._pool_exp


@dataclass
class ProximityGraph:
    """A built index: layered adjacency over an external vector set."""

    kind: str
    dim: int
    node_levels: np.ndarray           # int32 (n,)
    layers: list[LayerAdjacency]
    entry_point: int
    max_layer: int
    params: dict
    seed: int

    @property
    def n(self) -> int:
        return self.node_levels.shape[0]

    def neighbors(self, u: int, layer: int = 0) -> np.ndarray:
        return self.layers[layer].neighbors(u)

    def avg_degree(self, layer: int = 0) -> float:
        return float(self.layers[layer].deg.mean())

    def layer_histogram(self) -> list[int]:
        return [int((self.node_levels >= j).sum()) for j in range(self.max_layer + 1)]

    # --- serialization ----------------------------------------------------

    def to_bytes(self) -> bytes:
        chunks = [_MAGIC,
                  struct.pack("<HBB", _FORMAT_VERSION, GRAPH_KINDS.index(self.kind), 0),
                  struct.pack("<IQIIq", self.dim, self.n, self.max_layer,
                              self.entry_point, self.seed),
                  _pack_params(self.kind, self.params),
                  np.ascontiguousarray(self.node_levels, dtype="<i4").tobytes()]
        for layer in self.layers:
            offs = np.zeros(self.n + 1, dtype="<i8")
            offs[1:] = np.cumsum(layer.deg, dtype=np.int64)
            flat = np.concatenate(
                [layer.adj[u, : layer.deg[u]] for u in range(self.n)]
            ) if offs[-1] else np.empty(0, dtype=np.int32)
            chunks.append(offs.tobytes())
            chunks.append(np.ascontiguousarray(flat, dtype="<i4").tobytes())
        return b"".join(chunks)

    def meta(self) -> dict:
        return {
            "kind": self.kind,
            "params": dict(self.params),
            "seed": int(self.seed),
            "n": int(self.n),
            "dim": int(self.dim),
            "max_layer": int(self.max_layer),
            "entry_point": int(self.entry_point),
            "avg_degree": self.avg_degree(),
            "layers": self.layer_histogram(),
        }

    def save(self, path) -> None:
        """Write the flat binary graph plus a JSON metadata sidecar."""
        path = Path(path)
        path.write_bytes(self.to_bytes())
        path.with_suffix(path.suffix + ".meta.json").write_text(
            json.dumps(self.meta(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ProximityGraph":
        if raw[:4] != _MAGIC:
            raise GraphFormatError(f"bad magic {raw[:4]!r} at byte 0")
        ver, kind_code, _flags = struct.unpack_from("<HBB", raw, 4)
        if ver != _FORMAT_VERSION:
            raise GraphFormatError(f"unsupported format version {ver}")
        if kind_code >= len(GRAPH_KINDS):
            raise GraphFormatError(f"unknown graph kind code {kind_code}")
        kind = GRAPH_KINDS[kind_code]
        dim, n, max_layer, entry, seed = struct.unpack_from("<IQIIq", raw, 8)
        pos = 8 + struct.calcsize("<IQIIq")
        params, pos = _unpack_params(kind, raw, pos)
        n = int(n)

        def take(dtype, count, width):
            nonlocal pos
            if pos + width * count > len(raw):
                raise GraphFormatError(f"truncated section at byte {pos}")
            out = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
            pos += width * count
            return out

        levels = take("<i4", n, 4).copy()
        layers = []
        for _ in range(max_layer + 1):
            offs = take("<i8", n + 1, 8)
            total = int(offs[-1])
            flat = take("<i4", total, 4)
            deg = np.diff(offs).astype(np.int32)
            cap = max(int(deg.max()) if n else 0, 1)
            adj = np.full((n, cap), -1, dtype=np.int32)
            for u in range(n):
                adj[u, : deg[u]] = flat[offs[u]: offs[u + 1]]
            layers.append(LayerAdjacency(adj, deg))
        if pos != len(raw):
            raise GraphFormatError(f"trailing bytes at {pos}")
        return cls(kind, int(dim), levels, layers, int(entry), int(max_layer),
                   params, int(seed))

    @classmethod
    def load(cls, path) -> "ProximityGraph":
        return cls.from_bytes(Path(path).read_bytes())


def _pack_params(kind: str, params: dict) -> bytes:
    if kind == "hnsw":
        return struct.pack("<IIIB", params["M"], params["efc"],
                           params["level_m"], int(params["double_base"]))
    if kind == "vamana":
        return struct.pack("<IId", params["L"], params["M"], params["alpha"])
    if kind == "knng":
        return struct.pack("<IB", params["K"],
                           1 if params.get("mode") == "nn_descent" else 0)
    return struct.pack("<III", params["K"], params["L"], params["M"])


def _unpack_params(kind: str, raw: bytes, pos: int):
    if kind == "hnsw":
        M, efc, level_m, dbl = struct.unpack_from("<IIIB", raw, pos)
        return ({"M": M, "efc": efc, "level_m": level_m,
                 "double_base": bool(dbl)}, pos + struct.calcsize("<IIIB"))
    if kind == "vamana":
        L, M, alpha = struct.unpack_from("<IId", raw, pos)
        return ({"L": L, "M": M, "alpha": alpha}, pos + struct.calcsize("<IId"))
    if kind == "knng":
        K, mode = struct.unpack_from("<IB", raw, pos)
        return ({"K": K, "mode": "nn_descent" if mode else "exact"},
                pos + struct.calcsize("<IB"))
    K, L, M = struct.unpack_from("<III", raw, pos)
    return ({"K": K, "L": L, "M": M}, pos + struct.calcsize("<III"))


def graphs_equal(a: ProximityGraph, b: ProximityGraph) -> bool:
    return a.to_bytes() == b.to_bytes()


# --- search ----------------------------------------------------------------


def beam_search(vectors: np.ndarray, layer: LayerAdjacency, query, k: int,
                ef: int, entry: int, counter: DistanceCounter | None = None,
                scratch: SearchScratch | None = None,
                cache: DistanceCache | None = None):
    """Beam search over one layer; returns (ids, distances) of the k best.

    The pool keeps the ef closest visited nodes by (distance, id); the
    first unexpanded pool entry is expanded until none remains, then the
    first k entries are returned (fewer if fewer nodes are reachable).
    With a cache, hits are reused without counting; results are identical
    to the uncached search.
    """
    n = vectors.shape[0]
    if n == 0:
        raise ValueError("empty graph")
    if k < 1 or ef < k:
        raise ValueError(f"need 1 <= k <= ef, got k={k} ef={ef}")
    if not 0 <= entry < n:
        raise ValueError(f"entry point {entry} out of range")
    q = np.ascontiguousarray(query, dtype=np.float32)
    if q.shape != (vectors.shape[1],):
        raise ValueError("query dimension mismatch")
    if scratch is None:
        scratch = SearchScratch(n, ef)
    if counter is None:
        counter = DistanceCounter()
    pool_ids, pool_d2, pool_exp = scratch.pool(ef)
    use_cache = cache is not None
    cval = cache.values if use_cache else _kernels.EMPTY_F32
    ceps = cache.epochs if use_cache else _kernels.EMPTY_I64
    ctag = cache.tag if use_cache else 0
    size = _kernels.search_layer(
        vectors, layer.adj, layer.deg, q, ef, entry,
        scratch.visited, scratch.next_tag(), cval, ceps, ctag, use_cache,
        counter.cells, 0, 0,
        pool_ids, pool_d2, pool_exp,
        _kernels.EMPTY_I64, _kernels.NO_POS, False, -1)
    r = min(k, size)
    ids = pool_ids[:r].copy()
    return ids, np.sqrt(pool_d2[:r])


def search_graph(graph: ProximityGraph, vectors: np.ndarray, query, k: int,
                 ef: int, counter: DistanceCounter | None = None,
                 scratch: SearchScratch | None = None):
    """Full query against a built graph (greedy descent for layered kinds)."""
    if scratch is None:
        scratch = SearchScratch(vectors.shape[0], ef)
    entry = graph.entry_point
    for j in range(graph.max_layer, 0, -1):
        ids, _ = beam_search(vectors, graph.layers[j], query, 1, 1, entry,
                             counter, scratch)
        entry = int(ids[0])
    return beam_search(vectors, graph.layers[0], query, k, ef, entry,
                       counter, scratch)


def neighbor_list_overlap(g1: ProximityGraph, g2: ProximityGraph,
                          layer: int = 0) -> float:
    """Mean per-node overlap of g2's lists with g1's, in [0, 1].

    A node with an empty list in g1 scores 1 if it is also empty in g2,
    else 0. Asymmetric by construction (normalized by g1's degrees).
    """
    if g1.n != g2.n:
        raise ValueError(f"node count mismatch: {g1.n} vs {g2.n}")
    if layer > g1.max_layer or layer > g2.max_layer:
        raise ValueError("layer out of range")
    l1, l2 = g1.layers[layer], g2.layers[layer]
    total = 0.0
    for u in range(g1.n):
        d1 = int(l1.deg[u])
        d2 = int(l2.deg[u])
        if d1 == 0:
            total += 1.0 if d2 == 0 else 0.0
            continue
        a = l1.adj[u, :d1]
        b = l2.adj[u, :d2]
        total += np.intersect1d(a, b).size / d1
    return total / g1.n
