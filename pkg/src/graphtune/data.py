"""Vector datasets, distance accounting, exact search, and benchmark IO.

File formats follow the *vecs convention used by the common ANN benchmark
corpora: each record is a little-endian int32 dimension prefix followed by
that many little-endian float32 (``.fvecs``) or int32 (``.ivecs``) payload
values. Parse failures report the byte offset of the offending record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels


class DatasetFormatError(ValueError):
    """Raised for malformed fvecs/ivecs payloads."""


class DistanceCounter:
    """Tally of full d-component distance evaluations.

    Backed by a (1, 3) int64 array so jitted kernels can bump it in place;
    plain callers only ever use column 0. Cache hits are never counted.
    Separate per-worker counters can be merged after a parallel section.
    """

    __slots__ = ("_cells",)

    def __init__(self) -> None:
        self._cells = np.zeros((1, 3), dtype=np.int64)

    @property
    def count(self) -> int:
        return int(self._cells.sum())

    @property
    def cells(self) -> np.ndarray:
        return self._cells

    def add(self, k: int) -> None:
        self._cells[0, 0] += int(k)

    def merge(self, other: "DistanceCounter") -> None:
        self._cells += other._cells

    def reset(self) -> None:
        self._cells[:] = 0

    def __repr__(self) -> str:  # pragma: no cover
        return f"DistanceCounter(count={self.count})"


@dataclass(frozen=True)
class VectorSet:
    """A dense float32 matrix of vectors with implicit ids 0..n-1.

    An empty set (n == 0) is representable because loaders may encounter
    empty files; every operation consuming vectors rejects it.
    """

    vectors: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-d array, got ndim={arr.ndim}")
        if arr.size and not np.isfinite(arr).all():
            raise ValueError("vectors must be finite")
        object.__setattr__(self, "vectors", arr)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.n


def as_vectors(data) -> np.ndarray:
    """Validated float32 C-contiguous view of a VectorSet or array-like."""
    if isinstance(data, VectorSet):
        arr = data.vectors
    else:
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-d array, got ndim={arr.ndim}")
        if not np.isfinite(arr).all():
            raise ValueError("vectors must be finite")
    if arr.shape[0] == 0:
        raise ValueError("empty vector set")
    return arr


def euclidean(u, v, counter: DistanceCounter | None = None) -> float:
    """Euclidean distance between two vectors, counted as one evaluation."""
    a = np.ascontiguousarray(u, dtype=np.float32)
    b = np.ascontiguousarray(v, dtype=np.float32)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("euclidean expects 1-d vectors")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    d2 = _kernels.sq_vec_vec(a, b)
    if counter is not None:
        counter.add(1)
    return float(math.sqrt(float(d2)))


def _load_vecs(path, kind: str) -> np.ndarray:
    raw = np.fromfile(str(path), dtype=np.uint8)
    if raw.size == 0:
        return np.empty((0, 0), dtype=np.float32 if kind == "f" else np.int32)
    if raw.size < 4:
        raise DatasetFormatError(f"{path}: truncated dimension prefix at byte 0")
    d = int(raw[:4].view("<i4")[0])
    if d <= 0:
        raise DatasetFormatError(f"{path}: non-positive dimension {d} at byte 0")
    rec = 4 * (d + 1)
    if raw.size % rec != 0:
        raise DatasetFormatError(
            f"{path}: truncated record at byte {raw.size - raw.size % rec}"
        )
    n = raw.size // rec
    as_i32 = raw.view("<i4").reshape(n, d + 1)
    dims = as_i32[:, 0]
    bad = np.flatnonzero(dims != d)
    if bad.size:
        i = int(bad[0])
        raise DatasetFormatError(
            f"{path}: dimension {int(dims[i])} != {d} at byte {i * rec}"
        )
    if kind == "f":
        payload = raw.view("<f4").reshape(n, d + 1)[:, 1:]
        return np.ascontiguousarray(payload, dtype=np.float32)
    return np.ascontiguousarray(as_i32[:, 1:], dtype=np.int32)


def load_fvecs(path) -> VectorSet:
    """Read an .fvecs file. An empty file yields an empty VectorSet."""
    return VectorSet(_load_vecs(path, "f"))


def load_ivecs(path) -> np.ndarray:
    """Read an .ivecs file into an int32 (n, d) array."""
    return _load_vecs(path, "i")


def _write_vecs(path, arr: np.ndarray, dtype) -> None:
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise ValueError("expected a non-degenerate 2-d array")
    n, d = arr.shape
    out = np.empty((n, d + 1), dtype="<i4")
    out[:, 0] = d
    out[:, 1:] = arr.view("<i4") if dtype == np.float32 else arr
    Path(path).write_bytes(out.tobytes())


def write_fvecs(path, vectors) -> None:
    arr = as_vectors(vectors) if not isinstance(vectors, np.ndarray) else np.ascontiguousarray(vectors, dtype=np.float32)
    _write_vecs(path, arr, np.float32)


def write_ivecs(path, ids: np.ndarray) -> None:
    _write_vecs(path, np.ascontiguousarray(ids, dtype=np.int32), np.int32)


SYNTHETIC_KINDS = ("uniform", "gaussian", "clustered")


def gen_synthetic(n: int, d: int, seed: int, kind: str = "uniform",
                  centers: int = 8, return_labels: bool = False):
    """Deterministic synthetic dataset of n float32 vectors in d dims.

    kinds: "uniform" on [0,1)^d, "gaussian" standard normal, "clustered"
    = isotropic gaussian blobs (std 0.5) around `centers` uniform centers
    in [0,10)^d. With return_labels=True the clustered kind also returns
    the true center assignment.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown kind {kind!r}, expected one of {SYNTHETIC_KINDS}")
    rng = np.random.default_rng(seed)
    labels = None
    if kind == "uniform":
        pts = rng.random((n, d), dtype=np.float32)
    elif kind == "gaussian":
        pts = rng.standard_normal((n, d), dtype=np.float32)
    else:
        if centers < 1:
            raise ValueError("centers must be positive")
        ctr = rng.uniform(0.0, 10.0, size=(centers, d))
        labels = rng.integers(0, centers, size=n)
        pts = (ctr[labels] + rng.normal(0.0, 0.5, size=(n, d))).astype(np.float32)
    vs = VectorSet(pts)
    if return_labels:
        return vs, labels
    return vs


def brute_force_knn(data, query, k: int, counter: DistanceCounter | None = None):
    """Exact k nearest neighbors of one query by linear scan.

    Returns (ids int32[k], distances float32[k]) ordered by ascending
    (distance, id). Counts exactly n distance evaluations.
    """
    X = as_vectors(data)
    q = np.ascontiguousarray(query, dtype=np.float32)
    if q.ndim != 1 or q.shape[0] != X.shape[1]:
        raise ValueError("query dimension mismatch")
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for n={n}")
    diff = X - q
    d2 = np.einsum("ij,ij->i", diff, diff)
    if counter is not None:
        counter.add(n)
    order = np.lexsort((np.arange(n), d2))[:k]
    return order.astype(np.int32), np.sqrt(d2[order]).astype(np.float32)


def recall_at_k(result_ids, truth_ids, k: int) -> float:
    """|result[:k] ∩ truth[:k]| / k."""
    result_ids = np.asarray(result_ids)
    truth_ids = np.asarray(truth_ids)
    if truth_ids.shape[0] < k:
        raise ValueError(f"ground truth has {truth_ids.shape[0]} entries, need {k}")
    if result_ids.shape[0] > 0 and result_ids.ndim != 1:
        raise ValueError("result_ids must be 1-d")
    hits = np.intersect1d(result_ids[:k], truth_ids[:k]).size
    return hits / k


@dataclass(frozen=True)
class GroundTruth:
    """Exact top-k* ids and distances for a query set."""

    ids: np.ndarray    # int32 (nq, kstar)
    dists: np.ndarray  # float32 (nq, kstar)

    def __post_init__(self):
        ids = np.ascontiguousarray(self.ids, dtype=np.int32)
        dists = np.ascontiguousarray(self.dists, dtype=np.float32)
        if ids.shape != dists.shape or ids.ndim != 2:
            raise ValueError("ids and dists must be equal-shape 2-d arrays")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "dists", dists)

    @property
    def kstar(self) -> int:
        return self.ids.shape[1]

    @classmethod
    def compute(cls, data, queries, kstar: int = 100,
                counter: DistanceCounter | None = None,
                threads: int = 1) -> "GroundTruth":
        X = as_vectors(data)
        Q = as_vectors(queries)
        if Q.shape[1] != X.shape[1]:
            raise ValueError("query dimension mismatch")
        if threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            chunks = np.array_split(np.arange(Q.shape[0]), threads)
            parts: list = [None] * len(chunks)

            def work(ci):
                local = DistanceCounter()
                rows = [brute_force_knn(X, Q[i], kstar, local) for i in chunks[ci]]
                return rows, local

            with ThreadPoolExecutor(max_workers=threads) as ex:
                for ci, res in enumerate(ex.map(work, range(len(chunks)))):
                    parts[ci] = res
            rows = []
            for part_rows, local in parts:
                rows.extend(part_rows)
                if counter is not None:
                    counter.merge(local)
        else:
            rows = [brute_force_knn(X, Q[i], kstar, counter) for i in range(Q.shape[0])]
        ids = np.stack([r[0] for r in rows])
        dists = np.stack([r[1] for r in rows])
        return cls(ids, dists)

    def save(self, prefix) -> None:
        """Write <prefix>.ivecs (ids) and a parallel <prefix>.fvecs (distances)."""
        prefix = str(prefix)
        write_ivecs(prefix + ".ivecs", self.ids)
        _write_vecs(prefix + ".fvecs", self.dists, np.float32)

    @classmethod
    def load(cls, prefix) -> "GroundTruth":
        prefix = str(prefix)
        ids = load_ivecs(prefix + ".ivecs")
        dists = _load_vecs(prefix + ".fvecs", "f")
        return cls(ids, dists)
