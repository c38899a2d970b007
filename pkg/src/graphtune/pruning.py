"""Diversity pruning of candidate neighbor lists.

`robust_prune` scans candidates in ascending (distance, id) order and
keeps v unless some already-kept w sits much closer to v than v is to the
owner (alpha-scaled). Two monotonicity facts follow directly from that
rule and are enforced by the test suite: the kept set under a candidate
prefix is a subset of the kept set under a longer prefix, and the kept
set under a degree limit is a prefix of the kept set under a larger one.

Passing the previous kept set for the same owner enables a reuse mode:
dominance checks between two previous survivors are skipped, which never
changes the output provided the previous alpha was not larger than the
current one. A smaller current alpha silently falls back to full checks.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .data import DistanceCounter


def _as_candidates(cand_ids, cand_d2):
    ids = np.ascontiguousarray(cand_ids, dtype=np.int32)
    d2 = np.ascontiguousarray(cand_d2, dtype=np.float32)
    if ids.ndim != 1 or ids.shape != d2.shape:
        raise ValueError("candidate ids and distances must be parallel 1-d arrays")
    return ids, d2


def check_sorted_candidates(cand_ids, cand_d2) -> None:
    """Raise unless candidates are strictly ordered by (distance, id)."""
    ids, d2 = _as_candidates(cand_ids, cand_d2)
    for i in range(1, ids.shape[0]):
        if (d2[i - 1], ids[i - 1]) >= (d2[i], ids[i]):
            raise ValueError(f"candidates out of (distance, id) order at {i}")


def robust_prune(vectors: np.ndarray, owner: int, cand_ids, cand_d2,
                 limit: int, alpha: float = 1.0,
                 counter: DistanceCounter | None = None,
                 prev_ids=None, prev_alpha: float | None = None):
    """Prune a sorted candidate list to at most `limit` diverse neighbors.

    cand_ids/cand_d2: candidates ascending by (squared distance, id),
    owner excluded. Returns (ids, d2) of the kept neighbors in kept
    order. Every evaluated candidate-candidate distance increments the
    counter; reuse skips are free.
    """
    ids, d2 = _as_candidates(cand_ids, cand_d2)
    if limit < 1:
        raise ValueError("limit must be positive")
    if alpha < 1.0:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if owner in ids:
        raise ValueError("owner present in its own candidate list")
    use_skip = prev_ids is not None and (prev_alpha is None or prev_alpha <= alpha)
    prev_sorted = (np.sort(np.ascontiguousarray(prev_ids, dtype=np.int32))
                   if use_skip else _kernels.EMPTY_I32)
    if counter is None:
        counter = DistanceCounter()
    out_ids = np.empty(min(limit, ids.shape[0]), dtype=np.int32)
    out_d2 = np.empty(out_ids.shape[0], dtype=np.float32)
    if ids.shape[0] == 0:
        return out_ids, out_d2
    kept = _kernels.prune_kernel(
        vectors, ids, d2, limit, float(alpha), prev_sorted, use_skip,
        counter.cells, 0, 1,
        _kernels.EMPTY_I64, _kernels.NO_POS, False,
        out_ids, out_d2)
    return out_ids[:kept], out_d2[:kept]


def check_diversity(vectors: np.ndarray, owner: int, kept_ids, kept_d2,
                    alpha: float) -> None:
    """Verify the pruning postcondition on a kept list; raises on violation.

    For every later entry v and earlier entry w:
    alpha^2 * d2(v, w) >= d2(owner, v).
    """
    ids = np.asarray(kept_ids)
    d2 = np.asarray(kept_d2, dtype=np.float64)
    a2 = float(alpha) ** 2
    for i in range(1, ids.shape[0]):
        v = int(ids[i])
        for j in range(i):
            w = int(ids[j])
            dvw = float(_kernels.sq_vec_vec(vectors[v], vectors[w]))
            if a2 * dvw < d2[i]:
                raise AssertionError(
                    f"diversity violated: pair ({v}, {w}) under owner {owner}")
