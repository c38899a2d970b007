"""Jitted numeric kernels: squared distances, beam search, neighbor pruning.

Everything here works on squared float32 distances; callers take square
roots at API boundaries. Comparisons use (squared distance, id) lexical
order so ties resolve by ascending id everywhere.

Counter arrays are int64 with shape (rows, 3): one row per graph under
construction, one column per build phase. Plain searches pass a (1, 3)
array and column 0. Cache hits never touch the counter.

Optional pair recording appends canonical `min * n + max` codes to an
int64 buffer so callers can materialize exact evaluated-pair sets; the
write position keeps advancing past the buffer end, which lets callers
detect truncation.
"""

from __future__ import annotations

import numpy as np
from numba import njit

PHASE_SEARCH = 0
PHASE_PRUNE = 1
PHASE_CONNECT = 2

EMPTY_I32 = np.empty(0, dtype=np.int32)
EMPTY_I64 = np.empty(0, dtype=np.int64)
EMPTY_F32 = np.empty(0, dtype=np.float32)
NO_POS = np.zeros(1, dtype=np.int64)


@njit(cache=True, inline="always")
def _sq_vec_row(q, vectors, v):
    d = vectors.shape[1]
    if d > 256:
        acc64 = 0.0
        for t in range(d):
            diff = np.float64(q[t]) - np.float64(vectors[v, t])
            acc64 += diff * diff
        return np.float32(acc64)
    acc = np.float32(0.0)
    for t in range(d):
        diff = q[t] - vectors[v, t]
        acc += diff * diff
    return acc


@njit(cache=True, inline="always")
def _sq_rows(vectors, a, b):
    d = vectors.shape[1]
    if d > 256:
        acc64 = 0.0
        for t in range(d):
            diff = np.float64(vectors[a, t]) - np.float64(vectors[b, t])
            acc64 += diff * diff
        return np.float32(acc64)
    acc = np.float32(0.0)
    for t in range(d):
        diff = vectors[a, t] - vectors[b, t]
        acc += diff * diff
    return acc


@njit(cache=True)
def sq_vec_vec(a, b):
    d = a.shape[0]
    if d > 256:
        acc64 = 0.0
        for t in range(d):
            diff = np.float64(a[t]) - np.float64(b[t])
            acc64 += diff * diff
        return np.float32(acc64)
    acc = np.float32(0.0)
    for t in range(d):
        diff = a[t] - b[t]
        acc += diff * diff
    return acc


@njit(cache=True, inline="always")
def _record_pair(pairs, ppos, a, b, n):
    p = ppos[0]
    if p < pairs.shape[0]:
        if a < b:
            pairs[p] = np.int64(a) * np.int64(n) + np.int64(b)
        else:
            pairs[p] = np.int64(b) * np.int64(n) + np.int64(a)
    ppos[0] = p + 1


@njit(cache=True, inline="always")
def _in_sorted(arr, x):
    lo = 0
    hi = arr.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo < arr.shape[0] and arr[lo] == x


@njit(cache=True)
def search_layer(vectors, adj, deg, qvec, ef, entry,
                 visited, vtag, cache_val, cache_epoch, ctag, use_cache,
                 counters, crow, ccol,
                 pool_ids, pool_d2, pool_exp,
                 pairs, ppos, record, source):
    """Greedy beam search over one adjacency layer.

    The pool holds at most `ef` (squared distance, id) entries sorted
    ascending; the first unexpanded entry is expanded until none remain.
    Returns the number of entries left in the pool.
    """
    n = vectors.shape[0]
    visited[entry] = vtag
    if use_cache and cache_epoch[entry] == ctag:
        d2 = cache_val[entry]
    else:
        d2 = _sq_vec_row(qvec, vectors, entry)
        counters[crow, ccol] += 1
        if record:
            _record_pair(pairs, ppos, source, entry, n)
        if use_cache:
            cache_val[entry] = d2
            cache_epoch[entry] = ctag
    pool_ids[0] = entry
    pool_d2[0] = d2
    pool_exp[0] = False
    size = 1
    while True:
        cur = -1
        for t in range(size):
            if not pool_exp[t]:
                cur = t
                break
        if cur < 0:
            break
        pool_exp[cur] = True
        u = pool_ids[cur]
        for j in range(deg[u]):
            v = adj[u, j]
            if visited[v] == vtag:
                continue
            visited[v] = vtag
            if use_cache and cache_epoch[v] == ctag:
                dv = cache_val[v]
            else:
                dv = _sq_vec_row(qvec, vectors, v)
                counters[crow, ccol] += 1
                if record:
                    _record_pair(pairs, ppos, source, v, n)
                if use_cache:
                    cache_val[v] = dv
                    cache_epoch[v] = ctag
            if size == ef:
                wd = pool_d2[ef - 1]
                if dv > wd or (dv == wd and v > pool_ids[ef - 1]):
                    continue
            lo = 0
            hi = size
            while lo < hi:
                mid = (lo + hi) >> 1
                md = pool_d2[mid]
                if md < dv or (md == dv and pool_ids[mid] < v):
                    lo = mid + 1
                else:
                    hi = mid
            end = size if size < ef else ef - 1
            for t in range(end, lo, -1):
                pool_ids[t] = pool_ids[t - 1]
                pool_d2[t] = pool_d2[t - 1]
                pool_exp[t] = pool_exp[t - 1]
            pool_ids[lo] = v
            pool_d2[lo] = dv
            pool_exp[lo] = False
            if size < ef:
                size += 1
    return size


@njit(cache=True)
def prune_kernel(vectors, cand_ids, cand_d2, limit, alpha,
                 prev_sorted, use_skip,
                 counters, crow, ccol,
                 pairs, ppos, record,
                 out_ids, out_d2):
    """Relative-neighborhood style pruning of an ascending candidate list.

    A candidate v survives iff no already-kept w has
    alpha^2 * d2(v, w) < d2(owner, v). When `use_skip` is set, the
    dominance check is skipped for pairs where both endpoints survived
    the caller's previous prune of the same owner (sound as long as the
    previous alpha was <= alpha, which the caller enforces).
    """
    n = vectors.shape[0]
    kept = 0
    a2 = alpha * alpha
    for ci in range(cand_ids.shape[0]):
        v = cand_ids[ci]
        dv = np.float64(cand_d2[ci])
        v_in_prev = use_skip and _in_sorted(prev_sorted, v)
        dominated = False
        for ki in range(kept):
            w = out_ids[ki]
            if v_in_prev and _in_sorted(prev_sorted, w):
                continue
            d2vw = _sq_rows(vectors, v, w)
            counters[crow, ccol] += 1
            if record:
                _record_pair(pairs, ppos, v, w, n)
            if a2 * np.float64(d2vw) < dv:
                dominated = True
                break
        if not dominated:
            out_ids[kept] = v
            out_d2[kept] = cand_d2[ci]
            kept += 1
            if kept >= limit:
                break
    return kept


@njit(cache=True)
def reverse_prune_kernel(vectors, owner, ids, count, limit, alpha,
                         counters, crow, ccol,
                         pairs, ppos, record,
                         work_ids, work_d2, out_ids, out_d2):
    """Re-prune an overfull neighbor list from scratch.

    Computes owner->candidate distances (counted), sorts by (d2, id) and
    runs a plain prune with no reuse. Used when reverse-edge insertion
    pushes a list past its cap.
    """
    n = vectors.shape[0]
    for i in range(count):
        v = ids[i]
        work_ids[i] = v
        work_d2[i] = _sq_rows(vectors, owner, v)
        counters[crow, ccol] += 1
        if record:
            _record_pair(pairs, ppos, owner, v, n)
    for i in range(1, count):
        di = work_d2[i]
        vi = work_ids[i]
        j = i - 1
        while j >= 0 and (work_d2[j] > di or (work_d2[j] == di and work_ids[j] > vi)):
            work_d2[j + 1] = work_d2[j]
            work_ids[j + 1] = work_ids[j]
            j -= 1
        work_d2[j + 1] = di
        work_ids[j + 1] = vi
    return prune_kernel(vectors, work_ids[:count], work_d2[:count], limit, alpha,
                        EMPTY_I32, False, counters, crow, ccol,
                        pairs, ppos, record, out_ids, out_d2)


@njit(cache=True)
def append_if_absent(adj, deg, v, u):
    """Append u to v's list unless already present; returns new degree or -1."""
    dv = deg[v]
    for j in range(dv):
        if adj[v, j] == u:
            return -1
    adj[v, dv] = u
    deg[v] = dv + 1
    return dv + 1


@njit(cache=True)
def reverse_insert_kernel(vectors, adj, deg, u, kept_ids, cap, alpha,
                          counters, crow, ccol,
                          pairs, ppos, record,
                          work_ids, work_d2, out_ids, out_d2):
    """Insert u into each kept neighbor's list, re-pruning overflow."""
    for idx in range(kept_ids.shape[0]):
        v = kept_ids[idx]
        dv = deg[v]
        present = False
        for j in range(dv):
            if adj[v, j] == u:
                present = True
                break
        if present:
            continue
        adj[v, dv] = u
        deg[v] = dv + 1
        if deg[v] > cap:
            count = deg[v]
            ids = adj[v, :count].copy()
            kept = reverse_prune_kernel(vectors, v, ids, count, cap, alpha,
                                        counters, crow, ccol,
                                        pairs, ppos, record,
                                        work_ids, work_d2, out_ids, out_d2)
            for j in range(kept):
                adj[v, j] = out_ids[j]
            for j in range(kept, count):
                adj[v, j] = -1
            deg[v] = kept


@njit(cache=True)
def init_knn_lists(vectors, knn_ids, knn_d2, knn_new,
                   counters, crow, ccol, pairs, ppos, record):
    """Fill distances for preset candidate ids and sort rows by (d2, id)."""
    n, K = knn_ids.shape
    for u in range(n):
        for j in range(K):
            d2 = _sq_rows(vectors, u, knn_ids[u, j])
            counters[crow, ccol] += 1
            if record:
                _record_pair(pairs, ppos, u, knn_ids[u, j], n)
            knn_d2[u, j] = d2
        for i in range(1, K):
            di = knn_d2[u, i]
            vi = knn_ids[u, i]
            j = i - 1
            while j >= 0 and (knn_d2[u, j] > di or
                              (knn_d2[u, j] == di and knn_ids[u, j] > vi)):
                knn_d2[u, j + 1] = knn_d2[u, j]
                knn_ids[u, j + 1] = knn_ids[u, j]
                j -= 1
            knn_d2[u, j + 1] = di
            knn_ids[u, j + 1] = vi
        for j in range(K):
            knn_new[u, j] = 1


@njit(cache=True)
def _knn_try_insert(knn_ids, knn_d2, knn_new, a, b, d2):
    if a == b:
        return 0
    K = knn_ids.shape[1]
    wd = knn_d2[a, K - 1]
    wi = knn_ids[a, K - 1]
    if d2 > wd or (d2 == wd and b >= wi):
        return 0
    for j in range(K):
        if knn_ids[a, j] == b:
            return 0
    j = K - 1
    while j > 0 and (knn_d2[a, j - 1] > d2 or (knn_d2[a, j - 1] == d2 and knn_ids[a, j - 1] > b)):
        knn_d2[a, j] = knn_d2[a, j - 1]
        knn_ids[a, j] = knn_ids[a, j - 1]
        knn_new[a, j] = knn_new[a, j - 1]
        j -= 1
    knn_d2[a, j] = d2
    knn_ids[a, j] = b
    knn_new[a, j] = 1
    return 1


@njit(cache=True)
def nn_descent_round(vectors, knn_ids, knn_d2, knn_new,
                     counters, crow, ccol, pairs, ppos, record):
    """One full local-join round; returns the number of list updates.

    Deterministic: nodes processed in ascending id, candidate lists kept
    sorted by (d2, id), no sampling (join rate 1).
    """
    n, K = knn_ids.shape
    old_flags = knn_new.copy()
    knn_new[:] = 0
    rev_cap = 2 * K
    rev_ids = np.empty((n, rev_cap), dtype=np.int32)
    rev_new = np.empty((n, rev_cap), dtype=np.uint8)
    rev_cnt = np.zeros(n, dtype=np.int32)
    for u in range(n):
        for j in range(K):
            v = knn_ids[u, j]
            c = rev_cnt[v]
            if c < rev_cap:
                rev_ids[v, c] = u
                rev_new[v, c] = old_flags[u, j]
                rev_cnt[v] = c + 1
    updates = 0
    cand = np.empty(K + rev_cap, dtype=np.int32)
    flag = np.empty(K + rev_cap, dtype=np.uint8)
    for u in range(n):
        cn = 0
        for j in range(K):
            cand[cn] = knn_ids[u, j]
            flag[cn] = old_flags[u, j]
            cn += 1
        for j in range(rev_cnt[u]):
            w = rev_ids[u, j]
            dup = False
            for t in range(cn):
                if cand[t] == w:
                    dup = True
                    break
            if not dup:
                cand[cn] = w
                flag[cn] = rev_new[u, j]
                cn += 1
        for i in range(cn):
            if flag[i] == 0:
                continue
            a = cand[i]
            for j in range(cn):
                if j <= i and flag[j] == 1:
                    continue
                b = cand[j]
                if a == b:
                    continue
                d2 = _sq_rows(vectors, a, b)
                counters[crow, ccol] += 1
                if record:
                    _record_pair(pairs, ppos, a, b, n)
                updates += _knn_try_insert(knn_ids, knn_d2, knn_new, a, b, d2)
                updates += _knn_try_insert(knn_ids, knn_d2, knn_new, b, a, d2)
    return updates


@njit(cache=True)
def hv_sweep(qs, rs, r0, r1):
    """Hypervolume dominated by an arbitrary 2-d point set above (r0, r1).

    Sweeps points in descending first coordinate keeping the running best
    second coordinate; dominated or out-of-region points contribute 0.
    """
    order = np.argsort(qs)
    hv = 0.0
    best = r1
    for t in range(order.shape[0] - 1, -1, -1):
        i = order[t]
        q = qs[i]
        r = rs[i]
        if q <= r0 or r <= best:
            continue
        hv += (q - r0) * (r - best)
        best = r
    return hv


@njit(cache=True)
def ehvi_mc(front_q, front_r, samp_q, samp_r, r0, r1):
    """Monte-Carlo batch hypervolume improvement.

    samp_q/samp_r have shape (m, S): joint objective samples of m
    candidates. Returns the mean over samples of
    HV(front + sample points) - HV(front).
    """
    F = front_q.shape[0]
    m, S = samp_q.shape
    qs = np.empty(F + m, dtype=np.float64)
    rs = np.empty(F + m, dtype=np.float64)
    for i in range(F):
        qs[i] = front_q[i]
        rs[i] = front_r[i]
    base = hv_sweep(front_q, front_r, r0, r1)
    acc = 0.0
    for s in range(S):
        for j in range(m):
            qs[F + j] = samp_q[j, s]
            rs[F + j] = samp_r[j, s]
        acc += hv_sweep(qs, rs, r0, r1) - base
    return acc / S
