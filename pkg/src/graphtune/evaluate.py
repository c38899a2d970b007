"""Search-quality evaluation and batch-vs-sequential redundancy reports."""

from __future__ import annotations

import time

import numpy as np

from .build import build_batch, coerce_params
from .data import DistanceCounter, GroundTruth, recall_at_k
from .graph import ProximityGraph, SearchScratch, graphs_equal, search_graph
from .validation import check_queries, check_vectors

RECALL_TARGETS = (0.9, 0.95, 0.99)
_EF_GRID_BASE = (20, 40, 80, 120, 160, 200, 300, 400)


def default_ef_grid(k: int) -> list[int]:
    """The default ef sweep: k plus the standard ladder, floored at k."""
    return sorted({k, *[e for e in _EF_GRID_BASE if e >= k]})


def eval_graph(graph: ProximityGraph, data, queries, truth, k: int,
               ef_grid=None, targets=RECALL_TARGETS) -> dict:
    """Sweep ef over a query set; report recall, QPS and distance cost.

    QPS comes from a single-threaded timed loop preceded by an untimed
    warm-up pass. Recall columns are deterministic for a fixed graph;
    the summary reports, per target, the smallest ef whose mean recall
    reaches it.
    """
    X = check_vectors(data)
    Q = check_queries(queries, graph.dim)
    if isinstance(truth, GroundTruth):
        truth_ids = truth.ids
    else:
        truth_ids = np.asarray(truth)
    if truth_ids.ndim != 2 or truth_ids.shape[0] != Q.shape[0]:
        raise ValueError("truth ids must be (n_queries, >= k)")
    if truth_ids.shape[1] < k:
        raise ValueError(f"truth holds {truth_ids.shape[1]} ids < k={k}")
    if ef_grid is None:
        ef_grid = default_ef_grid(k)
    ef_grid = [int(e) for e in ef_grid]
    if not ef_grid:
        raise ValueError("ef_grid must not be empty")
    if sorted(ef_grid) != ef_grid:
        raise ValueError("ef_grid must be ascending")
    if ef_grid[0] < k:
        raise ValueError(f"smallest ef {ef_grid[0]} < k={k}")

    scratch = SearchScratch(X.shape[0], max_ef=max(ef_grid))
    warm = DistanceCounter()
    for q in Q:
        search_graph(graph, X, q, k, ef_grid[0], counter=warm, scratch=scratch)

    rows = []
    for ef in ef_grid:
        counter = DistanceCounter()
        results = np.empty((Q.shape[0], k), dtype=np.int32)
        t0 = time.perf_counter()
        for qi in range(Q.shape[0]):
            ids, _ = search_graph(graph, X, Q[qi], k, ef,
                                  counter=counter, scratch=scratch)
            results[qi, : ids.shape[0]] = ids
            if ids.shape[0] < k:
                results[qi, ids.shape[0]:] = -1
        wall = time.perf_counter() - t0
        rec = float(np.mean([recall_at_k(results[qi], truth_ids[qi], k)
                             for qi in range(Q.shape[0])]))
        rows.append({
            "ef": ef,
            "recall": rec,
            "qps": Q.shape[0] / wall if wall > 0 else float("inf"),
            "dist_per_query": counter.count / Q.shape[0],
            "wall_ms": wall * 1000.0,
        })
    summary = {}
    for t in targets:
        hit = next((r for r in rows if r["recall"] >= t), None)
        summary[f"{t:g}"] = (
            {"ef": hit["ef"], "qps": hit["qps"], "recall": hit["recall"]}
            if hit else None)
    return {"k": k, "n_queries": int(Q.shape[0]), "ef_rows": rows,
            "summary": summary}


def _phase_totals(reports) -> dict:
    out = {"search": 0, "prune": 0, "connect": 0, "total": 0}
    for r in reports:
        out["search"] += r.dist_search
        out["prune"] += r.dist_prune
        out["connect"] += r.dist_connect
        out["total"] += r.dist_total
    return out


def repetition_report(data, kind: str, params_list, seed: int = 0,
                      pair_mode: str = "auto", pair_cap: int = 16_000_000,
                      **build_kwargs) -> dict:
    """Quantify shared work: batch build vs independent single builds.

    Builds the batch once with shared state and once as m standalone
    builds. RDC is the batch/sequential distance-count ratio, overall
    and per phase. With `pair_mode` on (auto for n <= 2000), each single
    build also materializes the exact set of evaluated vector pairs per
    phase, and the report includes the redundant-share ratio
    (sum |S_i| - |union S_i|) / sum |S_i| over the single builds.
    Centroid scans and connectivity-repair scans are counted in RDC but
    excluded from pair sets (they are not kernel pair evaluations).
    """
    X = check_vectors(data)
    plist = [coerce_params(kind, p) for p in params_list]
    if len(plist) < 2:
        raise ValueError("repetition report needs m >= 2 parameter sets")
    if pair_mode not in ("auto", "on", "off"):
        raise ValueError(f"unknown pair_mode {pair_mode!r}")
    collect = pair_mode == "on" or (pair_mode == "auto" and X.shape[0] <= 2000)
    if collect and X.shape[0] > 2000:
        raise ValueError("exact pair mode supports n <= 2000 only")

    batch = build_batch(X, kind, plist, seed, **build_kwargs)
    singles = [build_batch(X, kind, [p], seed, collect_pairs=collect,
                           pair_cap=pair_cap, **build_kwargs) for p in plist]

    equivalent = all(graphs_equal(batch.graphs[i], singles[i].graphs[0])
                     for i in range(len(plist)))
    b = _phase_totals(batch.reports)
    s = _phase_totals([sg.reports[0] for sg in singles])
    per_phase = {}
    for ph in ("search", "prune", "connect"):
        per_phase[ph] = {
            "batch": b[ph],
            "sequential": s[ph],
            "rdc": b[ph] / s[ph] if s[ph] else 1.0,
        }
    report = {
        "kind": kind,
        "m": len(plist),
        "n": int(X.shape[0]),
        "seed": int(seed),
        "params": [batch.reports[i].params for i in range(len(plist))],
        "dist_batch_total": b["total"],
        "dist_sequential_total": s["total"],
        "rdc": b["total"] / s["total"] if s["total"] else 1.0,
        "per_phase": per_phase,
        "equivalent": equivalent,
    }
    if collect:
        shared = {}
        for ph in ("search", "prune", "connect"):
            sets = [sg.pair_sets[0][ph] for sg in singles]
            total = int(sum(a.shape[0] for a in sets))
            union = int(np.unique(np.concatenate(sets)).shape[0]) if total else 0
            shared[ph] = {
                "sum_individual": total,
                "union": union,
                "shared_ratio": (total - union) / total if total else 0.0,
            }
        report["pair_sets"] = shared
    else:
        report["pair_sets"] = None
    return report
