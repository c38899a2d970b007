"""Acceptance gate: ten criteria, one pass/fail line each.

Each test enforces the stated tolerance and wall-time budget. A printed
line `ACCEPTANCE <n> <name>: PASS|FAIL (<seconds>)` accompanies every
criterion (visible with -s or on failure); the per-test PASSED/FAILED
status in `pytest -v` mirrors it.
"""

import time

import numpy as np
import pytest

from graphtune.build import build_batch, build_one
from graphtune.data import (DistanceCounter, GroundTruth, gen_synthetic)
from graphtune.evaluate import eval_graph
from graphtune.graph import (DistanceCache, beam_search, graphs_equal)
from graphtune.pruning import robust_prune
from graphtune.tuning import (Observation, head_to_head, hypervolume_2d,
                              pareto_front, tune)


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    """Compile the numba kernels once, outside any criterion's budget."""
    X = gen_synthetic(64, 4, seed=0).vectors
    for kind, p in (("hnsw", {"M": 4, "efc": 8}),
                    ("vamana", {"L": 8, "M": 4, "alpha": 1.1}),
                    ("nsg", {"K": 4, "L": 8, "M": 4})):
        build_one(X, kind, p, seed=0)
    hypervolume_2d([(1.0, 1.0)])


def _report(num, name, ok, elapsed, budget, detail=""):
    status = "PASS" if ok else "FAIL"
    tail = f" [{detail}]" if detail else ""
    print(f"ACCEPTANCE {num} {name}: {status} "
          f"({elapsed:.1f}s of {budget:.0f}s budget){tail}", flush=True)
    assert ok, f"criterion {num} ({name}) failed{tail}"
    assert elapsed < budget, \
        f"criterion {num} exceeded budget: {elapsed:.1f}s >= {budget}s"


def _rand_params(kind, rng):
    if kind == "hnsw":
        m = int(rng.integers(4, 13))
        return {"M": m, "efc": int(rng.integers(m, 61))}
    if kind == "vamana":
        return {"L": int(rng.integers(20, 49)),
                "M": int(rng.integers(8, 25)),
                "alpha": float(rng.choice([1.0, 1.2, 1.4]))}
    return {"K": int(rng.integers(8, 21)), "L": int(rng.integers(20, 49)),
            "M": int(rng.integers(8, 25))}


def test_criterion_01_batch_build_equivalence():
    """20 randomized 2000-point trials per kind: batch == single, bytewise."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    failures = 0
    for kind in ("hnsw", "vamana", "nsg"):
        for trial in range(20):
            X = gen_synthetic(2000, 16, seed=int(rng.integers(1 << 30)),
                              kind="gaussian").vectors
            plist = [_rand_params(kind, rng) for _ in range(2)]
            seed = int(rng.integers(1 << 30))
            batch = build_batch(X, kind, plist, seed)
            for i, p in enumerate(plist):
                single = build_batch(X, kind, [p], seed)
                if not graphs_equal(batch.graphs[i], single.graphs[0]):
                    failures += 1
    elapsed = time.perf_counter() - t0
    _report(1, "batch-build equivalence", failures == 0, elapsed, 120,
            f"{failures} mismatches in 60 trials x 2 graphs")


def _prune_instance(rng, n_cand=None):
    n = int(rng.integers(4, 65)) if n_cand is None else n_cand
    pts = rng.standard_normal((n + 1, 2)).astype(np.float32)
    diff = pts[1:] - pts[0]
    d2 = np.einsum("ij,ij->i", diff, diff).astype(np.float32)
    ids = np.arange(1, n + 1, dtype=np.int32)
    order = np.lexsort((ids, d2))
    return pts, ids[order], d2[order]


def test_criterion_02_prefix_monotonicity():
    """500 instances: kept set over first R candidates is a subset of the
    kept set over any longer prefix."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(500):
        pts, cids, cd2 = _prune_instance(rng)
        n = cids.shape[0]
        alpha = float(rng.choice([1.0, 1.2]))
        r1 = int(rng.integers(1, n + 1))
        r2 = int(rng.integers(r1, n + 1))
        a, _ = robust_prune(pts, 0, cids[:r1], cd2[:r1], limit=n,
                            alpha=alpha)
        b, _ = robust_prune(pts, 0, cids[:r2], cd2[:r2], limit=n,
                            alpha=alpha)
        if not set(a).issubset(set(b)):
            bad += 1
    elapsed = time.perf_counter() - t0
    _report(2, "prune prefix monotonicity", bad == 0, elapsed, 10,
            f"{bad}/500 subset violations")


def test_criterion_03_limit_monotonicity():
    """500 instances: raising the neighbor budget only adds neighbors."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    bad = 0
    for _ in range(500):
        pts, cids, cd2 = _prune_instance(rng)
        n = cids.shape[0]
        alpha = float(rng.choice([1.0, 1.2]))
        m1 = int(rng.integers(1, n + 1))
        m2 = int(rng.integers(m1, n + 1))
        a, _ = robust_prune(pts, 0, cids, cd2, limit=m1, alpha=alpha)
        b, _ = robust_prune(pts, 0, cids, cd2, limit=m2, alpha=alpha)
        if not set(a).issubset(set(b)):
            bad += 1
    elapsed = time.perf_counter() - t0
    _report(3, "prune limit monotonicity", bad == 0, elapsed, 10,
            f"{bad}/500 subset violations")


def test_criterion_04_cache_transparency():
    """1000 (graph, query) pairs: cached search output is bit-identical to
    the uncached search, cold or warm."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    X = gen_synthetic(1000, 12, seed=40, kind="gaussian").vectors
    graphs = []
    for kind in ("hnsw", "vamana", "nsg"):
        for seed in (0, 1):
            g, _ = build_one(X, kind, _rand_params(kind, rng), seed=seed)
            graphs.append(g)
    cache = DistanceCache(1000)
    bad = 0
    for trial in range(1000):
        g = graphs[int(rng.integers(len(graphs)))]
        q = rng.standard_normal(12).astype(np.float32)
        ef = int(rng.integers(10, 80))
        plain_ids, plain_d = beam_search(X, g.layers[0], q, 10, ef,
                                         g.entry_point)
        cache.advance()
        if trial % 2:  # warm the cache on a different graph first
            g2 = graphs[int(rng.integers(len(graphs)))]
            beam_search(X, g2.layers[0], q, 10, ef, g2.entry_point,
                        cache=cache)
        got_ids, got_d = beam_search(X, g.layers[0], q, 10, ef,
                                     g.entry_point, cache=cache)
        if not (np.array_equal(plain_ids, got_ids)
                and np.array_equal(plain_d, got_d)):
            bad += 1
    elapsed = time.perf_counter() - t0
    _report(4, "cache transparency", bad == 0, elapsed, 30,
            f"{bad}/1000 mismatches")


def test_criterion_05_reuse_prune_equivalence():
    """1000 consecutive-prune instances with ascending alpha: identical
    kept ids, never more candidate-pair evaluations."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    bad_ids, bad_count = 0, 0
    for _ in range(1000):
        pts, cids, cd2 = _prune_instance(rng)
        alphas = sorted(rng.choice([1.0, 1.1, 1.2, 1.4], size=2))
        m = int(rng.choice([4, 8]))
        prev, _ = robust_prune(pts, 0, cids, cd2, limit=m, alpha=alphas[0])
        c_plain = DistanceCounter()
        plain, _ = robust_prune(pts, 0, cids, cd2, limit=m, alpha=alphas[1],
                                counter=c_plain)
        c_reuse = DistanceCounter()
        reused, _ = robust_prune(pts, 0, cids, cd2, limit=m,
                                 alpha=alphas[1], counter=c_reuse,
                                 prev_ids=prev, prev_alpha=alphas[0])
        if not np.array_equal(plain, reused):
            bad_ids += 1
        if c_reuse.count > c_plain.count:
            bad_count += 1
    elapsed = time.perf_counter() - t0
    _report(5, "reuse-prune equivalence", bad_ids == 0 and bad_count == 0,
            elapsed, 30, f"{bad_ids} id mismatches, {bad_count} "
            f"counter violations in 1000 instances")


def test_criterion_06_distance_reduction():
    """HNSW batch of 10 neighboring configs on 10k gaussian points: batch
    distance total <= 0.75x sequential and search-phase ratio <= 0.7."""
    t0 = time.perf_counter()
    X = gen_synthetic(10_000, 16, seed=60, kind="gaussian").vectors
    plist = [{"M": int(round(m)), "efc": int(round(e))}
             for m, e in zip(np.linspace(8, 16, 10),
                             np.linspace(60, 100, 10))]
    batch = build_batch(X, "hnsw", plist, seed=0)
    seq_total, seq_search = 0, 0
    for p in plist:
        single = build_batch(X, "hnsw", [p], seed=0)
        seq_total += single.dist_total
        seq_search += single.reports[0].dist_search
    b_search = sum(r.dist_search for r in batch.reports)
    rdc = batch.dist_total / seq_total
    rdc_search = b_search / seq_search
    elapsed = time.perf_counter() - t0
    ok = rdc <= 0.75 and rdc_search <= 0.7
    _report(6, "batch distance reduction", ok, elapsed, 600,
            f"total RDC {rdc:.3f} (<=0.75), search RDC {rdc_search:.3f} "
            f"(<=0.7)")


def test_criterion_07_search_quality_floor():
    """HNSW(M=16, efc=200) and Vamana(L=128, M=32, a=1.2) on 10k points
    reach mean recall@10 >= 0.95 at some ef <= 400."""
    t0 = time.perf_counter()
    X = gen_synthetic(10_000, 16, seed=70, kind="gaussian").vectors
    Q = gen_synthetic(100, 16, seed=71, kind="gaussian").vectors
    gt = GroundTruth.compute(X, Q, kstar=10, threads=2)
    results = {}
    for kind, params in (("hnsw", {"M": 16, "efc": 200}),
                         ("vamana", {"L": 128, "M": 32, "alpha": 1.2})):
        g, _ = build_one(X, kind, params, seed=0)
        rep = eval_graph(g, X, Q, gt, 10, [50, 100, 200, 400])
        results[kind] = max(r["recall"] for r in rep["ef_rows"])
    elapsed = time.perf_counter() - t0
    ok = all(v >= 0.95 for v in results.values())
    _report(7, "search quality floor", ok, elapsed, 300,
            ", ".join(f"{k} best recall {v:.3f}" for k, v in results.items()))


def test_criterion_08_tuner_head_to_head():
    """Batch-EHVI tuning beats random search on the synthetic benchmark in
    at least 2 of 3 seeds at a 50-evaluation budget."""
    t0 = time.perf_counter()
    rows = head_to_head(budget=50, m=5, seeds=(0, 1, 2))
    wins = sum(r["win"] for r in rows)
    elapsed = time.perf_counter() - t0
    _report(8, "tuner head-to-head", wins >= 2, elapsed, 300,
            f"{wins}/3 seeds won; "
            + ", ".join(f"s{r['seed']}: {r['mehvi_hv']:.1f} vs "
                        f"{r['random_hv']:.1f}" for r in rows))


def test_criterion_09_end_to_end_tuning():
    """Full vamana tuning, budget 30 / batch 10, on 10k points: 30
    observations, non-empty front, monotone hypervolume trace, estimation
    dominating the wall-time split."""
    t0 = time.perf_counter()
    X = gen_synthetic(10_000, 16, seed=90, kind="gaussian").vectors
    state, report = tune(X, "vamana", budget=30, m=10, seed=0,
                         recommender="mehvi", k=10, n_queries=100)
    trace = report["hv_trace"]
    checks = {
        "observations": report["n_observations"] == 30,
        "front": len(report["front"]) >= 1,
        "trace": all(b >= a - 1e-9 for a, b in zip(trace, trace[1:])),
        "estimation_share": report["cost"]["estimation_share"] > 0.5,
    }
    elapsed = time.perf_counter() - t0
    _report(9, "end-to-end tuning", all(checks.values()), elapsed, 1800,
            f"n={report['n_observations']}, front={len(report['front'])}, "
            f"share={report['cost']['estimation_share']:.3f}, "
            f"failed={[k for k, v in checks.items() if not v]}")


def test_criterion_10_oracle_checks():
    """hypervolume_2d vs 1e6-sample Monte-Carlo area on 50 fronts (+-0.01)
    and pareto_front vs a quadratic domination oracle on 200-point sets."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    hv_bad = 0
    for _ in range(50):
        pts = rng.random((int(rng.integers(1, 15)), 2)) + 0.05
        hi = pts.max(axis=0)
        s = rng.random((1_000_000, 2)) * hi
        dom = np.zeros(s.shape[0], dtype=bool)
        for q, r in pts:
            dom |= (s[:, 0] <= q) & (s[:, 1] <= r)
        mc = float(dom.mean() * hi[0] * hi[1])
        if abs(hypervolume_2d(pts, (0, 0)) - mc) > 0.01:
            hv_bad += 1
    front_bad = 0
    for _ in range(5):
        raw = rng.random((200, 2))
        obs = [Observation({}, np.zeros(1), float(q), float(r))
               for q, r in raw]
        got = pareto_front(obs)
        want = [a for i, a in enumerate(obs)
                if not any(j != i and b.qps >= a.qps and b.recall >= a.recall
                           and (b.qps > a.qps or b.recall > a.recall)
                           for j, b in enumerate(obs))]
        if got != want:
            front_bad += 1
    elapsed = time.perf_counter() - t0
    _report(10, "oracle checks", hv_bad == 0 and front_bad == 0, elapsed,
            60, f"{hv_bad}/50 hypervolume misses, {front_bad}/5 front "
            f"mismatches")
