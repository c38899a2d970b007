"""Command-line interface: data prep, builds, evaluation, tuning.

Exit codes: 0 success; 2 usage errors (bad flags, missing files,
malformed parameter JSON); 1 runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .build import build_batch, build_one
from .data import (DatasetFormatError, GroundTruth, brute_force_knn,
                   gen_synthetic, load_fvecs, write_fvecs)
from .evaluate import default_ef_grid, eval_graph, repetition_report
from .graph import GraphFormatError, ProximityGraph
from .tuning import tune


class UsageError(Exception):
    pass


def _load_dataset(path: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"dataset file not found: {path}")
    try:
        return load_fvecs(p).vectors
    except DatasetFormatError as e:
        raise UsageError(f"cannot read {path}: {e}") from e


def _load_params(args, expect_list: bool):
    if args.params and args.param_file:
        raise UsageError("pass --params or --param-file, not both")
    if args.param_file:
        p = Path(args.param_file)
        if not p.exists():
            raise UsageError(f"param file not found: {args.param_file}")
        text = p.read_text()
    elif args.params:
        text = args.params
    else:
        raise UsageError("missing --params or --param-file")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"malformed parameter JSON: {e}") from e
    if expect_list:
        if not isinstance(obj, list) or not all(isinstance(o, dict)
                                                for o in obj):
            raise UsageError("expected a JSON list of parameter objects")
    elif not isinstance(obj, dict):
        raise UsageError("expected a JSON parameter object")
    return obj


def _write_json(path: str | None, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _build_kwargs(args) -> dict:
    return {"knng_mode": args.knng_mode} if args.index == "nsg" else {}


def cmd_gen_data(args) -> int:
    ds = gen_synthetic(args.n, args.d, args.seed, kind=args.kind,
                       centers=args.centers)
    write_fvecs(args.out, ds.vectors)
    print(f"wrote {args.n} x {args.d} {args.kind} vectors to {args.out}")
    return 0


def cmd_ground_truth(args) -> int:
    X = _load_dataset(args.dataset)
    Q = _load_dataset(args.queries)
    gt = GroundTruth.compute(X, Q, kstar=args.k, threads=args.threads)
    gt.save(args.out)
    print(f"wrote ground truth ({Q.shape[0]} queries, k*={args.k}) "
          f"to {args.out}.ivecs/.fvecs")
    return 0


def cmd_build(args) -> int:
    X = _load_dataset(args.dataset)
    params = _load_params(args, expect_list=False)
    graph, report = build_one(X, args.index, params, args.seed,
                              **_build_kwargs(args))
    if args.out:
        graph.save(args.out)
    _write_json(args.report, report.to_dict())
    return 0


def cmd_build_multi(args) -> int:
    X = _load_dataset(args.dataset)
    params_list = _load_params(args, expect_list=True)
    res = build_batch(X, args.index, params_list, args.seed,
                      **_build_kwargs(args))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, g in enumerate(res.graphs):
        path = outdir / f"{args.index}_{i}.pgx"
        g.save(path)
        paths.append(str(path))
    _write_json(args.report,
                {"graphs": paths,
                 "reports": [r.to_dict() for r in res.reports]})
    return 0


def cmd_eval(args) -> int:
    X = _load_dataset(args.dataset)
    Q = _load_dataset(args.queries)
    gp = Path(args.graph)
    if not gp.exists():
        raise UsageError(f"graph file not found: {args.graph}")
    graph = ProximityGraph.load(gp)
    if args.truth:
        truth = GroundTruth.load(args.truth)
    else:
        ids = np.stack([brute_force_knn(X, q, args.k)[0] for q in Q])
        truth = ids
    grid = ([int(e) for e in args.ef_grid.split(",")] if args.ef_grid
            else default_ef_grid(args.k))
    report = eval_graph(graph, X, Q, truth, args.k, grid)
    _write_json(args.out, report)
    if args.csv:
        lines = ["ef,recall,qps,dist_per_query"]
        lines += [f'{r["ef"]},{r["recall"]},{r["qps"]},{r["dist_per_query"]}'
                  for r in report["ef_rows"]]
        Path(args.csv).write_text("\n".join(lines) + "\n")
    return 0


def cmd_tune(args) -> int:
    X = _load_dataset(args.dataset)
    queries = _load_dataset(args.queries) if args.queries else None
    _, report = tune(X, args.index, budget=args.budget, m=args.batch_size,
                     seed=args.seed, recommender=args.recommender, k=args.k,
                     target_recall=args.target_recall, queries=queries,
                     log_path=args.log, knng_mode=args.knng_mode)
    _write_json(args.out, report)
    return 0


def cmd_repetition_report(args) -> int:
    X = _load_dataset(args.dataset)
    params_list = _load_params(args, expect_list=True)
    report = repetition_report(X, args.index, params_list, args.seed,
                               pair_mode=args.pair_mode, **_build_kwargs(args))
    _write_json(args.out, report)
    return 0


def _add_index_arg(sp) -> None:
    sp.add_argument("--index", required=True,
                    choices=("hnsw", "vamana", "nsg"))
    sp.add_argument("--knng-mode", default="exact",
                    choices=("exact", "nn_descent"))


def _add_param_args(sp) -> None:
    sp.add_argument("--params", help="inline JSON parameters")
    sp.add_argument("--param-file", help="path to JSON parameters")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="graphtune",
        description="Build, evaluate and tune proximity-graph indexes.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen-data", help="write a synthetic fvecs dataset")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--kind", default="uniform",
                    choices=("uniform", "gaussian", "clustered"))
    sp.add_argument("--centers", type=int, default=8)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_gen_data)

    sp = sub.add_parser("ground-truth", help="exact k-NN for a query set")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--queries", required=True)
    sp.add_argument("--k", type=int, default=100)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--out", required=True, help="output path prefix")
    sp.set_defaults(fn=cmd_ground_truth)

    sp = sub.add_parser("build", help="build one index")
    sp.add_argument("--dataset", required=True)
    _add_index_arg(sp)
    _add_param_args(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="graph output path")
    sp.add_argument("--report", help="report JSON path (default stdout)")
    sp.set_defaults(fn=cmd_build)

    sp = sub.add_parser("build-multi", help="build a parameter batch")
    sp.add_argument("--dataset", required=True)
    _add_index_arg(sp)
    _add_param_args(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--report", help="report JSON path (default stdout)")
    sp.set_defaults(fn=cmd_build_multi)

    sp = sub.add_parser("eval", help="recall/QPS sweep for a built graph")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--queries", required=True)
    sp.add_argument("--graph", required=True)
    sp.add_argument("--truth", help="ground-truth path prefix")
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--ef-grid", help="comma-separated ascending ef values")
    sp.add_argument("--out", help="report JSON path (default stdout)")
    sp.add_argument("--csv", help="also write per-ef rows as CSV")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("tune", help="tune construction parameters")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--queries")
    _add_index_arg(sp)
    sp.add_argument("--budget", type=int, default=30)
    sp.add_argument("--batch-size", type=int, default=10)
    sp.add_argument("--recommender", default="mehvi",
                    choices=("mehvi", "random"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--target-recall", type=float, default=0.95)
    sp.add_argument("--log", help="JSONL observation log path")
    sp.add_argument("--out", help="report JSON path (default stdout)")
    sp.set_defaults(fn=cmd_tune)

    sp = sub.add_parser("repetition-report",
                        help="batch vs sequential redundancy report")
    sp.add_argument("--dataset", required=True)
    _add_index_arg(sp)
    _add_param_args(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--pair-mode", default="auto",
                    choices=("auto", "on", "off"))
    sp.add_argument("--out", help="report JSON path (default stdout)")
    sp.set_defaults(fn=cmd_repetition_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DatasetFormatError, GraphFormatError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
