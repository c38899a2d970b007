"""Proximity-graph ANN indexes with batched construction and tuning.

Three index families (HNSW, Vamana, NSG) share one search/prune core so
that a batch of parameter settings can be built in a single pass over the
data, reusing distance evaluations across graphs. A multi-objective
Bayesian tuner searches the construction-parameter space for the
recall/throughput frontier.
"""

from __future__ import annotations

import json
from importlib import resources

from .build import (BatchBuildResult, BuildReport, HnswParams, NsgParams,
                    SeedStreams, VamanaParams, assign_layer, build_batch,
                    build_initial_knng, build_multi_hnsw, build_multi_nsg,
                    build_multi_vamana, build_one, coerce_params,
                    ensure_connectivity, nearest_to_centroid)
from .data import (DatasetFormatError, DistanceCounter, GroundTruth,
                   VectorSet, brute_force_knn, euclidean, gen_synthetic,
                   load_fvecs, load_ivecs, recall_at_k, write_fvecs,
                   write_ivecs)
from .estimators import (ConstructionTuner, HnswIndex, NsgIndex, VamanaIndex,
                         make_index)
from .evaluate import default_ef_grid, eval_graph, repetition_report
from .graph import (DistanceCache, LayerAdjacency, ProximityGraph,
                    SearchScratch, beam_search, graphs_equal,
                    neighbor_list_overlap, search_graph)
from .pruning import robust_prune
from .tuning import (GpSurrogate, Observation, ParamDim, ParamSpace,
                     TunerState, balanced_member, batch_ehvi,
                     benchmark_objectives, default_space, head_to_head,
                     hypervolume_2d, normalize, pareto_front,
                     random_search_batch, recommend_batch, run_benchmark,
                     run_tuning_loop, tune, tuning_report)

__version__ = "0.1.0"

SCHEMA_NAMES = ("build_report", "multi_build_report", "eval_report",
                "tune_report", "repetition_report", "tune_log_line")


def load_schema(name: str) -> dict:
    """Return one of the bundled report JSON schemas by name."""
    if name not in SCHEMA_NAMES:
        raise ValueError(f"unknown schema {name!r}; choose from {SCHEMA_NAMES}")
    path = resources.files("graphtune") / "schemas" / f"{name}.json"
    return json.loads(path.read_text())


__all__ = [
    "BatchBuildResult", "BuildReport", "ConstructionTuner", "DatasetFormatError",
    "DistanceCache", "DistanceCounter", "GpSurrogate", "GroundTruth",
    "HnswIndex", "HnswParams", "LayerAdjacency", "NsgIndex", "NsgParams",
    "Observation", "ParamDim", "ParamSpace", "ProximityGraph", "SCHEMA_NAMES",
    "SearchScratch", "SeedStreams", "TunerState", "VamanaIndex",
    "VamanaParams", "VectorSet", "assign_layer", "balanced_member",
    "batch_ehvi", "beam_search", "benchmark_objectives", "brute_force_knn",
    "build_batch", "build_initial_knng", "build_multi_hnsw", "build_multi_nsg",
    "build_multi_vamana", "build_one", "coerce_params", "default_ef_grid",
    "default_space", "ensure_connectivity", "euclidean", "eval_graph",
    "gen_synthetic", "graphs_equal", "head_to_head", "hypervolume_2d",
    "load_fvecs", "load_ivecs", "load_schema", "make_index",
    "nearest_to_centroid", "neighbor_list_overlap", "normalize",
    "pareto_front", "random_search_batch", "recall_at_k", "recommend_batch",
    "repetition_report", "robust_prune", "run_benchmark", "run_tuning_loop",
    "search_graph", "tune", "tuning_report", "write_fvecs", "write_ivecs",
]
