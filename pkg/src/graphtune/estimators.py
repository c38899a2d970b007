"""Estimator-style front end: fit an index, query neighbors, tune params.

Thin wrappers over the functional core following the scikit-learn
conventions (constructor params, `fit`, trailing-underscore artifacts,
`get_params`/`set_params` via BaseEstimator).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .build import build_one
from .data import DistanceCounter
from .graph import SearchScratch, search_graph
from .tuning import default_space, tune
from .validation import check_positive_int, check_queries, check_vectors


class _GraphIndexBase(BaseEstimator):
    kind = ""

    def _build_params(self) -> dict:
        raise NotImplementedError

    def _build_kwargs(self) -> dict:
        return {}

    def fit(self, X, y=None):
        """Build the index over X; y is ignored (present for API parity)."""
        data = check_vectors(X, min_rows=2)
        self.X_ = data
        self.n_features_in_ = data.shape[1]
        self.graph_, self.report_ = build_one(
            data, self.kind, self._build_params(), self.seed,
            **self._build_kwargs())
        self._scratch = SearchScratch(data.shape[0])
        return self

    def _check_fitted(self):
        if not hasattr(self, "graph_"):
            raise NotFittedError("index is not fitted; call fit(X) first")

    def kneighbors(self, Q, k: int = 10, ef: int | None = None,
                   return_distance: bool = True):
        """k nearest neighbors for each query row.

        Returns (distances, indices) like sklearn's NearestNeighbors;
        `ef` defaults to max(ef_search, k).
        """
        self._check_fitted()
        Q = check_queries(Q, self.n_features_in_)
        k = check_positive_int(k, "k")
        ef = max(self.ef_search, k) if ef is None else max(int(ef), k)
        counter = DistanceCounter()
        n_q = Q.shape[0]
        ids = np.full((n_q, k), -1, dtype=np.int32)
        dists = np.full((n_q, k), np.inf, dtype=np.float32)
        for i in range(n_q):
            r_ids, r_d = search_graph(self.graph_, self.X_, Q[i], k, ef,
                                      counter=counter, scratch=self._scratch)
            ids[i, : r_ids.shape[0]] = r_ids
            dists[i, : r_d.shape[0]] = r_d
        self.last_query_distances_ = counter.count
        if return_distance:
            return dists, ids
        return ids


class HnswIndex(_GraphIndexBase):
    """Layered small-world index (geometric layer assignment)."""

    kind = "hnsw"

    def __init__(self, M: int = 16, efc: int = 200, ef_search: int = 64,
                 seed: int = 0, level_m: int = 16, double_base: bool = True):
        self.M = M
        self.efc = efc
        self.ef_search = ef_search
        self.seed = seed
        self.level_m = level_m
        self.double_base = double_base

    def _build_params(self) -> dict:
        return {"M": self.M, "efc": self.efc}

    def _build_kwargs(self) -> dict:
        return {"level_m": self.level_m, "double_base": self.double_base}


class VamanaIndex(_GraphIndexBase):
    """Flat graph built by one incremental pass with slack-α pruning."""

    kind = "vamana"

    def __init__(self, L: int = 100, M: int = 32, alpha: float = 1.2,
                 ef_search: int = 64, seed: int = 0):
        self.L = L
        self.M = M
        self.alpha = alpha
        self.ef_search = ef_search
        self.seed = seed

    def _build_params(self) -> dict:
        return {"L": self.L, "M": self.M, "alpha": self.alpha}


class NsgIndex(_GraphIndexBase):
    """Flat graph distilled from an initial K-nearest-neighbor graph."""

    kind = "nsg"

    def __init__(self, K: int = 40, L: int = 100, M: int = 32,
                 knng_mode: str = "exact", ef_search: int = 64, seed: int = 0):
        self.K = K
        self.L = L
        self.M = M
        self.knng_mode = knng_mode
        self.ef_search = ef_search
        self.seed = seed

    def _build_params(self) -> dict:
        return {"K": self.K, "L": self.L, "M": self.M}

    def _build_kwargs(self) -> dict:
        return {"knng_mode": self.knng_mode}


_INDEX_CLASSES = {"hnsw": HnswIndex, "vamana": VamanaIndex, "nsg": NsgIndex}


def make_index(kind: str, params: dict | None = None, **kwargs):
    if kind not in _INDEX_CLASSES:
        raise ValueError(f"unknown index kind {kind!r}")
    return _INDEX_CLASSES[kind](**{**(params or {}), **kwargs})


class ConstructionTuner(BaseEstimator):
    """Tunes construction parameters, then fits the best found index.

    After `fit`, `best_params_` holds the highest-qps configuration that
    reached `target_recall` (or the best-recall observation if none
    did), `index_` is an index fitted with it, and `report_` carries the
    full tuning report (front, hypervolume trace, cost split).
    """

    def __init__(self, kind: str = "hnsw", budget: int = 30,
                 batch_size: int = 10, recommender: str = "mehvi",
                 k: int = 10, target_recall: float = 0.95, seed: int = 0,
                 n_queries: int = 100, knng_mode: str = "exact"):
        self.kind = kind
        self.budget = budget
        self.batch_size = batch_size
        self.recommender = recommender
        self.k = k
        self.target_recall = target_recall
        self.seed = seed
        self.n_queries = n_queries
        self.knng_mode = knng_mode

    def fit(self, X, queries=None):
        data = check_vectors(X, min_rows=2)
        self.state_, self.report_ = tune(
            data, self.kind, budget=self.budget, m=self.batch_size,
            seed=self.seed, recommender=self.recommender, k=self.k,
            target_recall=self.target_recall, queries=queries,
            n_queries=self.n_queries, knng_mode=self.knng_mode)
        best = self.report_["best_per_target"].get(
            f"{self.target_recall:g}")
        if best is None:
            best = max((o for o in self.state_.observations),
                       key=lambda o: (o.recall, o.qps)).to_dict()
        self.best_params_ = dict(best["params"])
        self.index_ = make_index(self.kind, self.best_params_,
                                 seed=self.seed).fit(data)
        return self

    def kneighbors(self, Q, k: int | None = None, **kwargs):
        if not hasattr(self, "index_"):
            raise NotFittedError("tuner is not fitted; call fit(X) first")
        return self.index_.kneighbors(Q, k if k is not None else self.k,
                                      **kwargs)
