"""Deterministic clustering of embedding rows for mass review.

Both estimators follow the scikit-learn conventions (``fit`` sets
``labels_``, ``cluster_centers_``, ``inertia_``; params round-trip through
``get_params``) but the algorithms are implemented here because the review
workflow needs guarantees the stock implementations do not give:
bit-deterministic runs for a fixed config, an explicit empty-cluster
reseed policy, per-iteration objective history for monotonicity checks,
and a fixed tie-break order for agglomerative merges.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .validation import check_embedding_matrix, check_fitted


class ClusterAlgorithm(str, Enum):
    KMEANS = "KMEANS"
    AGGLOMERATIVE = "AGGLOMERATIVE"


class Linkage(str, Enum):
    AVERAGE = "AVERAGE"
    SINGLE = "SINGLE"
    COMPLETE = "COMPLETE"


@dataclass
class ClusterConfig:
    algorithm: ClusterAlgorithm = ClusterAlgorithm.KMEANS
    k: int | None = None  # None -> default_k(n)
    seed: int = 0
    max_iters: int = 300
    tol: float = 1e-6
    restarts: int = 10
    linkage: Linkage = Linkage.AVERAGE

    def __post_init__(self):
        self.algorithm = ClusterAlgorithm(self.algorithm)
        self.linkage = Linkage(self.linkage)
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithm"] = self.algorithm.value
        d["linkage"] = self.linkage.value
        return d


@dataclass
class ClusterSet:
    """A partition of item ids with centroids and the WCSS objective."""

    clusters: list[list[str]]
    centroids: np.ndarray
    wcss: float
    config: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        flat = [i for members in self.clusters for i in members]
        if len(flat) != len(set(flat)):
            raise AssertionError("cluster membership is not a partition")
        if self.wcss < -1e-9:
            raise AssertionError("negative WCSS")

    @property
    def k(self) -> int:
        return len(self.clusters)

    def to_json(self) -> str:
        return json.dumps(
            {
                "clusters": self.clusters,
                "centroids": np.asarray(self.centroids, dtype=float).tolist(),
                "wcss": self.wcss,
                "config": self.config,
                "seed": self.seed,
            }
        )


def default_k(n: int) -> int:
    """Rule-of-thumb cluster count when the campaign does not give one."""
    return max(2, int(round(math.sqrt(n / 2.0))))


def _pairwise_sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances, accumulated in float64."""
    X = X.astype(np.float64, copy=False)
    C = C.astype(np.float64, copy=False)
    sq = (
        np.einsum("ij,ij->i", X, X)[:, None]
        - 2.0 * (X @ C.T)
        + np.einsum("ij,ij->i", C, C)[None, :]
    )
    return np.maximum(sq, 0.0)


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = X[first]
    closest = _pairwise_sq_dists(X, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[j] = X[idx]
        closest = np.minimum(closest, _pairwise_sq_dists(X, centers[j : j + 1])[:, 0])
    return centers


def _lloyd(
    X: np.ndarray, centers: np.ndarray, max_iters: int, tol: float
) -> tuple[np.ndarray, np.ndarray, float, list[float]]:
    """Run Lloyd iterations; returns (labels, centers, wcss, wcss history).

    The history is measured after each assignment step and is guaranteed
    non-increasing; empty clusters are reseeded to the point farthest from
    its currently assigned centroid (ties to the lowest row index).
    """
    k = centers.shape[0]
    dists = _pairwise_sq_dists(X, centers)
    labels = np.argmin(dists, axis=1)
    point_cost = dists[np.arange(len(X)), labels]
    wcss = float(point_cost.sum())
    history = [wcss]
    for _ in range(max_iters):
        new_centers = centers.copy()
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j] > 0:
                new_centers[j] = X[labels == j].mean(axis=0)
        empties = np.flatnonzero(counts == 0)
        used: set[int] = set()
        for j in empties:
            order = np.argsort(-point_cost, kind="stable")
            pick = next(int(i) for i in order if int(i) not in used)
            used.add(pick)
            new_centers[j] = X[pick]
        dists = _pairwise_sq_dists(X, new_centers)
        new_labels = np.argmin(dists, axis=1)
        point_cost = dists[np.arange(len(X)), new_labels]
        new_wcss = float(point_cost.sum())
        history.append(new_wcss)
        improvement = wcss - new_wcss
        centers, labels = new_centers, new_labels
        converged = improvement <= tol * wcss if wcss > 0 else True
        wcss = new_wcss
        if converged:
            break
    return labels, centers, wcss, history


class KMeansClusterer(ClusterMixin, BaseEstimator):
    """k-means with k-means++ seeding and best-of-restarts selection.

    Deterministic for a fixed (matrix, params): restart r draws from a
    generator keyed on (seed, r), and the restart with the smallest WCSS
    wins (earliest restart on exact ties).
    """

    def __init__(self, k=2, seed=0, max_iters=300, tol=1e-6, restarts=10):
        self.k = k
        self.seed = seed
        self.max_iters = max_iters
        self.tol = tol
        self.restarts = restarts

    def fit(self, X, y=None):
        X = check_embedding_matrix(X).astype(np.float64)
        n = X.shape[0]
        if not 1 <= self.k <= n:
            raise ValueError(f"k={self.k} outside [1, n={n}]")
        best = None
        for r in range(self.restarts):
            rng = np.random.default_rng([self.seed, r])
            centers = _kmeanspp_init(X, self.k, rng)
            labels, centers, wcss, history = _lloyd(
                X, centers, self.max_iters, self.tol
            )
            for prev, curr in zip(history, history[1:]):
                if curr > prev + 1e-9 * max(1.0, prev):
                    raise AssertionError(
                        f"WCSS increased within a Lloyd run: {prev} -> {curr}"
                    )
            if best is None or wcss < best[2]:
                best = (labels, centers, wcss, history, r)
        self.labels_, self.cluster_centers_, self.inertia_, self.wcss_history_, self.best_restart_ = best
        self.n_iter_ = len(self.wcss_history_) - 1
        return self

    def predict(self, X):
        check_fitted(self, "cluster_centers_")
        X = check_embedding_matrix(X)
        return np.argmin(_pairwise_sq_dists(X, self.cluster_centers_), axis=1)


def _condensed_euclidean(X: np.ndarray) -> np.ndarray:
    return np.sqrt(_pairwise_sq_dists(X, X))


class AgglomerativeClusterer(ClusterMixin, BaseEstimator):
    """Bottom-up merging under a Lance-Williams linkage on Euclidean distance.

    Clusters are addressed by their smallest member row index; among pairs
    at the minimal distance the lexicographically smallest index pair
    merges first, which makes runs reproducible.
    """

    def __init__(self, k=2, linkage="AVERAGE"):
        self.k = k
        self.linkage = linkage

    def fit(self, X, y=None):
        X = check_embedding_matrix(X).astype(np.float64)
        n = X.shape[0]
        if not 1 <= self.k <= n:
            raise ValueError(f"k={self.k} outside [1, n={n}]")
        linkage = Linkage(self.linkage)
        D = _condensed_euclidean(X)
        np.fill_diagonal(D, np.inf)
        active = np.ones(n, dtype=bool)
        members: dict[int, list[int]] = {i: [i] for i in range(n)}
        sizes = np.ones(n)
        merges: list[tuple[int, int]] = []
        for _ in range(n - self.k):
            M = np.where(active[:, None] & active[None, :], D, np.inf)
            M[np.tril_indices(n)] = np.inf
            flat = int(np.argmin(M))
            a, b = divmod(flat, n)
            merges.append((a, b))
            if linkage is Linkage.AVERAGE:
                combined = (sizes[a] * D[a] + sizes[b] * D[b]) / (sizes[a] + sizes[b])
            elif linkage is Linkage.SINGLE:
                combined = np.minimum(D[a], D[b])
            else:
                combined = np.maximum(D[a], D[b])
            D[a] = combined
            D[:, a] = combined
            D[a, a] = np.inf
            active[b] = False
            members[a].extend(members.pop(b))
            sizes[a] += sizes[b]
        slots = sorted(i for i in range(n) if active[i])
        labels = np.empty(n, dtype=int)
        centers = np.empty((self.k, X.shape[1]))
        for cluster_idx, slot in enumerate(slots):
            rows = members[slot]
            labels[rows] = cluster_idx
            centers[cluster_idx] = X[rows].mean(axis=0)
        self.labels_ = labels
        self.cluster_centers_ = centers
        self.merge_sequence_ = merges
        diffs = X - centers[labels]
        self.inertia_ = float(np.einsum("ij,ij->", diffs, diffs))
        return self


def cluster_items(
    X: np.ndarray, item_ids: Sequence[str], cfg: ClusterConfig
) -> ClusterSet:
    """Cluster rows of X (aligned with item_ids) per the campaign config."""
    if len(item_ids) != len(X):
        raise ValueError("item_ids and matrix rows disagree")
    k = cfg.k if cfg.k is not None else min(default_k(len(X)), len(X))
    if cfg.algorithm is ClusterAlgorithm.KMEANS:
        est = KMeansClusterer(
            k=k,
            seed=cfg.seed,
            max_iters=cfg.max_iters,
            tol=cfg.tol,
            restarts=cfg.restarts,
        ).fit(X)
    else:
        est = AgglomerativeClusterer(k=k, linkage=cfg.linkage.value).fit(X)
    groups: list[list[str]] = [[] for _ in range(k)]
    for row, label in enumerate(est.labels_):
        groups[int(label)].append(item_ids[row])
    return ClusterSet(
        clusters=groups,
        centroids=est.cluster_centers_,
        wcss=float(est.inertia_),
        config=cfg.to_dict(),
        seed=cfg.seed,
    )


def majority_label(member_labels: Sequence[str]) -> tuple[str, float]:
    """Modal label and its fraction; ties go to the smallest label."""
    if not member_labels:
        raise ValueError("majority_label needs a non-empty multiset")
    counts = Counter(member_labels)
    best_count = max(counts.values())
    winner = min(label for label, c in counts.items() if c == best_count)
    return winner, best_count / len(member_labels)


def purity(cs: ClusterSet, truth: Mapping[str, str]) -> float:
    """Fraction of items matching their cluster's modal true label."""
    total = 0
    agree = 0
    for members in cs.clusters:
        if not members:
            continue
        labels = []
        for item_id in members:
            if item_id not in truth:
                raise KeyError(f"no truth entry for {item_id}")
            labels.append(truth[item_id])
        counts = Counter(labels)
        agree += max(counts.values())
        total += len(labels)
    return agree / total if total else 0.0
