"""k-means over embedding rows, the permutation-maximized overlap, sign decoding."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from pairclust.errors import EnumerationBoundError

MAX_OVERLAP_K = 10


@dataclass
class ClusterResult:
    labels: np.ndarray  # 0-based, length n
    overlap: float | None
    method: str  # "bp", "nb" or "bh"
    diagnostics: dict[str, Any] = field(default_factory=dict)


@dataclass
class KMeansSettings:
    restarts: int = 10
    max_iter: int = 100
    normalize_rows: bool = False


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    history: list[float]  # inertia after each assignment step of the best run


def _sq_dists(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _careful_seeding(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dists(X, centers[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        idx = rng.choice(n, p=closest / total) if total > 0 else rng.integers(n)
        centers[c] = X[idx]
        closest = np.minimum(closest, _sq_dists(X, centers[c:c + 1])[:, 0])
    return centers


def _lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int) -> tuple[np.ndarray, np.ndarray, list[float]]:
    k = centers.shape[0]
    history: list[float] = []
    labels = None
    for _ in range(max_iter):
        d = _sq_dists(X, centers)
        new_labels = d.argmin(1)
        point_cost = d[np.arange(X.shape[0]), new_labels]
        # refill empty clusters with the point currently worst served
        counts = np.bincount(new_labels, minlength=k)
        for c in np.flatnonzero(counts == 0):
            far = int(point_cost.argmax())
            new_labels[far] = c
            point_cost[far] = 0.0
            centers[c] = X[far]
        history.append(float(point_cost.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = X[members].mean(0)
    inertia = float(_sq_dists(X, centers)[np.arange(X.shape[0]), labels].sum())
    history.append(inertia)
    return labels, centers, history


def kmeans(points, k: int, settings: KMeansSettings | None = None, seed: int = 0) -> KMeansResult:
    """Best-inertia clustering over ``settings.restarts`` seeded runs.

    Each run uses squared-distance proportional seeding followed by Lloyd
    alternation. Labels are 0-based.
    """
    settings = settings or KMeansSettings()
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not np.all(np.isfinite(X)):
        raise ValueError("k-means input has non-finite coordinates")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if X.shape[1] < 1:
        raise ValueError("need at least one coordinate")
    if settings.normalize_rows:
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        X = np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, settings.restarts)):
        centers = _careful_seeding(X, k, rng)
        labels, centers, history = _lloyd(X, centers, settings.max_iter)
        if best is None or history[-1] < best.inertia:
            best = KMeansResult(labels, centers, history[-1], history)
    return best


def overlap(pred, truth, k: int) -> float:
    """Agreement maximized over label permutations, rescaled so chance is 0 and perfect is 1."""
    if k > MAX_OVERLAP_K:
        raise EnumerationBoundError(f"overlap enumerates k! permutations; k={k} exceeds {MAX_OVERLAP_K}")
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError("pred and truth must have the same length")
    n = pred.size
    if n == 0:
        raise ValueError("empty labelling")
    if pred.min() < 0 or truth.min() < 0 or pred.max() >= k or truth.max() >= k:
        raise ValueError("labels must lie in range(k)")
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (pred, truth), 1)
    cols = np.arange(k)
    best = max(conf[list(perm), cols].sum() for perm in itertools.permutations(range(k)))
    return (best / n - 1.0 / k) / (1.0 - 1.0 / k)


def sign_decode(column) -> np.ndarray:
    """Label 0 where the entry is nonnegative, 1 elsewhere."""
    return (np.asarray(column) < 0).astype(np.int64)
