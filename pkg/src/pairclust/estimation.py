"""Point-cloud ingestion: random measurement graphs from coordinates, KDE
estimates of the pairwise densities from a labeled subset, and the
BP-based clustering pipeline built on them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from pairclust.bp import BeliefPropagation, BpSettings, decode_marginals
from pairclust.clustering import ClusterResult, overlap
from pairclust.densities import BinnedDensity
from pairclust.errors import ConfigurationError, InsufficientTrainingDataError, InvalidRateError
from pairclust.graph import MeasurementGraph, sample_pairs
from pairclust.model import DENSITY_FLOOR, ModelParams

UNLABELED = -1


@dataclass(frozen=True, eq=False)
class PointDataset:
    """Coordinates plus labels known only on ``training_ids`` (-1 elsewhere)."""

    points: np.ndarray
    labels: np.ndarray
    training_ids: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        labels = np.asarray(self.labels, dtype=np.int64)
        ids = np.asarray(self.training_ids, dtype=np.int64)
        if labels.shape != (pts.shape[0],):
            raise ValueError("one label slot per point required")
        if ids.size and (ids.min() < 0 or ids.max() >= pts.shape[0] or np.unique(ids).size != ids.size):
            raise ValueError("training ids must be unique and in range")
        if np.any(labels[ids] < 0):
            raise ValueError("every training point needs a label")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "training_ids", ids)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @classmethod
    def from_labels(cls, points, labels) -> "PointDataset":
        labels = np.asarray(labels, dtype=np.int64)
        return cls(points, labels, np.flatnonzero(labels >= 0))


def build_graph_from_points(data: PointDataset, alpha: float, seed: int = 0, metric: str = "euclidean") -> MeasurementGraph:
    """G(n, alpha/n) pairs with ``s_ij = ||x_i - x_j||``."""
    if metric != "euclidean":
        raise ValueError(f"unsupported metric {metric!r}")
    n = data.n
    if n == 0:
        raise ValueError("empty dataset")
    if alpha / n > 1.0:
        raise InvalidRateError(f"alpha/n = {alpha / n} exceeds 1")
    rng = np.random.default_rng(seed)
    i, j = sample_pairs(n, alpha / n, rng)
    s = np.linalg.norm(data.points[i] - data.points[j], axis=1)
    return MeasurementGraph(n, i, j, s)


def normal_reference_bandwidth(samples: np.ndarray) -> float:
    """``1.06 * sigma * m^(-1/5)``."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        return 0.0
    return 1.06 * float(samples.std(ddof=1)) * samples.size ** (-0.2)


def kernel_density(samples, bandwidth: float, s, weights=None):
    """Gaussian KDE ``sum_i w_i phi_h(s - s_i) / sum_i w_i`` evaluated at ``s``."""
    samples = np.asarray(samples, dtype=float)
    w = np.ones_like(samples) if weights is None else np.asarray(weights, dtype=float)
    z = (np.asarray(s, dtype=float)[..., None] - samples) / bandwidth
    vals = (np.exp(-0.5 * z * z) * w).sum(-1) / (w.sum() * bandwidth * math.sqrt(2.0 * math.pi))
    return float(vals) if np.ndim(vals) == 0 else vals


def binned_kde(samples, bandwidth: float, edges: np.ndarray, weights=None) -> BinnedDensity:
    """Kernel mass falling in each bin, renormalized over the binned range."""
    samples = np.asarray(samples, dtype=float)
    w = np.ones_like(samples) if weights is None else np.asarray(weights, dtype=float)
    cdf = ndtr((edges[:, None] - samples[None, :]) / bandwidth)
    mass = (np.diff(cdf, axis=0) * w).sum(1)
    total = mass.sum()
    if not total > 0:
        raise InsufficientTrainingDataError("kernel mass vanished over the binned range")
    return BinnedDensity(edges, mass / total)


def training_measurements(graph: MeasurementGraph, data: PointDataset, k: int, all_pairs: bool = True) -> dict[tuple[int, int], np.ndarray]:
    """Measurements between labeled points, grouped by unordered class pair ``(a <= b)``."""
    labels = data.labels
    if all_pairs:
        ids = data.training_ids
        ii, jj = np.triu_indices(ids.size, 1)
        a_ids, b_ids = ids[ii], ids[jj]
        s = np.linalg.norm(data.points[a_ids] - data.points[b_ids], axis=1)
    else:
        keep = (labels[graph.i] >= 0) & (labels[graph.j] >= 0)
        a_ids, b_ids, s = graph.i[keep], graph.j[keep], graph.s[keep]
    la, lb = labels[a_ids], labels[b_ids]
    lo, hi = np.minimum(la, lb), np.maximum(la, lb)
    return {(a, b): s[(lo == a) & (hi == b)] for a in range(k) for b in range(a, k)}


def kde_estimate(
    graph: MeasurementGraph,
    data: PointDataset,
    k: int,
    bandwidth: float | str = "auto",
    bins: int = 256,
    all_pairs: bool = True,
    pooled_fallback: bool = False,
) -> tuple[tuple[BinnedDensity, ...], ...]:
    """k x k table of binned Gaussian-kernel densities over ``[0, 1.05 max s]``.

    ``all_pairs`` feeds every labeled pair to the estimator instead of only
    the sampled edges between labeled points. With ``pooled_fallback`` a
    class pair with no samples borrows the density of all samples pooled.
    The table is symmetric: entries ``(a, b)`` and ``(b, a)`` are the same
    object. ``bandwidth="auto"`` applies the normal reference rule per class
    pair, floored at one bin width.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    groups = training_measurements(graph, data, k, all_pairs)
    pooled = np.concatenate(list(groups.values()))
    missing = [pair for pair, s in groups.items() if s.size == 0]
    if missing and (not pooled_fallback or pooled.size == 0):
        raise InsufficientTrainingDataError(f"no training measurements for class pairs {missing}")
    top = 1.05 * float(pooled.max())
    if not top > 0:
        top = 1.0
    edges = np.linspace(0.0, top, bins + 1)
    width = edges[1] - edges[0]

    def estimate(samples: np.ndarray) -> BinnedDensity:
        uniq, counts = np.unique(samples, return_counts=True)
        h = normal_reference_bandwidth(samples) if bandwidth == "auto" else float(bandwidth)
        if bandwidth == "auto":
            h = max(h, width)
        elif not h > 0:
            raise ValueError("bandwidth must be positive")
        return binned_kde(uniq, h, edges, counts)

    table = [[None] * k for _ in range(k)]
    for (a, b), samples in groups.items():
        dens = estimate(samples if samples.size else pooled)
        table[a][b] = table[b][a] = dens
    return tuple(tuple(row) for row in table)


def cluster_points(
    data: PointDataset,
    alpha: float,
    k: int,
    bandwidth: float | str = "auto",
    bp_settings: BpSettings | None = None,
    seed: int = 0,
    truth: np.ndarray | None = None,
    bins: int = 256,
    clamp_training: bool = True,
    all_pairs: bool = True,
    pooled_fallback: bool = False,
) -> ClusterResult:
    """Graph from points, KDE densities from the training labels, BP, decode.

    Training points enter BP as clamped (one-hot prior) nodes unless
    ``clamp_training`` is off. When ``truth`` is given, accuracy and overlap
    are scored on the non-training points.
    """
    if data.training_ids.size == 0:
        raise InsufficientTrainingDataError("no labeled training points")
    graph = build_graph_from_points(data, alpha, seed)
    table = kde_estimate(graph, data, k, bandwidth, bins, all_pairs, pooled_fallback)
    params = ModelParams(k, alpha, table=table, density_floor=DENSITY_FLOOR)
    prior = None
    if clamp_training:
        prior = np.ones((data.n, k))
        prior[data.training_ids] = 0.0
        prior[data.training_ids, data.labels[data.training_ids]] = 1.0
    marg, _, report = BeliefPropagation(graph, params, prior).run(seed, bp_settings)
    labels = decode_marginals(marg)
    diagnostics = {"iterations": report.iterations, "final_delta": report.final_delta, "converged": report.converged, "m": graph.m}
    score = None
    if truth is not None:
        truth = np.asarray(truth, dtype=np.int64)
        test = np.setdiff1d(np.arange(data.n), data.training_ids)
        diagnostics["accuracy"] = float(np.mean(labels[test] == truth[test]))
        score = overlap(labels[test], truth[test], k)
    return ClusterResult(labels, score, "bp", diagnostics)


# -- fixtures and CSV -------------------------------------------------------

def two_blobs(n: int, seed: int = 0, separation: float = 20.0, spread: float = 1.0, train_fraction: float = 0.02, dim: int = 2):
    """Two isotropic Gaussian blobs; returns ``(dataset, truth)``."""
    rng = np.random.default_rng(seed)
    truth = rng.integers(0, 2, size=n)
    centers = np.zeros((2, dim))
    centers[1, 0] = separation * spread
    pts = centers[truth] + rng.normal(0.0, spread, size=(n, dim))
    return _with_training(pts, truth, train_fraction, rng), truth


def concentric_rings(n: int, seed: int = 0, radii=(1.0, 4.0), noise: float = 0.1, train_fraction: float = 0.02):
    """Points on noisy circles, one circle per class; returns ``(dataset, truth)``."""
    rng = np.random.default_rng(seed)
    truth = rng.integers(0, len(radii), size=n)
    angle = rng.uniform(0.0, 2.0 * np.pi, size=n)
    r = np.asarray(radii, dtype=float)[truth] + rng.normal(0.0, noise, size=n)
    pts = np.column_stack([r * np.cos(angle), r * np.sin(angle)])
    return _with_training(pts, truth, train_fraction, rng), truth


def _with_training(points, truth, train_fraction, rng) -> PointDataset:
    n = len(truth)
    n_train = max(1, int(round(train_fraction * n)))
    ids = np.sort(rng.choice(n, size=n_train, replace=False))
    labels = np.full(n, UNLABELED, dtype=np.int64)
    labels[ids] = truth[ids]
    return PointDataset(points, labels, ids)


def read_points_csv(path: str | Path, header: bool = False, label_column: bool = True) -> PointDataset:
    """CSV rows ``x1,...,xd[,label]``; empty label cells mark unlabeled points. Labels are 1-based on disk."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if header:
            next(reader, None)
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise ConfigurationError("no data rows in point CSV")
    try:
        if label_column:
            pts = np.array([[float(c) for c in r[:-1]] for r in rows])
            raw = [int(r[-1]) if r[-1].strip() else None for r in rows]
            if any(c is not None and c < 1 for c in raw):
                raise ConfigurationError("labels must be >= 1")
            labels = np.array([UNLABELED if c is None else c - 1 for c in raw], dtype=np.int64)
        else:
            pts = np.array([[float(c) for c in r] for r in rows])
            labels = np.full(len(rows), UNLABELED, dtype=np.int64)
    except ValueError as exc:
        raise ConfigurationError(f"malformed point CSV: {exc}") from exc
    if pts.ndim != 2 or pts.shape[1] == 0:
        raise ConfigurationError("point CSV rows must have the same number (>= 1) of coordinates")
    return PointDataset.from_labels(pts, labels)


def write_points_csv(path: str | Path, data: PointDataset) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for x, c in zip(data.points.tolist(), data.labels.tolist()):
            writer.writerow([repr(v) for v in x] + ["" if c < 0 else c + 1])
