"""Bethe Hessian H(x): construction, negative eigenpairs and spectral clustering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from pairclust.clustering import ClusterResult, KMeansSettings, kmeans, overlap
from pairclust.eigen import EigenReport, LinearMap, dense_eig_oracle, lanczos_symmetric_extremal
from pairclust.errors import NoInformativeEigenvalueError, SolverFailureError, WeightSaturationError
from pairclust.graph import MeasurementGraph
from pairclust.model import ModelParams, edge_weights
from pairclust.nonbacktracking import SpectralEmbedding, SpectralSettings

SATURATION_MARGIN = 1e-6
CLAMP_DEFAULT = 0.999999
DENSE_BELOW = 500


@dataclass(frozen=True, eq=False)
class BetheHessian:
    matrix: sp.csr_matrix
    x: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def inf_norm(self) -> float:
        if self.n == 0:
            return 0.0
        return float(np.abs(self.matrix).sum(axis=1).max())

    def as_linear_map(self) -> LinearMap:
        return LinearMap(self.n, self.matrix.dot)


def hessian_from_weights(graph: MeasurementGraph, weights: np.ndarray, x: float) -> BetheHessian:
    """``H_ii = 1 + sum_l w_il^2/(x^2 - w_il^2)``, ``H_ij = -x w_ij/(x^2 - w_ij^2)``."""
    if x < 1.0:
        raise ValueError("x must be >= 1")
    w = np.asarray(weights, dtype=float)
    if w.size:
        bad = np.flatnonzero(np.abs(w) > x - SATURATION_MARGIN)
        if bad.size:
            e = int(bad[0])
            raise WeightSaturationError(
                f"edge {e} ({graph.i[e]}, {graph.j[e]}) has |w| = {float(abs(w[e]))!r} > x - {SATURATION_MARGIN}", edge=e
            )
    den = x * x - w * w
    diag = np.ones(graph.n)
    diag += np.bincount(graph.i, weights=w * w / den, minlength=graph.n)
    diag += np.bincount(graph.j, weights=w * w / den, minlength=graph.n)
    off = -x * w / den
    rows = np.concatenate([np.arange(graph.n), graph.i, graph.j])
    cols = np.concatenate([np.arange(graph.n), graph.j, graph.i])
    vals = np.concatenate([diag, off, off])
    H = sp.csr_matrix((vals, (rows, cols)), shape=(graph.n, graph.n))
    return BetheHessian(H, float(x))


def bethe_weights(graph: MeasurementGraph, params: ModelParams, clamp: float | None = None) -> np.ndarray:
    w = edge_weights(params, graph.s) if graph.m else np.empty(0)
    if clamp is not None:
        w = np.clip(w, -clamp, clamp)
    return w


def build_H(graph: MeasurementGraph, params: ModelParams, x: float = 1.0, clamp: float | None = None) -> BetheHessian:
    """Bethe Hessian at parameter ``x``; ``clamp`` optionally caps ``|w|`` first."""
    return hessian_from_weights(graph, bethe_weights(graph, params, clamp), x)


def negative_eigenpairs(
    H: BetheHessian,
    tol: float = 1e-8,
    max_pairs: int = 4,
    seed: int = 0,
    method: str = "auto",
    max_iter: int = 300,
    ncv: int | None = None,
) -> list[tuple[float, np.ndarray]]:
    """Eigenpairs with ``lambda < -1e-8 ||H||_inf``, most negative first, at most ``max_pairs``.

    ``method`` is ``"lanczos"``, ``"dense"`` or ``"auto"`` (dense below
    500 nodes).
    """
    if method not in ("auto", "lanczos", "dense"):
        raise ValueError("method must be 'auto', 'lanczos' or 'dense'")
    n = H.n
    if n == 0 or max_pairs < 1:
        return []
    cutoff = -1e-8 * H.inf_norm()
    if method == "dense" or (method == "auto" and n < DENSE_BELOW):
        report = dense_eig_oracle(H.matrix, symmetric=True)
        report.pairs = report.pairs[:max_pairs]
    else:
        report = lanczos_symmetric_extremal(
            H.as_linear_map(), "smallest", want=max_pairs, tol=tol, max_iter=max_iter, seed=seed, ncv=ncv
        )
        _check_converged(report, tol)
    out = []
    for pair in report.pairs:
        if pair.value < cutoff:
            v = pair.vector / np.linalg.norm(pair.vector)
            nz = np.flatnonzero(np.abs(v) > 1e-10 * np.abs(v).max())
            if nz.size and v[nz[0]] < 0:
                v = -v
            out.append((float(pair.value), v))
    return out


def _check_converged(report: EigenReport, tol: float) -> None:
    # a pair counts only if it is converged; an unconverged *negative* one
    # means the answer may be incomplete
    unconverged = [p for p in report.pairs if p.residual > tol * max(1.0, abs(p.value))]
    if unconverged and any(p.value < 0 for p in unconverged):
        raise SolverFailureError(
            f"Lanczos did not converge {len(unconverged)} of {len(report.pairs)} wanted pairs "
            f"after {report.iterations} restarts"
        )


def bh_embedding(pairs: list[tuple[float, np.ndarray]]) -> SpectralEmbedding:
    if not pairs:
        raise NoInformativeEigenvalueError("Bethe Hessian has no negative eigenvalue (r = 0)")
    return SpectralEmbedding(np.column_stack([v for _, v in pairs]), np.array([lam for lam, _ in pairs]))


def bh_cluster(
    graph: MeasurementGraph,
    params: ModelParams,
    kmeans_settings: KMeansSettings | None = None,
    seed: int = 0,
    truth: np.ndarray | None = None,
    settings: SpectralSettings | None = None,
) -> ClusterResult:
    """Negative eigenvectors of ``H(1)`` as embedding columns, then row-wise k-means."""
    if not params.symmetric:
        raise ValueError("the Bethe Hessian method needs a symmetric (p_in, p_out) model")
    settings = settings or SpectralSettings()
    kmeans_settings = kmeans_settings or KMeansSettings()
    H = build_H(graph, params, 1.0, clamp=settings.weight_clamp)
    max_pairs = settings.max_pairs if settings.max_pairs is not None else params.k + 2
    pairs = negative_eigenpairs(H, settings.tol, max_pairs, seed, max_iter=max(settings.max_iter, 300), ncv=settings.ncv)
    emb = bh_embedding(pairs)
    labels = kmeans(emb.matrix, params.k, kmeans_settings, seed=seed).labels
    return ClusterResult(
        labels=labels,
        overlap=overlap(labels, truth, params.k) if truth is not None else None,
        method="bh",
        diagnostics={"r": emb.matrix.shape[1], "eigenvalues": emb.eigenvalues.tolist()},
    )


def correspondence_check(graph: MeasurementGraph, params: ModelParams, lambda1: float, v_node: np.ndarray | None = None) -> float:
    """Smallest eigenvalue magnitude of ``H(lambda1)`` (dense).

    Near zero when ``lambda1`` is a real eigenvalue of B above 1.
    ``v_node``, when given, is checked too: the returned value is then the
    larger of that and ``||H v|| / ||v||``.
    """
    if lambda1 < 1.0 + 1e-6:
        raise ValueError("lambda1 must be >= 1 + 1e-6")
    return correspondence_from_weights(graph, bethe_weights(graph, params), lambda1, v_node)


def correspondence_from_weights(graph: MeasurementGraph, weights: np.ndarray, lambda1: float, v_node: np.ndarray | None = None) -> float:
    H = hessian_from_weights(graph, weights, lambda1)
    if H.n == 0:
        return float("inf")
    report = dense_eig_oracle(H.matrix, symmetric=True)
    smallest = float(np.min(np.abs(report.values)))
    if v_node is not None:
        v = np.asarray(v_node, float)
        smallest = max(smallest, float(np.linalg.norm(H.matrix @ v) / np.linalg.norm(v)))
    return smallest
