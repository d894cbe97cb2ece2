"""Weighted non-backtracking operator on directed edges and its spectral clustering.

``(B x)[a->b] = sum over c->a with c != b of w(s_ca) x[c->a]``, applied in
O(m) as ``S[a] - w(s_ba) x[b->a]`` with ``S[a]`` the weighted in-sum at
``a``. ``C`` aggregates the same in-sums onto nodes: ``(C y)[i] = S[i]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from pairclust.clustering import ClusterResult, KMeansSettings, kmeans, overlap
from pairclust.eigen import EigenReport, LinearMap, krylov_nonsymmetric, residual_bound
from pairclust.errors import NoInformativeEigenvalueError
from pairclust.graph import MeasurementGraph
from pairclust.model import ModelParams, edge_weights


@dataclass(frozen=True, eq=False)
class NbOperator:
    graph: MeasurementGraph
    weights: np.ndarray  # one per undirected edge

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel().copy()
        if w.size != self.graph.m:
            raise ValueError("one weight per undirected edge required")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_params(cls, graph: MeasurementGraph, params: ModelParams) -> "NbOperator":
        return cls(graph, edge_weights(params, graph.s) if graph.m else np.empty(0))

    @property
    def dimension(self) -> int:
        return 2 * self.graph.m

    @cached_property
    def directed_weights(self) -> np.ndarray:
        return np.repeat(self.weights, 2)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.dimension,):
            raise ValueError(f"expected vector of length {self.dimension}, got shape {x.shape}")
        g = self.graph
        wx = self.directed_weights * x
        insum = _node_sum(g.dst, wx, g.n)
        rev = np.arange(self.dimension) ^ 1
        return insum[g.src] - wx[rev]

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """Transpose product: ``(B^T y)[c->a] = w(s_ca) (sum over a->b of y[a->b] - y[a->c])``."""
        y = np.asarray(y)
        if y.shape != (self.dimension,):
            raise ValueError(f"expected vector of length {self.dimension}, got shape {y.shape}")
        g = self.graph
        outsum = _node_sum(g.src, y, g.n)
        rev = np.arange(self.dimension) ^ 1
        return self.directed_weights * (outsum[g.dst] - y[rev])

    def as_linear_map(self) -> LinearMap:
        return LinearMap(self.dimension, self.matvec)

    def to_sparse(self) -> sp.csr_matrix:
        """Explicit 2m x 2m matrix, for tests and small dense checks."""
        g = self.graph
        rows, cols, vals = [], [], []
        into = np.argsort(g.dst, kind="stable")
        in_ptr = np.zeros(g.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(g.dst, minlength=g.n), out=in_ptr[1:])
        wd = self.directed_weights
        for d in range(self.dimension):
            a, b = g.src[d], g.dst[d]
            for f in into[in_ptr[a]:in_ptr[a + 1]]:
                if g.src[f] != b:
                    rows.append(d)
                    cols.append(f)
                    vals.append(wd[f])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.dimension, self.dimension))


def _node_sum(index: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    if np.iscomplexobj(values):
        return np.bincount(index, weights=values.real, minlength=n) + 1j * np.bincount(index, weights=values.imag, minlength=n)
    return np.bincount(index, weights=values, minlength=n)


def c_matvec(graph: MeasurementGraph, weights: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``(C y)[i] = sum over j->i of w(s_ji) y[j->i]``."""
    y = np.asarray(y)
    if y.shape != (2 * graph.m,):
        raise ValueError(f"expected vector of length {2 * graph.m}, got shape {y.shape}")
    return _node_sum(graph.dst, np.repeat(np.asarray(weights, float), 2) * y, graph.n)


def _gauge(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    nz = np.flatnonzero(np.abs(v) > 1e-10 * np.abs(v).max())
    if nz.size and v[nz[0]] < 0:
        v = -v
    return v


def nb_krylov(op: NbOperator, want: int, tol: float = 1e-8, seed: int = 0, max_iter: int = 60, ncv: int | None = None) -> EigenReport:
    """Leading Ritz pairs of ``B`` by modulus (raw solver report, used for spectrum dumps)."""
    if op.dimension == 0:
        return EigenReport()
    return krylov_nonsymmetric(op.as_linear_map(), want, tol=tol, max_iter=max_iter, seed=seed, ncv=ncv)


def nb_leading_spectrum(
    op: NbOperator,
    radius_floor: float = 1.0,
    max_pairs: int = 4,
    tol: float = 1e-8,
    seed: int = 0,
    max_iter: int = 60,
    ncv: int | None = None,
    search_depth: int | None = None,
) -> list[tuple[float, np.ndarray]]:
    """Real eigenpairs of ``B`` with ``|lambda| > radius_floor``, by decreasing value.

    The search covers the ``search_depth`` eigenvalues of largest modulus
    (default ``2 * max_pairs``). Real eigenvalues hidden deeper inside the
    complex bulk are not seen; pass ``search_depth=op.dimension`` for an
    exhaustive search on small operators. Only pairs whose recomputed residual satisfies
    ``||B v - lambda v|| <= tol * max(1, |lambda|)`` are returned, so
    eigenvalues the Krylov iteration could not resolve within ``max_iter``
    restarts are left out rather than guessed. Eigenvectors have unit norm
    and a positive first nonzero entry.
    """
    if radius_floor < 0:
        raise ValueError("radius_floor must be nonnegative")
    if op.dimension == 0:
        return []
    depth = 2 * max_pairs if search_depth is None else search_depth
    report = nb_krylov(op, want=max(1, min(depth, op.dimension)), tol=tol, seed=seed, max_iter=max_iter, ncv=ncv)
    found = []
    for pair in report.pairs:
        if not pair.is_real or abs(pair.value) <= radius_floor:
            continue
        v = _gauge(np.asarray(pair.vector, dtype=float))
        lam = float(pair.value)
        if np.linalg.norm(op.matvec(v) - lam * v) <= residual_bound(lam, tol):
            found.append((lam, v))
    found = found[:max_pairs]
    found.sort(key=lambda p: -p[0])
    return found


@dataclass
class SpectralEmbedding:
    matrix: np.ndarray  # n x r
    eigenvalues: np.ndarray  # r, decreasing for NB, increasing for BH


def nb_embedding(graph: MeasurementGraph, weights: np.ndarray, spectrum: list[tuple[float, np.ndarray]]) -> SpectralEmbedding:
    """Columns ``C v_j`` for each retained eigenvector."""
    if not spectrum:
        raise NoInformativeEigenvalueError("no real eigenvalue of B beyond the radius floor (r = 0)")
    cols = [c_matvec(graph, weights, v) for _, v in spectrum]
    return SpectralEmbedding(np.column_stack(cols), np.array([lam for lam, _ in spectrum]))


@dataclass
class SpectralSettings:
    tol: float = 1e-8
    max_pairs: int | None = None  # default k + 2
    max_iter: int = 60
    radius_floor: float = 1.0
    ncv: int | None = None
    weight_clamp: float | None = None


def nb_cluster(
    graph: MeasurementGraph,
    params: ModelParams,
    kmeans_settings: KMeansSettings | None = None,
    seed: int = 0,
    truth: np.ndarray | None = None,
    settings: SpectralSettings | None = None,
) -> ClusterResult:
    """Weights, leading real spectrum of B, embedding ``C Y``, then row-wise k-means."""
    if not params.symmetric:
        raise ValueError("the non-backtracking method needs a symmetric (p_in, p_out) model")
    settings = settings or SpectralSettings()
    kmeans_settings = kmeans_settings or KMeansSettings()
    op = NbOperator.from_params(graph, params)
    max_pairs = settings.max_pairs if settings.max_pairs is not None else params.k + 2
    spectrum = nb_leading_spectrum(
        op, settings.radius_floor, max_pairs, settings.tol, seed, settings.max_iter, settings.ncv
    )
    emb = nb_embedding(graph, op.weights, spectrum)
    labels = kmeans(emb.matrix, params.k, kmeans_settings, seed=seed).labels
    return ClusterResult(
        labels=labels,
        overlap=overlap(labels, truth, params.k) if truth is not None else None,
        method="nb",
        diagnostics={"r": emb.matrix.shape[1], "eigenvalues": emb.eigenvalues.tolist()},
    )
