"""Iterative eigensolvers over matvec closures, plus dense reference solvers.

Both iterative solvers share one Arnoldi expansion with full (twice-applied
classical Gram-Schmidt) reorthogonalization and restart in Krylov-Schur
fashion: the wanted Ritz vectors are kept, the rest discarded, and the
expansion resumes from the kept subspace. Converged pairs therefore stay
locked in the basis, which deflates them from further work. On a symmetric
map the projected matrix is symmetric and the scheme is the thick-restart
Lanczos method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from pairclust.errors import SolverFailureError

DENSE_LIMIT = 2000


@dataclass(frozen=True)
class LinearMap:
    dimension: int
    apply: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def from_matrix(cls, matrix) -> "LinearMap":
        return cls(matrix.shape[0], lambda x: matrix @ x)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)


@dataclass
class EigenPair:
    value: complex | float
    vector: np.ndarray
    residual: float

    @property
    def is_real(self) -> bool:
        return is_real(self.value)


@dataclass
class EigenReport:
    pairs: list[EigenPair] = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    matvecs: int = 0

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.pairs])


def is_real(value: complex, rel: float = 1e-6) -> bool:
    """Realness test applied to Ritz values: ``|Im| <= rel * (1 + |value|)``."""
    return abs(np.imag(value)) <= rel * (1.0 + abs(value))


def residual_bound(value, tol: float) -> float:
    return tol * max(1.0, abs(value))


def _orthogonalize(V: np.ndarray, ncols: int, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Q = V[:, :ncols]
    h = Q.T @ w
    w = w - Q @ h
    h2 = Q.T @ w
    w -= Q @ h2
    return w, h + h2


class _Arnoldi:
    """Arnoldi factorization ``A V[:, :m] = V[:, :m+1] H`` with restart support."""

    def __init__(self, map_: LinearMap, ncv: int, rng: np.random.Generator):
        self.map = map_
        self.dim = map_.dimension
        self.ncv = ncv
        self.rng = rng
        self.V = np.zeros((self.dim, ncv + 1))
        self.H = np.zeros((ncv + 1, ncv))
        self.matvecs = 0
        self.V[:, 0] = self._random_unit(0)

    def _random_unit(self, ncols: int) -> np.ndarray:
        for _ in range(5):
            w = self.rng.standard_normal(self.dim)
            if ncols:
                w, _ = _orthogonalize(self.V, ncols, w)
            nrm = np.linalg.norm(w)
            if nrm > 1e-8:
                return w / nrm
        raise SolverFailureError("could not draw a new direction orthogonal to the Krylov basis")

    def expand(self, start: int) -> None:
        V, H = self.V, self.H
        for j in range(start, self.ncv):
            w = np.asarray(self.map(V[:, j]), dtype=float)
            self.matvecs += 1
            if not np.all(np.isfinite(w)):
                raise SolverFailureError("matvec produced non-finite values")
            w, h = _orthogonalize(V, j + 1, w)
            H[: j + 1, j] = h
            beta = np.linalg.norm(w)
            if j + 1 == self.dim:
                # basis spans the whole space: the factorization is exact
                H[j + 1, j] = 0.0
                V[:, j + 1] = 0.0
            elif beta <= 1e-12 * max(np.linalg.norm(h), 1e-300):
                # invariant subspace found; continue with a fresh direction
                H[j + 1, j] = 0.0
                V[:, j + 1] = self._random_unit(j + 1)
            else:
                H[j + 1, j] = beta
                V[:, j + 1] = w / beta

    def restart(self, Z: np.ndarray, T: np.ndarray, keep: int) -> None:
        m = self.ncv
        b = self.H[m, :m].copy()
        self.V[:, :keep] = self.V[:, :m] @ Z[:, :keep]
        self.V[:, keep] = self.V[:, m]
        self.H[:] = 0.0
        self.H[:keep, :keep] = T[:keep, :keep]
        self.H[keep, :keep] = b @ Z[:, :keep]

    def reset(self, start: np.ndarray) -> None:
        """Explicit restart from a single vector (random if it vanishes)."""
        self.H[:] = 0.0
        self.V[:] = 0.0
        nrm = np.linalg.norm(start)
        self.V[:, 0] = start / nrm if nrm > 1e-300 and np.all(np.isfinite(start)) else self._random_unit(0)


def _subspace_size(dim: int, want: int, ncv: int | None) -> int:
    if ncv is None:
        ncv = max(2 * want + 1, want + 40)
    return max(1, min(dim, max(ncv, want + 2)))


def _keep_count(mod_sorted: np.ndarray, want: int, ncv: int) -> int:
    keep = min(max(want + (ncv - want) // 2, want), ncv - 2)
    keep = max(keep, 1)
    # never split a complex-conjugate pair across the cut
    while 0 < keep < ncv - 1 and abs(mod_sorted[keep - 1] - mod_sorted[keep]) <= 1e-12 * max(mod_sorted[keep - 1], 1e-300):
        keep += 1
    return keep


def krylov_nonsymmetric(
    map_: LinearMap,
    want: int,
    tol: float = 1e-10,
    max_iter: int = 300,
    seed: int = 0,
    ncv: int | None = None,
) -> EigenReport:
    """Largest-modulus eigenpairs of a general real linear map.

    Returns the ``want`` leading Ritz pairs ordered by decreasing modulus,
    each with its residual ``||A x - theta x||`` for the unit-norm Ritz
    vector ``x``. A pair is converged when its residual is at most
    ``tol * max(1, |theta|)``; ``report.converged`` tells whether all of
    them are. ``max_iter`` counts restarts.
    """
    if want < 1:
        raise ValueError("want must be >= 1")
    dim = map_.dimension
    if dim == 0:
        return EigenReport()
    want = min(want, dim)
    m = _subspace_size(dim, want, ncv)
    arn = _Arnoldi(map_, m, np.random.default_rng(seed))
    start = 0
    for it in range(1, max_iter + 1):
        arn.expand(start)
        Hm = arn.H[:m, :m]
        b = arn.H[m, :m]
        theta, Y = np.linalg.eig(Hm)
        res = np.abs(b @ Y)
        mod = np.abs(theta)
        order = np.lexsort((-theta.real, -mod))
        top = order[:want]
        done = bool(np.all(res[top] <= tol * np.maximum(1.0, mod[top])))
        if done or m == dim or it == max_iter:
            break
        keep = _keep_count(mod[order], want, m)
        cut = 0.5 * (mod[order][keep - 1] + mod[order][keep])
        T, Z, sdim = scipy.linalg.schur(Hm, output="real", sort=lambda re, im: math.hypot(re, im) > cut)
        if 0 < sdim < m:
            arn.restart(Z, T, sdim)
            start = sdim
        else:
            # tied moduli (typically a cluster of zero Ritz values) leave no
            # clean cut: restart explicitly from the wanted Ritz vectors
            arn.reset((arn.V[:, :m] @ Y[:, top]).real.sum(1))
            start = 0

    X = arn.V[:, :m] @ Y[:, top]
    pairs = []
    for col, idx in enumerate(top):
        value = theta[idx]
        x = X[:, col]
        if is_real(value):
            value = float(value.real)
            x = _realify(x)
        pairs.append(EigenPair(value, x, float(res[idx])))
    return EigenReport(pairs, it, done or m == dim, arn.matvecs)


def _realify(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if np.iscomplexobj(x):
        k = int(np.argmax(np.abs(x)))
        x = (x * np.conj(x[k]) / abs(x[k])).real if abs(x[k]) > 0 else x.real
    nrm = np.linalg.norm(x)
    return x / nrm if nrm > 0 else x


def lanczos_symmetric_extremal(
    map_: LinearMap,
    side: str = "smallest",
    want: int = 1,
    tol: float = 1e-8,
    max_iter: int = 300,
    seed: int = 0,
    ncv: int | None = None,
) -> EigenReport:
    """Extremal eigenpairs of a symmetric map by thick-restart Lanczos.

    ``side`` is ``"smallest"`` or ``"largest"``. Pairs come sorted from the
    extreme inward (increasing values for ``smallest``). Converged means
    residual ``<= tol * max(1, |theta|)``.
    """
    if side not in ("smallest", "largest"):
        raise ValueError("side must be 'smallest' or 'largest'")
    if want < 1:
        raise ValueError("want must be >= 1")
    dim = map_.dimension
    if dim == 0:
        return EigenReport()
    want = min(want, dim)
    sign = 1.0 if side == "smallest" else -1.0
    m = _subspace_size(dim, want, ncv)
    arn = _Arnoldi(map_, m, np.random.default_rng(seed))
    start = 0
    for it in range(1, max_iter + 1):
        arn.expand(start)
        Hm = arn.H[:m, :m]
        Hm = 0.5 * (Hm + Hm.T)
        b = arn.H[m, :m]
        theta, Y = np.linalg.eigh(Hm)
        order = np.argsort(sign * theta, kind="stable")
        theta, Y = theta[order], Y[:, order]
        res = np.abs(b @ Y)
        done = bool(np.all(res[:want] <= tol * np.maximum(1.0, np.abs(theta[:want]))))
        if done or m == dim or it == max_iter:
            break
        keep = min(max(want + (m - want) // 2, want), m - 2)
        arn.restart(Y, np.diag(theta), keep)
        start = keep

    X = arn.V[:, :m] @ Y[:, :want]
    pairs = [EigenPair(float(theta[c]), X[:, c] / np.linalg.norm(X[:, c]), float(res[c])) for c in range(want)]
    return EigenReport(pairs, it, done or m == dim, arn.matvecs)


def dense_eig_oracle(matrix, symmetric: bool = False) -> EigenReport:
    """Full spectrum by direct dense reduction (LAPACK).

    Symmetric spectra come in increasing order; general spectra by
    decreasing modulus. Reference solver for tests.
    """
    A = np.asarray(matrix.toarray() if hasattr(matrix, "toarray") else matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("square matrix required")
    n = A.shape[0]
    if n > DENSE_LIMIT:
        raise ValueError(f"dense oracle limited to n <= {DENSE_LIMIT}, got {n}")
    if n == 0:
        return EigenReport()
    if symmetric:
        vals, vecs = np.linalg.eigh(A)
    else:
        vals, vecs = np.linalg.eig(A)
        order = np.lexsort((-vals.real, -np.abs(vals)))
        vals, vecs = vals[order], vecs[:, order]
    pairs = []
    for c in range(n):
        v = vecs[:, c]
        value = vals[c]
        if not symmetric and is_real(value):
            value = float(value.real)
            v = _realify(v)
        elif symmetric:
            value = float(value)
        r = float(np.linalg.norm(A @ v - value * v))
        pairs.append(EigenPair(value, v, r))
    return EigenReport(pairs, 1, True, 0)
