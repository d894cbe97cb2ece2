"""Model parameters, the edge weight function and the detectability threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from pairclust.densities import (
    BinnedDensity,
    DiscreteDensity,
    GaussianDensity,
    MeasurementDensity,
    censored_pair,
)
from pairclust.errors import OutOfSupportError

# Denominators of the weight function below this are treated as outside the support.
SUPPORT_FLOOR = 1e-300
# Suggested value for ModelParams.density_floor when ingesting real data.
DENSITY_FLOOR = 1e-12

_QUAD_ABS_TOL = 1e-8
_QUAD_SIGMAS = 10.0


def same_density(a: MeasurementDensity, b: MeasurementDensity) -> bool:
    if a is b:
        return True
    if type(a) is not type(b):
        return False
    if isinstance(a, GaussianDensity):
        return a.mean == b.mean and a.variance == b.variance
    if isinstance(a, DiscreteDensity):
        return a.symbols.shape == b.symbols.shape and bool(
            np.all(a.symbols == b.symbols) and np.all(a.probs == b.probs)
        )
    return a.same_bins(b) and bool(np.all(a.masses == b.masses))


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Cluster count, sampling rate and pairwise densities.

    Either give the symmetric pair ``p_in``/``p_out`` or a full symmetric
    ``table`` with ``table[a][b]`` the density of measurements between an
    item of cluster ``a`` and one of cluster ``b``. ``density_floor`` (0 by
    default) raises every density value to at least that level, which lets
    ingested data contain measurements no density explains.
    """

    k: int
    alpha: float
    p_in: MeasurementDensity | None = None
    p_out: MeasurementDensity | None = None
    table: tuple[tuple[MeasurementDensity, ...], ...] | None = None
    density_floor: float = 0.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError("k must be an integer >= 2")
        if not self.alpha >= 0:
            raise ValueError("alpha must be nonnegative")
        if self.density_floor < 0:
            raise ValueError("density_floor must be nonnegative")
        if self.table is None:
            if self.p_in is None or self.p_out is None:
                raise ValueError("give either (p_in, p_out) or a density table")
        else:
            if self.p_in is not None or self.p_out is not None:
                raise ValueError("give either (p_in, p_out) or a density table, not both")
            table = tuple(tuple(row) for row in self.table)
            if len(table) != self.k or any(len(row) != self.k for row in table):
                raise ValueError("density table must be k x k")
            for a in range(self.k):
                for b in range(a + 1, self.k):
                    if not same_density(table[a][b], table[b][a]):
                        raise ValueError(f"density table not symmetric at ({a}, {b})")
            object.__setattr__(self, "table", table)

    @property
    def symmetric(self) -> bool:
        return self.table is None

    @property
    def identifiable(self) -> bool:
        """False when p_in and p_out are the same density (threshold is infinite)."""
        if not self.symmetric:
            return True
        return not same_density(self.p_in, self.p_out)

    def density(self, a: int, b: int) -> MeasurementDensity:
        if self.table is not None:
            return self.table[a][b]
        return self.p_in if a == b else self.p_out

    def with_alpha(self, alpha: float) -> "ModelParams":
        return ModelParams(self.k, alpha, self.p_in, self.p_out, self.table, self.density_floor)

    def _eval(self, d: MeasurementDensity, s) -> np.ndarray:
        v = np.asarray(d.pdf(s), dtype=float)
        return np.maximum(v, self.density_floor) if self.density_floor > 0 else v

    def symmetric_values(self, s) -> tuple[np.ndarray, np.ndarray]:
        """(p_in(s), p_out(s)) with the density floor applied."""
        if not self.symmetric:
            raise ValueError("model is not in symmetric mode")
        return self._eval(self.p_in, s), self._eval(self.p_out, s)

    def pair_likelihoods(self, s) -> np.ndarray:
        """Array ``L[e, a, b] = p_{a,b}(s_e)``; raises if some edge is unexplained."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty((s.size, self.k, self.k))
        cache: dict[int, np.ndarray] = {}
        for a in range(self.k):
            for b in range(self.k):
                d = self.density(a, b)
                if id(d) not in cache:
                    cache[id(d)] = self._eval(d, s)
                out[:, a, b] = cache[id(d)]
        dead = out.reshape(s.size, -1).max(axis=1) <= SUPPORT_FLOOR
        if np.any(dead):
            e = int(np.flatnonzero(dead)[0])
            raise OutOfSupportError(f"measurement {s[e]!r} on edge {e} has zero likelihood under every class pair")
        return out


def _weight_formula(p_in, p_out, k: int):
    den = p_in + (k - 1) * p_out
    if np.any(den <= SUPPORT_FLOOR):
        raise OutOfSupportError("measurement outside the support of p_in + (k-1) p_out")
    return (p_in - p_out) / den


def weight(density_pair: tuple[MeasurementDensity, MeasurementDensity], k: int, s) -> float | np.ndarray:
    """Likelihood contrast ``(p_in - p_out) / (p_in + (k-1) p_out)`` at ``s``.

    The result lies in ``[-1/(k-1), 1]``.
    """
    p_in, p_out = density_pair
    w = _weight_formula(np.asarray(p_in.pdf(s), float), np.asarray(p_out.pdf(s), float), k)
    return float(w) if np.ndim(w) == 0 else w


def edge_weights(params: ModelParams, s) -> np.ndarray:
    """Vectorized ``weight`` for a symmetric model, density floor included."""
    p_in, p_out = params.symmetric_values(np.atleast_1d(np.asarray(s, dtype=float)))
    return _weight_formula(p_in, p_out, params.k)


def inverse_critical_degree(params: ModelParams) -> float:
    """``1/alpha_c``: the support integral of (p_in - p_out)^2 / (k (p_in + (k-1) p_out))."""
    if not params.symmetric:
        raise ValueError("the threshold is defined for symmetric models only")
    p_in, p_out, k = params.p_in, params.p_out, params.k

    if isinstance(p_in, DiscreteDensity) and isinstance(p_out, DiscreteDensity):
        atoms = np.union1d(p_in.symbols, p_out.symbols)
        a, b = p_in.pdf(atoms), p_out.pdf(atoms)
        den = a + (k - 1) * b
        keep = den > 0
        return float(np.sum((a[keep] - b[keep]) ** 2 / den[keep])) / k

    if isinstance(p_in, BinnedDensity) and isinstance(p_out, BinnedDensity):
        if not p_in.same_bins(p_out):
            raise ValueError("binned densities must share bin edges")
        a, b = p_in.masses, p_out.masses
        den = a + (k - 1) * b
        keep = den > 0
        return float(np.sum((a[keep] - b[keep]) ** 2 / den[keep])) / k

    if isinstance(p_in, GaussianDensity) and isinstance(p_out, GaussianDensity):
        lo = min(d.mean - _QUAD_SIGMAS * d.std for d in (p_in, p_out))
        hi = max(d.mean + _QUAD_SIGMAS * d.std for d in (p_in, p_out))

        def integrand(s):
            a, b = float(p_in.pdf(s)), float(p_out.pdf(s))
            den = a + (k - 1) * b
            return (a - b) ** 2 / den if den > 0 else 0.0

        value, _ = integrate.quad(
            integrand, lo, hi, epsabs=_QUAD_ABS_TOL, limit=200,
            points=sorted({p_in.mean, p_out.mean}),
        )
        return value / k

    raise ValueError(f"unsupported density combination: {p_in.kind} / {p_out.kind}")


def critical_degree(params: ModelParams) -> float:
    """Detectability threshold ``alpha_c``; ``math.inf`` when p_in and p_out carry no contrast."""
    inv = inverse_critical_degree(params)
    return math.inf if inv <= 0 else 1.0 / inv


def censored_model(eps: float, alpha: float, k: int = 2) -> ModelParams:
    p_in, p_out = censored_pair(eps)
    return ModelParams(k, alpha, p_in, p_out)


def gaussian_model(
    alpha: float,
    k: int = 2,
    mean_in: float = 1.5,
    mean_out: float = 0.0,
    var_in: float = 1.0,
    var_out: float = 1.0,
) -> ModelParams:
    return ModelParams(k, alpha, GaussianDensity(mean_in, var_in), GaussianDensity(mean_out, var_out))
