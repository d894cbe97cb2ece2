"""Pairwise measurement densities.

Three representations are supported: a finite alphabet with a probability
table, a Gaussian with closed-form evaluation, and a binned empirical table
(piecewise constant over uniform or arbitrary bin edges). Continuous densities
other than the Gaussian should be supplied in binned form.

Evaluation is vectorized: ``pdf`` accepts scalars or arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DiscreteDensity:
    """Probability table over a finite set of real-valued symbols."""

    symbols: np.ndarray
    probs: np.ndarray
    kind: str = field(default="discrete", init=False)

    def __post_init__(self):
        symbols = np.asarray(self.symbols, dtype=float).ravel()
        probs = np.asarray(self.probs, dtype=float).ravel()
        if symbols.shape != probs.shape or symbols.size == 0:
            raise ValueError("symbols and probs must be non-empty and of equal length")
        if len(np.unique(symbols)) != symbols.size:
            raise ValueError("duplicate symbols")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > _SUM_TOL:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        order = np.argsort(symbols)
        symbols, probs = symbols[order], probs[order]
        symbols.flags.writeable = False
        probs.flags.writeable = False
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_dict(cls, table: dict[float, float]) -> "DiscreteDensity":
        return cls(np.array(list(table.keys()), dtype=float), np.array(list(table.values()), dtype=float))

    def pdf(self, s):
        s = np.asarray(s, dtype=float)
        idx = np.clip(np.searchsorted(self.symbols, s), 0, self.symbols.size - 1)
        return np.where(self.symbols[idx] == s, self.probs[idx], 0.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.symbols, size=size, p=self.probs)


@dataclass(frozen=True)
class GaussianDensity:
    mean: float
    variance: float
    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("variance must be positive")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def pdf(self, s):
        z = (np.asarray(s, dtype=float) - self.mean) / self.std
        return np.exp(-0.5 * z * z) / (self.std * math.sqrt(2.0 * math.pi))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(self.mean, self.std, size=size)


@dataclass(frozen=True, eq=False)
class BinnedDensity:
    """Piecewise-constant table over bins ``[edges[b], edges[b+1])``.

    ``pdf`` returns the *mass* of the bin containing ``s`` (the last bin is
    closed on the right); points outside the edges evaluate to 0. Densities
    that are compared against each other must share the same edges, so that
    mass ratios equal density ratios.
    """

    edges: np.ndarray
    masses: np.ndarray
    kind: str = field(default="binned", init=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float).ravel()
        masses = np.asarray(self.masses, dtype=float).ravel()
        if edges.size != masses.size + 1 or masses.size == 0:
            raise ValueError("need len(edges) == len(masses) + 1 >= 2")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if np.any(masses < 0) or abs(masses.sum() - 1.0) > _SUM_TOL:
            raise ValueError("bin masses must be nonnegative and sum to 1")
        edges.flags.writeable = False
        masses.flags.writeable = False
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "masses", masses)

    def bin_index(self, s) -> np.ndarray:
        """Bin containing each value, or -1 when outside the edges."""
        s = np.asarray(s, dtype=float)
        idx = np.searchsorted(self.edges, s, side="right") - 1
        idx = np.where(s == self.edges[-1], self.masses.size - 1, idx)
        inside = (idx >= 0) & (idx < self.masses.size)
        return np.where(inside, idx, -1)

    def pdf(self, s):
        idx = self.bin_index(s)
        return np.where(idx >= 0, self.masses[np.maximum(idx, 0)], 0.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        b = rng.choice(self.masses.size, size=size, p=self.masses)
        return rng.uniform(self.edges[b], self.edges[b + 1])

    def same_bins(self, other: "BinnedDensity") -> bool:
        return self.edges.shape == other.edges.shape and bool(np.all(self.edges == other.edges))


MeasurementDensity = Union[DiscreteDensity, GaussianDensity, BinnedDensity]


def density_eval(d: MeasurementDensity, s) -> float | np.ndarray:
    """Mass (discrete, binned) or density (gaussian) of ``d`` at ``s``."""
    out = d.pdf(s)
    return float(out) if np.ndim(out) == 0 else out


def censored_pair(eps: float) -> tuple[DiscreteDensity, DiscreteDensity]:
    """(p_in, p_out) on {-1, +1}: a same-cluster pair reads +1 w.p. 1 - eps."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    p_in = DiscreteDensity(np.array([-1.0, 1.0]), np.array([eps, 1.0 - eps]))
    p_out = DiscreteDensity(np.array([-1.0, 1.0]), np.array([1.0 - eps, eps]))
    return p_in, p_out
