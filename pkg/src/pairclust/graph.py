"""Measurement graphs, the planted benchmark model and the text file formats.

Undirected edge ``e = (i, j, s)`` with ``i < j`` owns two directed ids:
``2e`` for ``i -> j`` and ``2e + 1`` for ``j -> i``. Every operator in the
package indexes directed edges this way, so the reverse of directed edge
``d`` is always ``d ^ 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from pairclust.errors import ConfigurationError, InvalidRateError
from pairclust.model import ModelParams


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class MeasurementGraph:
    """Immutable sparse undirected graph with one real measurement per edge."""

    n: int
    i: np.ndarray
    j: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.int64).ravel().copy()
        j = np.asarray(self.j, dtype=np.int64).ravel().copy()
        s = np.asarray(self.s, dtype=float).ravel().copy()
        if not (i.shape == j.shape == s.shape):
            raise ValueError("edge arrays must have equal length")
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        if i.size:
            if np.any(i >= j):
                raise ValueError("edges must satisfy i < j (no self-loops)")
            if i.min() < 0 or j.max() >= self.n:
                raise ValueError("node id out of range")
            key = i * self.n + j
            if np.unique(key).size != key.size:
                raise ValueError("duplicate edge")
        object.__setattr__(self, "i", _frozen(i))
        object.__setattr__(self, "j", _frozen(j))
        object.__setattr__(self, "s", _frozen(s))

    @property
    def m(self) -> int:
        return int(self.i.size)

    @cached_property
    def src(self) -> np.ndarray:
        """Source node of each directed edge."""
        out = np.empty(2 * self.m, dtype=np.int64)
        out[0::2], out[1::2] = self.i, self.j
        return _frozen(out)

    @cached_property
    def dst(self) -> np.ndarray:
        """Target node of each directed edge."""
        out = np.empty(2 * self.m, dtype=np.int64)
        out[0::2], out[1::2] = self.j, self.i
        return _frozen(out)

    @cached_property
    def degrees(self) -> np.ndarray:
        return _frozen(np.bincount(self.dst, minlength=self.n))

    @cached_property
    def _csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        order = np.argsort(self.src, kind="stable")
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.src, minlength=self.n), out=indptr[1:])
        return indptr, self.dst[order], order // 2

    def adjacency(self, node: int) -> list[tuple[int, int]]:
        """``(neighbor, edge_id)`` pairs of ``node``."""
        indptr, nbr, eid = self._csr
        lo, hi = indptr[node], indptr[node + 1]
        return list(zip(nbr[lo:hi].tolist(), eid[lo:hi].tolist()))

    def directed_id(self, a: int, b: int) -> int:
        """Directed id of ``a -> b``; KeyError if ``(a, b)`` is not an edge."""
        for nbr, e in self.adjacency(a):
            if nbr == b:
                return 2 * e + (0 if a < b else 1)
        raise KeyError((a, b))

    def with_measurements(self, s: np.ndarray) -> "MeasurementGraph":
        return MeasurementGraph(self.n, self.i, self.j, s)


@dataclass(frozen=True, eq=False)
class PlantedInstance:
    """A sampled graph together with its hidden labels (0-based, in ``range(k)``)."""

    graph: MeasurementGraph
    truth: np.ndarray
    params: ModelParams
    seed: int

    def __post_init__(self):
        truth = np.asarray(self.truth, dtype=np.int64).copy()
        if truth.shape != (self.graph.n,):
            raise ValueError("one label per node required")
        if truth.size and (truth.min() < 0 or truth.max() >= self.params.k):
            raise ValueError("labels must lie in range(k)")
        object.__setattr__(self, "truth", _frozen(truth))


def _pair_from_linear(lin: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Invert the row-major enumeration of pairs ``i < j`` of ``range(n)``."""
    # Row i starts at offset(i) = i*n - i*(i+1)/2.
    b = 2.0 * n - 1.0
    i = np.floor((b - np.sqrt(b * b - 8.0 * lin)) / 2.0).astype(np.int64)
    i = np.clip(i, 0, max(n - 2, 0))

    def offset(r):
        return r * n - r * (r + 1) // 2

    # float rounding can leave i off by one in either direction
    i = np.where(offset(i) > lin, i - 1, i)
    i = np.where(offset(i + 1) <= lin, i + 1, i)
    j = lin - offset(i) + i + 1
    return i, j


def sample_pairs(n: int, p: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Each unordered pair of ``range(n)`` independently with probability ``p``.

    Uses geometric skips over the pair sequence, so the cost is O(number of
    pairs kept). Pairs come out sorted by ``(i, j)``.
    """
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise InvalidRateError(f"edge probability {p} is not in [0, 1]")
    total = n * (n - 1) // 2
    if p == 0.0 or total == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy()
    chunks = []
    pos = -1
    expected = p * total
    batch = int(expected + 10.0 * math.sqrt(expected) + 16)
    while True:
        gaps = rng.geometric(p, size=batch)
        lin = pos + np.cumsum(gaps)
        keep = lin[lin < total]
        chunks.append(keep)
        if keep.size < lin.size:
            break
        pos = int(lin[-1])
    lin = np.concatenate(chunks).astype(np.int64)
    return _pair_from_linear(lin, n)


def _draw_measurements(params: ModelParams, ci: np.ndarray, cj: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    s = np.empty(ci.size)
    a, b = np.minimum(ci, cj), np.maximum(ci, cj)
    for x in range(params.k):
        for y in range(x, params.k):
            mask = (a == x) & (b == y)
            cnt = int(mask.sum())
            if cnt:
                s[mask] = params.density(x, y).sample(rng, cnt)
    return s


def sample_instance(params: ModelParams, n: int, seed: int) -> PlantedInstance:
    """Planted instance: uniform labels, G(n, alpha/n) edges, ``s_ij ~ p_{c_i, c_j}``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = params.alpha / n
    if p > 1.0:
        raise InvalidRateError(f"alpha/n = {p} exceeds 1")
    rng = np.random.default_rng(seed)
    truth = rng.integers(0, params.k, size=n)
    i, j = sample_pairs(n, p, rng)
    s = _draw_measurements(params, truth[i], truth[j], rng)
    return PlantedInstance(MeasurementGraph(n, i, j, s), truth, params, seed)


# -- text formats -----------------------------------------------------------

def format_graph(graph: MeasurementGraph, k: int) -> str:
    lines = [f"{graph.n} {graph.m} {k}"]
    lines.extend(f"{a} {b} {float(v)!r}" for a, b, v in zip(graph.i.tolist(), graph.j.tolist(), graph.s.tolist()))
    return "\n".join(lines) + "\n"


def write_graph(path: str | Path, graph: MeasurementGraph, k: int) -> None:
    Path(path).write_text(format_graph(graph, k), newline="\n")


def parse_graph(text: str) -> tuple[MeasurementGraph, int]:
    """Parse ``n m k`` followed by ``m`` lines ``i j s``; returns ``(graph, k)``."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or len(rows[0]) != 3:
        raise ConfigurationError("graph file must start with a header 'n m k'")
    try:
        n, m, k = (int(x) for x in rows[0])
        body = rows[1:]
        if len(body) != m:
            raise ConfigurationError(f"header announces {m} edges, found {len(body)}")
        if any(len(r) != 3 for r in body):
            raise ConfigurationError("edge lines must read 'i j s'")
        i = np.array([int(r[0]) for r in body], dtype=np.int64)
        j = np.array([int(r[1]) for r in body], dtype=np.int64)
        s = np.array([float(r[2]) for r in body], dtype=float)
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"malformed graph file: {exc}") from exc
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    try:
        return MeasurementGraph(n, lo, hi, s), k
    except ValueError as exc:
        raise ConfigurationError(f"invalid graph: {exc}") from exc


def read_graph(path: str | Path) -> tuple[MeasurementGraph, int]:
    return parse_graph(Path(path).read_text())


def write_labels(path: str | Path, labels: np.ndarray) -> None:
    """One label per line, written 1-based."""
    body = "".join(f"{int(c) + 1}\n" for c in np.asarray(labels))
    Path(path).write_text(body, newline="\n")


def read_labels(path: str | Path) -> np.ndarray:
    """Inverse of ``write_labels``: returns 0-based labels."""
    try:
        vals = [int(ln) for ln in Path(path).read_text().split()]
    except ValueError as exc:
        raise ConfigurationError(f"malformed labels file: {exc}") from exc
    labels = np.array(vals, dtype=np.int64) - 1
    if labels.size and labels.min() < 0:
        raise ConfigurationError("labels must be >= 1")
    return labels
