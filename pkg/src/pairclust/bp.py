"""Belief propagation on the directed edges of a measurement graph.

Messages are stored as a ``(2m, k)`` array whose row ``d`` is the message
along directed edge ``d`` (see ``pairclust.graph`` for the indexing).
Updates are synchronous. Each incoming factor
``f[d](c) = sum_c' p_{c,c'}(s) P[d](c')`` is rescaled to max entry 1 and
the per-node products are accumulated as sums of logs with exact zeros
counted separately, so excluding one factor is a subtraction and
zero-likelihood evidence (e.g. clamped nodes) stays exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pairclust.clustering import ClusterResult, overlap
from pairclust.errors import NumericalUnderflowError, OutOfSupportError
from pairclust.graph import MeasurementGraph
from pairclust.model import ModelParams

_UNDERFLOW = 1e-300


@dataclass
class BpReport:
    iterations: int
    final_delta: float
    converged: bool


@dataclass
class BpSettings:
    max_iter: int = 200
    tol: float = 1e-6
    damping: float = 0.0
    noise: float = 0.01


def bp_init(graph: MeasurementGraph, k: int, seed: int, noise: float = 0.01) -> np.ndarray:
    """Uniform messages plus i.i.d. uniform noise in ``[-noise, noise]``, renormalized."""
    if not 0.0 <= noise < 1.0 / k:
        raise ValueError("noise must lie in [0, 1/k)")
    msgs = np.full((2 * graph.m, k), 1.0 / k)
    if noise > 0:
        rng = np.random.default_rng(seed)
        msgs += rng.uniform(-noise, noise, size=msgs.shape)
        msgs /= msgs.sum(1, keepdims=True)
    return msgs


class BeliefPropagation:
    """Precomputed likelihood tables for one (graph, params) pair.

    ``node_prior`` (n x k, optional) multiplies into every message leaving a
    node and into its marginal; a one-hot row clamps that node's label.
    """

    def __init__(self, graph: MeasurementGraph, params: ModelParams, node_prior: np.ndarray | None = None):
        self.graph = graph
        self.params = params
        self.k = params.k
        self.edge_of = np.arange(2 * graph.m) // 2
        self.rev = np.arange(2 * graph.m) ^ 1
        if params.symmetric:
            p_in, p_out = params.symmetric_values(graph.s)
            self._p_out = p_out[self.edge_of]
            self._p_diff = (p_in - p_out)[self.edge_of]
            if graph.m and np.any(np.maximum(p_in, p_out) <= _UNDERFLOW):
                raise OutOfSupportError("some measurement has zero likelihood under p_in and p_out")
            self._lik = None
        else:
            self._lik = params.pair_likelihoods(graph.s) if graph.m else np.zeros((0, self.k, self.k))
        if node_prior is not None:
            prior = np.asarray(node_prior, dtype=float)
            if prior.shape != (graph.n, self.k) or np.any(prior < 0):
                raise ValueError("node_prior must be a nonnegative (n, k) array")
            self._prior_log, self._prior_zero = _split_log(prior)
        else:
            self._prior_log = np.zeros((graph.n, self.k))
            self._prior_zero = np.zeros((graph.n, self.k), dtype=np.int64)

    def factors(self, msgs: np.ndarray) -> np.ndarray:
        """Incoming factor for every directed edge, rescaled to max entry 1."""
        if self._lik is None:
            # p_out * sum(P) + (p_in - p_out) * P: identical arithmetic for every label
            f = self._p_out[:, None] * msgs.sum(1, keepdims=True) + self._p_diff[:, None] * msgs
        else:
            f = np.einsum("dab,db->da", self._lik[self.edge_of], msgs)
        top = f.max(1, keepdims=True)
        if np.any(top <= _UNDERFLOW):
            d = int(np.flatnonzero(top[:, 0] <= _UNDERFLOW)[0])
            raise NumericalUnderflowError(f"incoming factor on directed edge {d} vanished")
        return f / top

    def _node_totals(self, flog: np.ndarray, fzero: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = self.graph
        tlog = self._prior_log.copy()
        tzero = self._prior_zero.copy()
        for c in range(self.k):
            tlog[:, c] += np.bincount(g.dst, weights=flog[:, c], minlength=g.n)
            tzero[:, c] += np.bincount(g.dst, weights=fzero[:, c], minlength=g.n).astype(np.int64)
        return tlog, tzero

    def sweep(self, msgs: np.ndarray) -> tuple[np.ndarray, float]:
        """One synchronous update of all messages; returns (new, max abs change)."""
        if msgs.shape[0] == 0:
            return msgs.copy(), 0.0
        flog, fzero = _split_log(self.factors(msgs))
        tlog, tzero = self._node_totals(flog, fzero)
        src = self.graph.src
        # message i->j excludes the factor arriving along j->i
        new = _normalize(tlog[src] - flog[self.rev], tzero[src] - fzero[self.rev], "message")
        return new, float(np.abs(new - msgs).max())

    def marginals(self, msgs: np.ndarray) -> np.ndarray:
        if msgs.shape[0] == 0:
            return _normalize(self._prior_log, self._prior_zero, "marginal")
        flog, fzero = _split_log(self.factors(msgs))
        tlog, tzero = self._node_totals(flog, fzero)
        return _normalize(tlog, tzero, "marginal")

    def run(self, seed: int = 0, settings: BpSettings | None = None, init: np.ndarray | None = None):
        s = settings or BpSettings()
        if s.max_iter < 1 or not s.tol > 0 or not 0.0 <= s.damping < 1.0:
            raise ValueError("need max_iter >= 1, tol > 0, damping in [0, 1)")
        msgs = bp_init(self.graph, self.k, seed, s.noise) if init is None else np.array(init, dtype=float)
        delta = 0.0
        it = 0
        for it in range(1, s.max_iter + 1):
            upd, _ = self.sweep(msgs)
            if s.damping > 0:
                upd = (1.0 - s.damping) * upd + s.damping * msgs
                upd /= upd.sum(1, keepdims=True)
            delta = float(np.abs(upd - msgs).max()) if msgs.size else 0.0
            msgs = upd
            if delta < s.tol:
                break
        return self.marginals(msgs), msgs, BpReport(it, delta, delta < s.tol)


def _split_log(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    zero = values <= 0
    return np.log(np.where(zero, 1.0, values)), zero.astype(np.int64)


def _normalize(logs: np.ndarray, zeros: np.ndarray, what: str) -> np.ndarray:
    alive = zeros == 0
    shifted = np.where(alive, logs, -np.inf)
    top = shifted.max(1, keepdims=True)
    if np.any(~np.isfinite(top)):
        row = int(np.flatnonzero(~np.isfinite(top[:, 0]))[0])
        raise NumericalUnderflowError(f"{what} row {row} has no admissible label")
    out = np.where(alive, np.exp(shifted - top), 0.0)
    out /= out.sum(1, keepdims=True)
    return out


def bp_sweep(graph: MeasurementGraph, params: ModelParams, messages: np.ndarray) -> tuple[np.ndarray, float]:
    return BeliefPropagation(graph, params).sweep(messages)


def bp_run(
    graph: MeasurementGraph,
    params: ModelParams,
    seed: int = 0,
    max_iter: int = 200,
    tol: float = 1e-6,
    damping: float = 0.0,
    noise: float = 0.01,
    node_prior: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, BpReport]:
    """Iterate damped sweeps until the max message change drops below ``tol``.

    Returns ``(marginals, messages, report)``. Non-convergence is reported
    in ``report.converged``, not raised.
    """
    bp = BeliefPropagation(graph, params, node_prior)
    return bp.run(seed, BpSettings(max_iter, tol, damping, noise))


def decode_marginals(marginals: np.ndarray) -> np.ndarray:
    """Per-node argmax; ties go to the smallest label."""
    return np.asarray(marginals).argmax(1).astype(np.int64)


def bp_cluster(
    graph: MeasurementGraph,
    params: ModelParams,
    seed: int = 0,
    truth: np.ndarray | None = None,
    settings: BpSettings | None = None,
) -> ClusterResult:
    marg, _, report = BeliefPropagation(graph, params).run(seed, settings)
    labels = decode_marginals(marg)
    return ClusterResult(
        labels=labels,
        overlap=overlap(labels, truth, params.k) if truth is not None else None,
        method="bp",
        diagnostics={"iterations": report.iterations, "final_delta": report.final_delta, "converged": report.converged},
    )
