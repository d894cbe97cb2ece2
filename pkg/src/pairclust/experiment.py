"""Experiment plumbing shared by the CLI: configuration, model shorthands,
seeding, per-method runs, alpha sweeps and spectrum dumps.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from pairclust.bethe_hessian import build_H, bh_cluster
from pairclust.bp import BpSettings, bp_cluster
from pairclust.clustering import ClusterResult, KMeansSettings
from pairclust.densities import GaussianDensity, censored_pair
from pairclust.eigen import dense_eig_oracle, lanczos_symmetric_extremal
from pairclust.errors import ConfigurationError, PairclustError
from pairclust.graph import MeasurementGraph, sample_instance
from pairclust.model import ModelParams, critical_degree
from pairclust.nonbacktracking import NbOperator, SpectralSettings, nb_cluster, nb_krylov

METHODS = ("bp", "nb", "bh")
SEED_STRIDE = 1_000_003
THREADS_ENV = "PAIRCLUST_THREADS"


# -- configuration ----------------------------------------------------------

@dataclass
class ExperimentConfig:
    model: str = "censored:0.1"
    k: int = 2
    n: int = 10_000
    alpha: str | None = None
    alpha_grid: str | None = None
    trials: int = 1
    methods: tuple[str, ...] = ("bp",)
    seed: int = 0
    out: str | None = None
    bp_max_iter: int = 200
    bp_tol: float = 1e-6
    bp_damping: float = 0.0
    eig_tol: float = 1e-8
    eig_max_iter: int = 60
    max_pairs: int | None = None
    weight_clamp: float | None = None
    kmeans_restarts: int = 10
    spectrum_pairs: int = 6
    timing: bool = False

    def __post_init__(self):
        if isinstance(self.methods, str):
            self.methods = tuple(m.strip() for m in self.methods.split(",") if m.strip())
        self.methods = tuple(self.methods)
        if not self.methods:
            raise ConfigurationError("methods must be non-empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigurationError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigurationError("methods listed twice")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.k < 2:
            raise ConfigurationError("k must be >= 2")
        if self.n < 1:
            raise ConfigurationError("n must be >= 1")

    def params(self, alpha: float = 0.0) -> ModelParams:
        return parse_model(self.model, self.k, alpha)

    def critical(self) -> float:
        return critical_degree(self.params())

    def alphas(self) -> list[float]:
        """The alpha grid if given, else the single alpha (default 2 alpha_c)."""
        ac = self.critical()
        if self.alpha_grid:
            return parse_alpha_grid(self.alpha_grid, ac)
        return [parse_alpha(self.alpha or "2ac", ac)]

    def bp_settings(self) -> BpSettings:
        return BpSettings(max_iter=self.bp_max_iter, tol=self.bp_tol, damping=self.bp_damping)

    def spectral_settings(self) -> SpectralSettings:
        return SpectralSettings(
            tol=self.eig_tol, max_pairs=self.max_pairs, max_iter=self.eig_max_iter, weight_clamp=self.weight_clamp
        )

    def kmeans_settings(self) -> KMeansSettings:
        return KMeansSettings(restarts=self.kmeans_restarts)


_BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _coerce(name: str, raw: Any) -> Any:
    if raw is None or not isinstance(raw, str):
        return raw
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    kind = kinds[name]
    text = raw.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "int | None":
            return None if text.lower() in ("", "none") else int(text)
        if kind == "float | None":
            return None if text.lower() in ("", "none") else float(text)
        if kind == "bool":
            return _BOOL_WORDS[text.lower()]
    except (ValueError, KeyError) as exc:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from exc
    return text


def parse_config_text(text: str) -> dict[str, Any]:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes in keys read as underscores."""
    known = {f.name for f in fields(ExperimentConfig)}
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Defaults, then the file, then non-None ``overrides`` (CLI flags)."""
    values: dict[str, Any] = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, value)
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def parse_model(spec: str, k: int, alpha: float = 0.0) -> ModelParams:
    """``censored:EPS`` or ``gaussian[:MEAN_IN,MEAN_OUT,VAR_IN,VAR_OUT]`` (default 1.5,0,1,1)."""
    name, _, args = spec.strip().partition(":")
    try:
        nums = [float(x) for x in args.split(",")] if args.strip() else []
        if name == "censored":
            if len(nums) != 1:
                raise ConfigurationError("censored model takes one argument, e.g. censored:0.1")
            p_in, p_out = censored_pair(nums[0])
            return ModelParams(k, alpha, p_in, p_out)
        if name == "gaussian":
            if nums and len(nums) != 4:
                raise ConfigurationError("gaussian model takes MEAN_IN,MEAN_OUT,VAR_IN,VAR_OUT")
            mi, mo, vi, vo = nums or [1.5, 0.0, 1.0, 1.0]
            return ModelParams(k, alpha, GaussianDensity(mi, vi), GaussianDensity(mo, vo))
    except ConfigurationError:
        raise
    except ValueError as exc:
        raise ConfigurationError(f"bad model spec {spec!r}: {exc}") from exc
    raise ConfigurationError(f"unknown model {name!r}; use censored:EPS or gaussian:...")


def parse_alpha(token: str, alpha_c: float) -> float:
    """A number, or a multiple of the critical degree written ``<x>ac``."""
    text = str(token).strip().lower()
    try:
        if text.endswith("ac"):
            if not math.isfinite(alpha_c):
                raise ConfigurationError("alpha relative to alpha_c needs a model with finite alpha_c")
            scale = text[:-2].strip()
            value = (float(scale) if scale else 1.0) * alpha_c
        else:
            value = float(text)
    except ValueError as exc:
        raise ConfigurationError(f"bad alpha {token!r}") from exc
    if not value >= 0 or not math.isfinite(value):
        raise ConfigurationError(f"alpha must be finite and >= 0, got {token!r}")
    return value


def parse_alpha_grid(text: str, alpha_c: float) -> list[float]:
    grid = [parse_alpha(tok, alpha_c) for tok in str(text).split(",") if tok.strip()]
    if not grid:
        raise ConfigurationError("empty alpha grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigurationError("alpha grid must be strictly increasing")
    return grid


def trial_seed(base: int, trial: int) -> int:
    return base + trial * SEED_STRIDE


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc


# -- method runs ------------------------------------------------------------

RUN_COLUMNS = ["method", "n", "alpha", "seed", "overlap", "converged_or_r", "wallclock_ms", "error"]


def error_tag(exc: BaseException) -> str:
    """``NoInformativeEigenvalueError`` -> ``no-informative-eigenvalue``."""
    name = type(exc).__name__.removesuffix("Error")
    out = []
    for ch in name:
        if ch.isupper() and out:
            out.append("-")
        out.append(ch.lower())
    return "".join(out)


@dataclass
class MethodRow:
    method: str
    n: int
    alpha: float
    seed: int
    overlap: float = math.nan
    converged_or_r: int | None = None
    wallclock_ms: float | None = None
    error: str = ""

    def as_csv(self) -> list[str]:
        return [
            self.method,
            str(self.n),
            _num(self.alpha),
            str(self.seed),
            _num(self.overlap),
            "" if self.converged_or_r is None else str(self.converged_or_r),
            "" if self.wallclock_ms is None else f"{self.wallclock_ms:.1f}",
            self.error,
        ]


def _num(x: float | None) -> str:
    if x is None:
        return ""
    return "nan" if math.isnan(x) else repr(float(x))


def run_method(
    method: str,
    graph: MeasurementGraph,
    params: ModelParams,
    seed: int,
    config: ExperimentConfig,
    truth: np.ndarray | None = None,
) -> tuple[MethodRow, ClusterResult | None]:
    """Run one method; algorithmic failures become a row with ``overlap = nan`` and an error tag."""
    row = MethodRow(method, graph.n, params.alpha, seed)
    start = time.perf_counter()
    result = None
    try:
        if method == "bp":
            result = bp_cluster(graph, params, seed, truth, config.bp_settings())
            row.converged_or_r = int(result.diagnostics["converged"])
        elif method == "nb":
            result = nb_cluster(graph, params, config.kmeans_settings(), seed, truth, config.spectral_settings())
            row.converged_or_r = result.diagnostics["r"]
        elif method == "bh":
            result = bh_cluster(graph, params, config.kmeans_settings(), seed, truth, config.spectral_settings())
            row.converged_or_r = result.diagnostics["r"]
        else:
            raise ConfigurationError(f"unknown method {method!r}")
        if result.overlap is not None:
            row.overlap = float(result.overlap)
    except ConfigurationError:
        raise
    except PairclustError as exc:
        row.error = error_tag(exc)
    if config.timing:
        row.wallclock_ms = 1000.0 * (time.perf_counter() - start)
    return row, result


def write_csv(rows: list[list[str]], header: list[str], out: str | Path | None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text, newline="\n")
    return text


# -- sweeps -----------------------------------------------------------------

SWEEP_COLUMNS = [
    "kind", "method", "n", "alpha", "alpha_over_ac", "trial", "seed",
    "overlap", "stderr", "trials", "failures", "converged_or_r", "wallclock_ms", "error",
]


@dataclass
class SweepResult:
    raw: list[tuple[float, int, MethodRow]] = field(default_factory=list)  # (alpha, trial, row)
    aggregate: list[dict[str, Any]] = field(default_factory=list)
    alpha_c: float = math.inf


def _sweep_cell(config: ExperimentConfig, alpha: float, trial: int) -> list[tuple[float, int, MethodRow]]:
    # one fresh instance per (alpha, trial), shared by the methods
    params = config.params(alpha)
    seed = trial_seed(config.seed, trial)
    inst = sample_instance(params, config.n, seed)
    return [(alpha, trial, run_method(m, inst.graph, params, seed, config, inst.truth)[0]) for m in config.methods]


def run_sweep(config: ExperimentConfig, threads: int | None = None) -> SweepResult:
    """Every ``(alpha, trial, method)`` on fresh instances; failures count as overlap 0 in the means."""
    alphas = config.alphas()
    cells = [(a, t) for a in alphas for t in range(config.trials)]
    threads = thread_count() if threads is None else threads
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda c: _sweep_cell(config, *c), cells))
    else:
        chunks = [_sweep_cell(config, a, t) for a, t in cells]
    order = {m: i for i, m in enumerate(config.methods)}
    raw = sorted((x for chunk in chunks for x in chunk), key=lambda x: (x[0], order[x[2].method], x[1]))
    result = SweepResult(raw=raw, alpha_c=config.critical())
    for alpha in alphas:
        for method in config.methods:
            rows = [r for a, _, r in raw if a == alpha and r.method == method]
            scores = np.array([0.0 if r.error else (r.overlap if not math.isnan(r.overlap) else 0.0) for r in rows])
            stderr = float(scores.std(ddof=1) / math.sqrt(scores.size)) if scores.size > 1 else 0.0
            result.aggregate.append(
                {
                    "method": method,
                    "alpha": alpha,
                    "mean": float(scores.mean()),
                    "stderr": stderr,
                    "trials": scores.size,
                    "failures": sum(1 for r in rows if r.error),
                }
            )
    return result


def sweep_rows(result: SweepResult, n: int) -> list[list[str]]:
    ac = result.alpha_c
    ratio = (lambda a: _num(a / ac)) if math.isfinite(ac) else (lambda a: "")
    out = []
    for alpha, trial, r in result.raw:
        out.append(
            ["raw", r.method, str(r.n), _num(alpha), ratio(alpha), str(trial), str(r.seed), _num(r.overlap), "", "", "",
             "" if r.converged_or_r is None else str(r.converged_or_r),
             "" if r.wallclock_ms is None else f"{r.wallclock_ms:.1f}", r.error]
        )
    for agg in result.aggregate:
        out.append(
            ["aggregate", agg["method"], str(n), _num(agg["alpha"]), ratio(agg["alpha"]), "", "", _num(agg["mean"]),
             _num(agg["stderr"]), str(agg["trials"]), str(agg["failures"]), "", "", ""]
        )
    return out


# -- spectrum dumps ---------------------------------------------------------

SPECTRUM_COLUMNS = ["alpha", "trial", "seed", "kind", "index", "name", "re", "im", "is_real", "residual", "error"]


def spectrum_rows(config: ExperimentConfig) -> list[list[str]]:
    """Leading NB Ritz values, smallest BH eigenvalues at x = 1, and the analytic markers."""
    if not any(m in ("nb", "bh") for m in config.methods):
        raise ConfigurationError("spectrum needs nb or bh among the methods")
    ac = config.critical()
    rows: list[list[str]] = []
    for alpha in config.alphas():
        for trial in range(config.trials):
            seed = trial_seed(config.seed, trial)
            params = config.params(alpha)
            inst = sample_instance(params, config.n, seed)
            head = [_num(alpha), str(trial), str(seed)]
            if math.isfinite(ac):
                rows.append(head + ["marker", "", "alpha_over_ac", _num(alpha / ac), "0.0", "1", "", ""])
                rows.append(head + ["marker", "", "sqrt_alpha_over_ac", _num(math.sqrt(alpha / ac)), "0.0", "1", "", ""])
            for method in config.methods:
                if method == "nb":
                    rows.extend(head + r for r in _nb_spectrum(inst.graph, params, config, seed))
                elif method == "bh":
                    rows.extend(head + r for r in _bh_spectrum(inst.graph, params, config, seed))
    return rows


def _nb_spectrum(graph: MeasurementGraph, params: ModelParams, config: ExperimentConfig, seed: int) -> list[list[str]]:
    if graph.m == 0:
        return []
    try:
        report = nb_krylov(NbOperator.from_params(graph, params), config.spectrum_pairs, config.eig_tol, seed, config.eig_max_iter)
    except PairclustError as exc:
        return [["nb", "", "", "", "", "", "", error_tag(exc)]]
    return [
        ["nb", str(idx), "ritz", _num(p.value.real), _num(p.value.imag), str(int(p.is_real)), _num(p.residual), ""]
        for idx, p in enumerate(report.pairs)
    ]


def _bh_spectrum(graph: MeasurementGraph, params: ModelParams, config: ExperimentConfig, seed: int) -> list[list[str]]:
    if graph.m == 0:
        return []
    try:
        H = build_H(graph, params, 1.0, clamp=config.weight_clamp)
        want = min(config.spectrum_pairs, H.n)
        if H.n < 500:
            pairs = dense_eig_oracle(H.matrix, symmetric=True).pairs[:want]
        else:
            pairs = lanczos_symmetric_extremal(H.as_linear_map(), "smallest", want, config.eig_tol, seed=seed).pairs
    except PairclustError as exc:
        return [["bh", "", "", "", "", "", "", error_tag(exc)]]
    return [
        ["bh", str(idx), "smallest", _num(p.value.real), "0.0", "1", _num(p.residual), ""]
        for idx, p in enumerate(pairs)
    ]


__all__ = [
    "ExperimentConfig",
    "MethodRow",
    "SweepResult",
    "error_tag",
    "load_config",
    "parse_alpha",
    "parse_alpha_grid",
    "parse_config_text",
    "parse_model",
    "run_method",
    "run_sweep",
    "spectrum_rows",
    "sweep_rows",
    "thread_count",
    "trial_seed",
    "write_csv",
]
