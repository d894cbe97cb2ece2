"""Command-line entry point: ``pairclust generate|run|sweep|spectrum|cluster-points``.

Exit codes: 0 on success (including algorithmic failures recorded as CSV
rows), 2 for configuration or parse errors, 3 for I/O errors, 1 for any
other pipeline error.
"""

from __future__ import annotations

import functools
import sys

import click

from pairclust.bp import BpSettings
from pairclust.errors import ConfigurationError, PairclustError
from pairclust.estimation import cluster_points, read_points_csv
from pairclust.experiment import (
    RUN_COLUMNS,
    SPECTRUM_COLUMNS,
    SWEEP_COLUMNS,
    ExperimentConfig,
    load_config,
    run_method,
    run_sweep,
    spectrum_rows,
    sweep_rows,
    write_csv,
)
from pairclust.graph import read_graph, read_labels, sample_instance, write_graph, write_labels

EXIT_CONFIG = 2
EXIT_IO = 3


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigurationError as exc:
            click.echo(f"configuration error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except OSError as exc:
            click.echo(f"I/O error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except PairclustError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def common_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Flat key = value config file."),
        click.option("--model", help="censored:EPS or gaussian[:MEAN_IN,MEAN_OUT,VAR_IN,VAR_OUT]."),
        click.option("--seed", type=int, help="Base seed."),
        click.option("--n", "n", type=int, help="Number of items."),
        click.option("--alpha", help="Average degree, a number or a multiple of alpha_c such as 2ac."),
        click.option("--alpha-grid", help="Comma-separated, strictly increasing alphas (e.g. 0.5ac,2ac)."),
        click.option("--k", "k", type=int, help="Number of clusters."),
        click.option("--trials", type=int, help="Realizations per alpha."),
        click.option("--methods", help="Comma-separated subset of bp,nb,bh."),
        click.option("--out", type=click.Path(dir_okay=False), help="Output path (stdout when omitted)."),
        click.option("--format", "fmt", type=click.Choice(["csv"]), default="csv", show_default=True),
        click.option("--timing/--no-timing", default=None, help="Fill the wallclock_ms column (off by default)."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _config(config_path, **flags) -> ExperimentConfig:
    flags.pop("fmt", None)
    return load_config(config_path, flags)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=False)


@click.group()
def main():
    """Clustering from sparse pairwise measurements."""


@main.command()
@common_options
@click.option("--truth-out", type=click.Path(dir_okay=False), help="Truth labels path (default: OUT.truth).")
@_guard
def generate(config_path, truth_out, **flags):
    """Sample a planted instance; write the graph and its 1-based truth labels."""
    cfg = _config(config_path, **flags)
    if cfg.out is None:
        raise ConfigurationError("generate needs --out")
    alpha = cfg.alphas()[0]
    inst = sample_instance(cfg.params(alpha), cfg.n, cfg.seed)
    write_graph(cfg.out, inst.graph, cfg.k)
    write_labels(truth_out or f"{cfg.out}.truth", inst.truth)
    click.echo(f"wrote n={inst.graph.n} m={inst.graph.m} alpha={alpha!r} to {cfg.out}", err=True)


@main.command()
@common_options
@click.option("--graph", "graph_path", required=True, type=click.Path(dir_okay=False), help="Graph file.")
@click.option("--truth", "truth_path", type=click.Path(dir_okay=False), help="Truth labels (1-based).")
@click.option("--labels-out", type=click.Path(dir_okay=False), help="Write predicted labels of the last method here.")
@_guard
def run(config_path, graph_path, truth_path, labels_out, **flags):
    """Run each requested method on a graph file; one CSV row per method."""
    cfg = _config(config_path, **flags)
    graph, k = read_graph(graph_path)
    if k != cfg.k and flags.get("k") is None:
        cfg.k = k
    elif k != cfg.k:
        raise ConfigurationError(f"graph header has k={k} but k={cfg.k} was requested")
    truth = read_labels(truth_path) if truth_path else None
    if truth is not None and truth.size != graph.n:
        raise ConfigurationError(f"truth has {truth.size} labels for {graph.n} nodes")
    if cfg.alpha is not None:
        alpha = cfg.alphas()[0]
    else:
        alpha = 2.0 * graph.m / graph.n
    params = cfg.params(alpha)
    rows = []
    last = None
    for method in cfg.methods:
        row, result = run_method(method, graph, params, cfg.seed, cfg, truth)
        rows.append(row.as_csv())
        last = result if result is not None else last
    if labels_out and last is not None:
        write_labels(labels_out, last.labels)
    _emit(write_csv(rows, RUN_COLUMNS, cfg.out), cfg.out)


@main.command()
@common_options
@_guard
def sweep(config_path, **flags):
    """Overlap over an alpha grid: raw rows per trial plus mean/stderr aggregates."""
    cfg = _config(config_path, **flags)
    if not cfg.alpha_grid and cfg.alpha is None:
        raise ConfigurationError("sweep needs --alpha-grid (or --alpha)")
    result = run_sweep(cfg)
    _emit(write_csv(sweep_rows(result, cfg.n), SWEEP_COLUMNS, cfg.out), cfg.out)


@main.command()
@common_options
@_guard
def spectrum(config_path, **flags):
    """Leading NB Ritz values and smallest BH eigenvalues with the alpha/alpha_c markers."""
    cfg = _config(config_path, **flags)
    _emit(write_csv(spectrum_rows(cfg), SPECTRUM_COLUMNS, cfg.out), cfg.out)


@main.command("cluster-points")
@click.option("--points", "points_path", required=True, type=click.Path(dir_okay=False), help="CSV x1,...,xd[,label].")
@click.option("--header/--no-header", default=False, help="Skip a header row.")
@click.option("--label-column/--no-label-column", default=True, help="Last column holds training labels.")
@click.option("--alpha", type=float, default=10.0, show_default=True)
@click.option("--k", "k", type=int, default=2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--bandwidth", default="auto", show_default=True, help="Kernel width or 'auto'.")
@click.option("--bins", type=int, default=256, show_default=True)
@click.option("--bp-max-iter", type=int, default=200, show_default=True)
@click.option("--truth", "truth_path", type=click.Path(dir_okay=False), help="Full truth labels for an accuracy report.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Predicted labels (1-based).")
@click.option("--report", type=click.Path(dir_okay=False), help="Accuracy report CSV (stdout when omitted).")
@_guard
def cluster_points_cmd(points_path, header, label_column, alpha, k, seed, bandwidth, bins, bp_max_iter, truth_path, out, report):
    """Cluster a point cloud from a sparse random sample of pairwise distances."""
    if truth_path and not label_column:
        raise ConfigurationError("an accuracy report needs the label column to tell training from test points")
    if bandwidth != "auto":
        try:
            bandwidth = float(bandwidth)
        except ValueError as exc:
            raise ConfigurationError(f"bandwidth must be a number or 'auto', got {bandwidth!r}") from exc
    data = read_points_csv(points_path, header=header, label_column=label_column)
    truth = read_labels(truth_path) if truth_path else None
    if truth is not None and truth.size != data.n:
        raise ConfigurationError(f"truth has {truth.size} labels for {data.n} points")
    result = cluster_points(data, alpha, k, bandwidth, BpSettings(max_iter=bp_max_iter), seed, truth, bins)
    write_labels(out, result.labels)
    if truth is not None:
        d = result.diagnostics
        rows = [[str(data.n), str(data.training_ids.size), repr(alpha), str(seed), repr(d["accuracy"]), repr(float(result.overlap)), str(int(d["converged"]))]]
        text = write_csv(rows, ["n", "training", "alpha", "seed", "accuracy", "overlap", "converged"], report)
        _emit(text, report)


__all__ = ["main"]


if __name__ == "__main__":
    main()
