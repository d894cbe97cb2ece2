import math

import numpy as np
import pytest

from pairclust.errors import ConfigurationError, NoInformativeEigenvalueError
from pairclust.experiment import (
    SEED_STRIDE,
    ExperimentConfig,
    error_tag,
    load_config,
    parse_alpha,
    parse_alpha_grid,
    parse_config_text,
    parse_model,
    run_method,
    run_sweep,
    spectrum_rows,
    sweep_rows,
    thread_count,
    trial_seed,
)
from pairclust.graph import MeasurementGraph, sample_instance
from pairclust.model import critical_degree


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.methods == ("bp",) and cfg.trials == 1
        assert cfg.alphas() == [pytest.approx(2 * 1.5625)]

    @pytest.mark.parametrize(
        "kwargs",
        [{"methods": ""}, {"methods": "bp,xx"}, {"methods": "bp,bp"}, {"trials": 0}, {"k": 1}, {"n": 0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(**kwargs)

    def test_parse_text(self):
        values = parse_config_text("# comment\nn = 500\nalpha-grid = 0.5ac, 2ac  # trailing\nmethods = bp,nb\ntiming = yes\n")
        assert values == {"n": 500, "alpha_grid": "0.5ac, 2ac", "methods": "bp,nb", "timing": True}
        with pytest.raises(ConfigurationError):
            parse_config_text("nope = 1\n")
        with pytest.raises(ConfigurationError):
            parse_config_text("n 5\n")
        with pytest.raises(ConfigurationError):
            parse_config_text("n = five\n")

    def test_precedence(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("n = 500\ntrials = 3\nseed = 9\n")
        cfg = load_config(path, {"n": "700", "trials": None})
        assert (cfg.n, cfg.trials, cfg.seed, cfg.k) == (700, 3, 9, 2)

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "absent.cfg")


class TestParsing:
    def test_models(self):
        assert critical_degree(parse_model("censored:0.1", 2)) == pytest.approx(1.5625)
        assert critical_degree(parse_model("gaussian", 2)) == pytest.approx(2.63, abs=0.01)
        assert parse_model("gaussian:1.5,0,1,1", 3, 4.0).alpha == 4.0
        for bad in ("censored", "censored:x", "gaussian:1,2", "poisson:1"):
            with pytest.raises(ConfigurationError):
                parse_model(bad, 2)

    def test_alpha(self):
        assert parse_alpha("3", 1.5) == 3.0
        assert parse_alpha("2ac", 1.5) == 3.0
        assert parse_alpha("ac", 1.5) == 1.5
        for bad in ("-1", "abc", "inf"):
            with pytest.raises(ConfigurationError):
                parse_alpha(bad, 1.5)
        with pytest.raises(ConfigurationError):
            parse_alpha("2ac", math.inf)

    def test_grid(self):
        assert parse_alpha_grid("0.5ac,2ac", 2.0) == [1.0, 4.0]
        with pytest.raises(ConfigurationError):
            parse_alpha_grid("2ac,0.5ac", 2.0)
        with pytest.raises(ConfigurationError):
            parse_alpha_grid("1,1", 2.0)
        with pytest.raises(ConfigurationError):
            parse_alpha_grid(" , ", 2.0)

    def test_seeds_and_threads(self, monkeypatch):
        assert trial_seed(5, 0) == 5 and trial_seed(5, 2) == 5 + 2 * SEED_STRIDE
        monkeypatch.setenv("PAIRCLUST_THREADS", "3")
        assert thread_count() == 3
        monkeypatch.setenv("PAIRCLUST_THREADS", "many")
        with pytest.raises(ConfigurationError):
            thread_count()

    def test_error_tag(self):
        assert error_tag(NoInformativeEigenvalueError("x")) == "no-informative-eigenvalue"


class TestRunMethod:
    def test_edgeless_bp(self):
        g = MeasurementGraph(200, [], [], [])
        truth = np.random.default_rng(0).integers(0, 2, 200)
        row, _ = run_method("bp", g, parse_model("censored:0.1", 2, 0.0), 0, ExperimentConfig(), truth)
        assert row.error == "" and abs(row.overlap) < 0.2

    def test_nb_below_threshold_is_tagged(self):
        params = parse_model("censored:0.1", 2, 0.5 * 1.5625)
        inst = sample_instance(params, 2000, 1)
        row, result = run_method("nb", inst.graph, params, 1, ExperimentConfig(), inst.truth)
        assert result is None and math.isnan(row.overlap) and row.error == "no-informative-eigenvalue"
        assert row.as_csv()[4] == "nan"

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            run_method("xx", MeasurementGraph(2, [], [], []), parse_model("censored:0.1", 2), 0, ExperimentConfig())

    def test_timing_off_by_default(self):
        inst = sample_instance(parse_model("censored:0.1", 2, 3.0), 300, 0)
        assert run_method("bp", inst.graph, inst.params, 0, ExperimentConfig())[0].wallclock_ms is None
        assert run_method("bp", inst.graph, inst.params, 0, ExperimentConfig(timing=True))[0].wallclock_ms >= 0


class TestSweep:
    def test_row_counts_and_failures_count_as_zero(self):
        cfg = ExperimentConfig(n=1000, alpha_grid="0.5ac,4ac", trials=3, methods="bp,nb")
        result = run_sweep(cfg, threads=1)
        rows = sweep_rows(result, cfg.n)
        assert sum(r[0] == "raw" for r in rows) == 2 * 2 * 3
        assert sum(r[0] == "aggregate" for r in rows) == 2 * 2
        for agg in result.aggregate:
            scores = [0.0 if r.error else r.overlap for a, _, r in result.raw if a == agg["alpha"] and r.method == agg["method"]]
            assert agg["mean"] == pytest.approx(np.mean(scores), abs=1e-15)
            assert agg["stderr"] == pytest.approx(np.std(scores, ddof=1) / math.sqrt(3), abs=1e-15)
        low_nb = [agg for agg in result.aggregate if agg["method"] == "nb" and agg["alpha"] < 1.5625][0]
        assert low_nb["failures"] == 3 and low_nb["mean"] == 0.0

    def test_single_point_grid(self):
        result = run_sweep(ExperimentConfig(n=300, alpha_grid="2ac", methods="bp,nb,bh"), threads=1)
        assert len(result.aggregate) == 3

    def test_instances_shared_across_methods(self):
        result = run_sweep(ExperimentConfig(n=300, alpha="3", trials=2, methods="bp,nb"), threads=1)
        seeds = {(r.method, t): r.seed for _, t, r in result.raw}
        assert seeds[("bp", 1)] == seeds[("nb", 1)] == SEED_STRIDE

    def test_threads_do_not_change_output(self):
        cfg = ExperimentConfig(n=400, alpha_grid="1ac,3ac", trials=2, methods="bp,bh")
        a = sweep_rows(run_sweep(cfg, threads=1), cfg.n)
        b = sweep_rows(run_sweep(cfg, threads=3), cfg.n)
        assert a == b


class TestSpectrum:
    def test_edgeless_has_only_markers(self):
        rows = spectrum_rows(ExperimentConfig(n=50, alpha="0", methods="nb,bh"))
        assert [r[3] for r in rows] == ["marker", "marker"]

    def test_markers_and_rows(self):
        rows = spectrum_rows(ExperimentConfig(n=400, alpha="2ac", methods="nb,bh", spectrum_pairs=4))
        markers = {r[5]: float(r[6]) for r in rows if r[3] == "marker"}
        assert markers["alpha_over_ac"] == pytest.approx(2.0)
        assert markers["sqrt_alpha_over_ac"] == pytest.approx(math.sqrt(2.0))
        assert sum(r[3] == "nb" for r in rows) == 4 and sum(r[3] == "bh" for r in rows) == 4

    def test_needs_spectral_method(self):
        with pytest.raises(ConfigurationError):
            spectrum_rows(ExperimentConfig(n=50, methods="bp"))
