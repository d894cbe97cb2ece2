"""Acceptance criteria at desk scale.

Each test prints one ``PASS``/``FAIL`` line and records it; the lines are
repeated in the terminal summary. Run just this file with
``pytest tests/test_acceptance.py -v`` or as a script with
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import sys

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from pairclust.bethe_hessian import build_H, correspondence_check
from pairclust.bp import bp_run
from pairclust.clustering import overlap, sign_decode
from pairclust.eigen import LinearMap, dense_eig_oracle, krylov_nonsymmetric, lanczos_symmetric_extremal
from pairclust.estimation import cluster_points, two_blobs
from pairclust.experiment import ExperimentConfig, run_sweep, trial_seed
from pairclust.graph import sample_instance
from pairclust.model import censored_model, critical_degree, gaussian_model
from pairclust.nonbacktracking import NbOperator, c_matvec, nb_krylov, nb_leading_spectrum

sys.path.insert(0, str(__import__("pathlib").Path(__file__).parent))
from conftest import enumerate_posterior, random_discrete_table, random_tree  # noqa: E402

pytestmark = pytest.mark.slow

RESULTS: list[str] = []
N_LARGE = 10_000
EPS = 0.1
AC_CENSORED = (1 - 2 * EPS) ** -2


def report(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)


# -- shared large runs -------------------------------------------------------

@pytest.fixture(scope="module")
def censored_low():
    cfg = ExperimentConfig(model=f"censored:{EPS}", n=N_LARGE, alpha="0.5ac", trials=10, methods="bp,nb,bh")
    return run_sweep(cfg, threads=1)


@pytest.fixture(scope="module")
def censored_high():
    cfg = ExperimentConfig(model=f"censored:{EPS}", n=N_LARGE, alpha="2ac", trials=20, methods="bp,nb,bh")
    return run_sweep(cfg, threads=1)


@pytest.fixture(scope="module")
def gaussian_sweep():
    cfg = ExperimentConfig(model="gaussian", n=N_LARGE, alpha="6", trials=20, methods="bp,nb,bh")
    return run_sweep(cfg, threads=1)


@pytest.fixture(scope="module")
def nb_spectra():
    """Leading three Ritz pairs of B on 10 censored instances at each side of the threshold."""
    out = {}
    for mult in (2.0, 0.5):
        runs = []
        for t in range(10):
            seed = trial_seed(0, t)
            inst = sample_instance(censored_model(EPS, mult * AC_CENSORED), N_LARGE, seed)
            op = NbOperator.from_params(inst.graph, inst.params)
            runs.append((inst, op, nb_krylov(op, want=3, tol=1e-8, seed=seed, max_iter=150)))
        out[mult] = runs
    return out


def _mean_overlap(result, method: str, trials: int | None = None) -> tuple[float, int]:
    rows = [r for _, t, r in result.raw if r.method == method and (trials is None or t < trials)]
    scores = [0.0 if r.error else r.overlap for r in rows]
    return float(np.mean(scores)), sum(1 for r in rows if r.error)


# -- criteria ----------------------------------------------------------------

def test_threshold_censored():
    worst = 0.0
    for eps in (0.05, 0.1, 0.25):
        worst = max(worst, abs(critical_degree(censored_model(eps, 1.0)) - (1 - 2 * eps) ** -2))
    ok = worst <= 1e-12
    report("threshold, censored", ok, f"max |alpha_c - (1-2eps)^-2| = {worst:.2e} over eps in {{0.05, 0.1, 0.25}} (tol 1e-12)")
    assert ok


def test_threshold_gaussian():
    ac = critical_degree(gaussian_model(1.0))
    ok = abs(ac - 2.63) <= 0.01
    report("threshold, gaussian 1.5/0 unit variance", ok, f"alpha_c = {ac:.5f} (target 2.63 +- 0.01)")
    assert ok


def test_nb_spectrum_edges(nb_spectra):
    above_ok = 0
    lam1s, lam2s = [], []
    ratio = 2.0
    for inst, op, rep in nb_spectra[2.0]:
        p1, p2 = rep.pairs[0], rep.pairs[1]
        lam1 = p1.value.real if p1.is_real else math.nan
        # a seed counts only when both pairs are resolved to the solver-oracle tolerance
        resolved = p1.residual <= 1e-6 * max(1, abs(p1.value)) and p2.residual <= 1e-6 * max(1, abs(p2.value))
        lam1s.append(lam1)
        lam2s.append(abs(p2.value))
        if resolved and p1.is_real and 0.9 * ratio <= lam1 <= 1.1 * ratio and abs(p2.value) <= 1.15 * math.sqrt(ratio):
            above_ok += 1
    below_ok = 0
    bound_low = 1.15 * math.sqrt(0.5)
    top_low = []
    for inst, op, rep in nb_spectra[0.5]:
        real_above = [p for p in rep.pairs if p.is_real and p.value > bound_low]
        # every eigenvalue beyond the three returned has modulus <= the third one
        covered = abs(rep.pairs[-1].value) <= bound_low
        top_low.append(abs(rep.pairs[0].value))
        if rep.converged and not real_above and covered:
            below_ok += 1
    ok = above_ok >= 8 and below_ok >= 8
    report(
        "nb spectrum edges (censored, n=1e4)",
        ok,
        f"2ac: {above_ok}/10 seeds with lambda1 in [1.8, 2.2] and |lambda2| <= {1.15 * math.sqrt(2):.3f} "
        f"(lambda1 {np.nanmin(lam1s):.3f}..{np.nanmax(lam1s):.3f}, |lambda2| {min(lam2s):.3f}..{max(lam2s):.3f}); "
        f"0.5ac: {below_ok}/10 seeds with no real eigenvalue above {bound_low:.3f} (max |lambda| {max(top_low):.3f}); need >= 8/10 each",
    )
    assert ok


def test_transition(censored_low, censored_high):
    parts, ok = [], True
    for method in ("bp", "nb", "bh"):
        low, low_fail = _mean_overlap(censored_low, method)
        high, high_fail = _mean_overlap(censored_high, method, trials=10)
        ok &= low <= 0.05 and high >= 0.1
        parts.append(f"{method} {low:.3f}/{high:.3f} (failures {low_fail}/{high_fail})")
    report("partial-recovery transition (censored, n=1e4, 10 trials)", ok, "mean overlap at 0.5ac/2ac: " + ", ".join(parts) + "; need <= 0.05 / >= 0.1")
    assert ok


def test_method_ordering(gaussian_sweep):
    bp, _ = _mean_overlap(gaussian_sweep, "bp")
    nb, nb_fail = _mean_overlap(gaussian_sweep, "nb")
    bh, bh_fail = _mean_overlap(gaussian_sweep, "bh")
    ok = bp >= nb - 0.05 and bh >= nb - 0.05
    report(
        "method ordering (gaussian, alpha=6, n=1e4, 20 trials)",
        ok,
        f"mean overlap bp {bp:.3f}, nb {nb:.3f} ({nb_fail} failures), bh {bh:.3f} ({bh_fail} failures); need bp, bh >= nb - 0.05",
    )
    assert ok


def test_tree_exactness():
    rng = np.random.default_rng(2024)
    worst, unconverged = 0.0, 0
    for idx in range(200):
        k = 2 + idx % 2
        n = int(rng.integers(2, 13 if k == 2 else 12))
        g = random_tree(n, rng, symbols=int(rng.integers(2, 5)))
        params = random_discrete_table(k, rng, symbols=int(np.max(g.s)) + 1 if g.m else 2)
        marg, _, rep = bp_run(g, params, seed=idx, max_iter=200, tol=1e-14)
        unconverged += not rep.converged
        worst = max(worst, float(np.abs(marg - enumerate_posterior(g, params)).max()))
    ok = worst <= 1e-8 and unconverged == 0
    report("tree exactness (200 trees, n <= 12, k in {2, 3})", ok, f"max |BP - enumeration| = {worst:.2e}, unconverged {unconverged} (tol 1e-8)")
    assert ok


def _oracle_instance(n: int, idx: int):
    rng = np.random.default_rng(10_000 * n + idx)
    model = censored_model(EPS, 1.0) if idx % 2 else gaussian_model(1.0)
    alpha = min(float(rng.uniform(1.5, 3.0)) * critical_degree(model), n - 1.0)
    return sample_instance(model.with_alpha(alpha), n, 10_000 * n + idx)


def _dense_has_real_above_one(op: NbOperator) -> bool:
    vals = dense_eig_oracle(op.to_sparse()).values
    real = vals[np.abs(vals.imag) <= 1e-9 * np.maximum(1.0, np.abs(vals))].real
    return bool(np.any(real >= 1.0 + 1e-6))


def test_operator_correspondence():
    # at n <= 200 an instance above alpha_c may still have no real eigenvalue
    # above 1; the dense spectrum decides eligibility, the iterative search
    # must then find lambda1 on every eligible instance
    worst, missed, rejected, used, draw = 0.0, 0, 0, 0, 0
    while used < 50:
        n = 100 + 2 * (draw % 50)
        inst = _oracle_instance(n, draw)
        draw += 1
        op = NbOperator.from_params(inst.graph, inst.params)
        if not _dense_has_real_above_one(op):
            rejected += 1
            continue
        used += 1
        spec = nb_leading_spectrum(op, max_pairs=1, tol=1e-12, seed=draw)
        if not spec:
            missed += 1
            continue
        lam = spec[0][0]
        ratio = correspondence_check(inst.graph, inst.params, lam) / build_H(inst.graph, inst.params, lam).inf_norm()
        worst = max(worst, ratio)
    ok = worst < 1e-6 and missed == 0
    report(
        "operator correspondence (50 instances, n in [100, 198])",
        ok,
        f"max min|eig H(lambda1)| / ||H||_inf = {worst:.2e} (tol 1e-6), lambda1 missed by the iterative search: {missed}; "
        f"draws without a dense real eigenvalue > 1 skipped: {rejected}",
    )
    assert ok


def _is_forest(graph) -> bool:
    adj = sp.coo_matrix((np.ones(graph.m), (graph.i, graph.j)), shape=(graph.n, graph.n))
    n_comp, _ = connected_components(adj, directed=False)
    return graph.m == graph.n - n_comp


def _match_complex(got: np.ndarray, ref: np.ndarray, rtol: float) -> float:
    """Largest relative distance from each computed value to its nearest reference value."""
    if got.size == 0:
        return 0.0
    d = np.abs(got[:, None] - ref[None, :]).min(1) / np.maximum(1.0, np.abs(got))
    return float(d.max())


def test_solver_oracle_equivalence():
    # instances whose B is nilpotent (forests) have defective zero eigenvalues;
    # their count among the NB misses is reported, the tolerance is not relaxed
    worst_nb, worst_bh, unconverged = 0.0, 0.0, 0
    nb_miss, nb_miss_nilpotent = 0, 0
    for n in (10, 40, 200):
        for idx in range(50):
            inst = _oracle_instance(n, idx)
            op = NbOperator.from_params(inst.graph, inst.params)
            if op.dimension:
                want = min(4, op.dimension)
                rep = krylov_nonsymmetric(op.as_linear_map(), want, tol=1e-10, seed=idx)
                unconverged += not rep.converged
                ref = dense_eig_oracle(op.to_sparse()).values
                got = rep.values.astype(complex)
                # moduli against the leading dense moduli, values against their nearest dense eigenvalue
                mod_err = np.abs(np.abs(got) - np.abs(ref[:want])) / np.maximum(1.0, np.abs(ref[:want]))
                err = max(float(mod_err.max()), _match_complex(got, ref, 1e-6))
                worst_nb = max(worst_nb, err)
                if err > 1e-6:
                    nb_miss += 1
                    nb_miss_nilpotent += _is_forest(inst.graph)
            H = build_H(inst.graph, inst.params)
            want = min(4, n)
            rep = lanczos_symmetric_extremal(H.as_linear_map(), "smallest", want, tol=1e-10, seed=idx)
            unconverged += not rep.converged
            ref = np.linalg.eigvalsh(H.matrix.toarray())[:want]
            worst_bh = max(worst_bh, float(np.abs(rep.values - ref).max()))
    ok = worst_nb <= 1e-6 and worst_bh <= 1e-8 and unconverged == 0
    report(
        "solver-oracle equivalence (50 instances x n in {10, 40, 200})",
        ok,
        f"NB max rel err {worst_nb:.2e} (tol 1e-6) with {nb_miss} instances over tol ({nb_miss_nilpotent} of them forests, B nilpotent), "
        f"BH max abs err {worst_bh:.2e} (tol 1e-8), unconverged {unconverged}",
    )
    assert ok


def test_sign_decoding(nb_spectra):
    scores = []
    for inst, op, rep in nb_spectra[2.0]:
        p = rep.pairs[0]
        if not p.is_real:
            scores.append(math.nan)
            continue
        col = c_matvec(inst.graph, op.weights, np.asarray(p.vector, dtype=float))
        scores.append(overlap(sign_decode(col), inst.truth, 2))
    good = sum(1 for s in scores if s > 0.05)
    ok = good >= 8
    report("sign decoding of C v1 (censored, 2ac, n=1e4)", ok, f"{good}/10 seeds with overlap > 0.05 (min {np.nanmin(scores):.3f}, mean {np.nanmean(scores):.3f}); need >= 8")
    assert ok


def test_blobs_pipeline():
    accs = []
    for seed in range(5):
        data, truth = two_blobs(2000, seed=seed)
        res = cluster_points(data, 10.0, 2, seed=seed, truth=truth)
        accs.append(res.diagnostics["accuracy"])
    ok = min(accs) > 0.9
    report("point-cloud pipeline (two blobs, n=2000, 2% labeled, alpha=10)", ok, f"accuracy per seed {[round(a, 4) for a in accs]}; need > 0.9 for all 5")
    assert ok


# -- supplementary: bh >= nb taken literally on the censored model -----------

@pytest.mark.xfail(strict=True, reason="H(1) has no negative eigenvalue on many censored instances at 2 alpha_c; those runs score 0")
def test_bh_at_least_nb_censored(censored_high):
    bh, _ = _mean_overlap(censored_high, "bh")
    nb, _ = _mean_overlap(censored_high, "nb")
    assert bh >= nb


def test_bh_at_least_nb_when_bh_succeeds(censored_high):
    pairs = {}
    for _, t, r in censored_high.raw:
        pairs.setdefault(t, {})[r.method] = r
    both = [(p["bh"].overlap, p["nb"].overlap) for p in pairs.values() if not p["bh"].error and not p["nb"].error]
    assert len(both) >= 3
    bh, nb = np.mean(both, axis=0)
    print(f"censored 2ac, {len(both)}/20 trials where bh finds r >= 1: bh {bh:.3f}, nb {nb:.3f}")
    assert bh >= nb - 0.05


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
