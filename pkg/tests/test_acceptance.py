"""Acceptance checks.

Every test records one PASS/FAIL line through the ``verdict`` fixture; the
lines are repeated in the terminal summary. Thresholds are fixed constants in
each test and are never adapted to the observed values.
"""
import math

import numpy as np
import pytest
from scipy import stats

from depcomb._rng import stream
from depcomb.combiners import KINDS, GcSpec, combine_independent, gc_eval, independent_null_cdf
from depcomb.combiners import vanilla_cauchy_pvalue
from depcomb.dependent import EmpiricalNullCdf, GaussianCopulaSampler, combine_dependent
from depcomb.efficiency import (
    BivariateScenario,
    mp_power,
    mp_reject,
    power_grid,
    sample_statistics,
    stouffer_dependent_pvalue,
    stouffer_power_mc,
)
from depcomb.microbiome import fit_null_logistic
from depcomb.special import (
    ChiSqMixture,
    cauchy_cdf,
    cauchy_quantile,
    laplace_cdf,
    laplace_quantile,
    std_normal_cdf,
    std_normal_quantile,
    weighted_chisq_mixture_sf,
)
from depcomb.synthetic import (
    Scenario,
    run_counterexample_experiment,
    run_power_experiment,
    run_size_experiment,
)

SINGLES = ("MiRKAT", "MiHC")


def adjusted(rows):
    return {r["method"]: r["size_or_power"] for r in rows if "(d" in r["method"]}


# -- 1 --------------------------------------------------------------------------


def test_criterion_1_independent_combiners_match_monte_carlo(verdict):
    worst = {}
    for kind in ("fisher", "stouffer", "min", "cauchy"):
        spec = GcSpec(kind)
        for k in (2, 3, 5):
            u = stream(1, "acceptance-1", kind, k).random((1_000_000, k))
            s = gc_eval(spec, u)
            d = stats.kstest(s, lambda x: independent_null_cdf(spec, k, x)).statistic
            worst[(kind, k)] = d
    key = max(worst, key=worst.get)
    ok = worst[key] <= 0.005
    verdict(1, ok, f"max KS distance {worst[key]:.5f} ({key[0]}, k={key[1]}) vs limit 0.005")
    assert ok


# -- 2 --------------------------------------------------------------------------


def test_criterion_2_vanilla_cauchy_equivalence(verdict):
    rng = stream(2, "acceptance-2")
    gap = 0.0
    for _ in range(1000):
        k = int(rng.integers(2, 11))
        p = rng.random(k)
        w = rng.dirichlet(np.ones(k))
        t = np.sum(w * np.tan((0.5 - p) * np.pi))
        oracle = 0.5 - math.atan(t) / math.pi
        spec = GcSpec("cauchy", weights=tuple(w))
        gap = max(gap, abs(combine_independent(spec, p) - oracle),
                  abs(vanilla_cauchy_pvalue(p, w) - oracle))
    ok = gap <= 1e-10
    verdict(2, ok, f"max deviation {gap:.2e} over 1000 vectors vs limit 1e-10")
    assert ok


# -- 3 --------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_3_dependence_adjusted_uniformity(verdict):
    R, B, k = 2000, 2000, 3
    specs = [GcSpec(kind) for kind in KINDS if kind != "pareto"] + [GcSpec("pareto", eta=0.5)]
    worst = (1.0, None)
    for rho in (0.0, 0.5, 0.9):
        sampler = GaussianCopulaSampler.equicorrelated(rho, k)
        obs = sampler.draw_range(0, R, 31)
        # every replicate gets its own null sample, so replicates stay independent
        null = sampler.draw_range(0, R * B, 32).reshape(R, B, k)
        for spec in specs:
            p = np.array([combine_dependent(spec, obs[r], EmpiricalNullCdf.from_pvalues(
                spec, null[r])) for r in range(R)])
            pv = stats.kstest(p, "uniform").pvalue
            if pv < worst[0]:
                worst = (pv, f"{spec.label}, rho={rho}")
    ok = worst[0] > 0.01
    verdict(3, ok, f"smallest KS p-value {worst[0]:.4f} ({worst[1]}) over 21 cells vs level 0.01")
    assert ok


# -- 4 --------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_4_cauchy_counterexample(verdict):
    res = run_counterexample_experiment(reps=100_000, B=1_000_000, seed=1)
    se = np.sqrt(res.alphas * (1 - res.alphas) / res.reps)
    inside = np.abs(res.dcauchy_size - res.alphas) <= 3 * se
    window = (res.alphas >= 0.01) & (res.alphas <= 0.3)
    above = res.cauchy_size[window] > (res.alphas + 3 * se)[window]
    ok = bool(inside.all()) and above.mean() > 0.5
    verdict(4, ok, f"dCauchy inside the band at {inside.sum()}/{inside.size} levels; "
                   f"Cauchy above it at {above.sum()}/{above.size} levels in [0.01, 0.3]")
    assert ok


# -- 5 and 9 share one null simulation ------------------------------------------


@pytest.fixture(scope="module")
def null_run():
    return run_size_experiment(Scenario(structure="phylogenetic", beta=0.0, n=100, p=50,
                                        reps=500, B=200, seed=1))


@pytest.mark.slow
def test_criterion_5_desk_scale_size(verdict, null_run):
    sizes = adjusted(null_run.rows)
    stou = null_run.rate("MiRKAT+MiHC (Stou)")
    bad = {m: s for m, s in sizes.items() if not 0.03 <= s <= 0.07}
    ok = not bad and stou > 0.06
    verdict(5, ok, f"adjusted sizes in [{min(sizes.values()):.3f}, {max(sizes.values()):.3f}] "
                   f"(need [0.03, 0.07]); vanilla Stouffer {stou:.3f} (need > 0.06)")
    assert ok


@pytest.mark.slow
def test_criterion_9_single_tests_are_dependent(verdict, null_run):
    q = null_run.pvalues["MiRKAT"]
    m = null_run.pvalues["MiHC"]
    r = np.corrcoef(q, m)[0, 1]
    ci = stats.bootstrap((q, m), lambda a, b: np.corrcoef(a, b)[0, 1], paired=True,
                         vectorized=False, n_resamples=2000, confidence_level=0.95,
                         random_state=np.random.default_rng(9)).confidence_interval
    ok = q.size >= 100 and r > 0 and ci.low > 0
    verdict(9, ok, f"corr {r:.3f}, 95% CI [{ci.low:.3f}, {ci.high:.3f}] over {q.size} replicates")
    assert ok


# -- 6 --------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_6_power_orderings(verdict):
    runs = {s: run_power_experiment(Scenario(structure=s, K=1.0, beta=0.5, n=100, p=50,
                                             reps=300, B=200, seed=1))
            for s in ("abundance", "random")}
    power = {s: {r["method"]: r["size_or_power"] for r in res.rows} for s, res in runs.items()}
    ab, rd = power["abundance"], power["random"]
    gap_ab = ab["MiRKAT"] - ab["MiHC"]
    gap_rd = rd["MiHC"] - rd["MiRKAT"]
    bracketed = True
    for pw in power.values():
        lo, hi = min(pw[t] for t in SINGLES), max(pw[t] for t in SINGLES)
        bracketed &= all(lo <= v <= hi + 0.1 for m, v in pw.items() if m not in SINGLES)
    ok = gap_ab > 0.2 and gap_rd > 0.2 and bracketed
    verdict(6, ok, f"abundance MiRKAT-MiHC {gap_ab:+.3f} ({ab['MiRKAT']:.3f} vs {ab['MiHC']:.3f}); "
                   f"random MiHC-MiRKAT {gap_rd:+.3f}; combined bracketed: {bracketed}")
    assert ok


# -- 7 --------------------------------------------------------------------------


def test_criterion_7_efficiency(verdict):
    identical = True
    for rho in (0.0, 0.5, 0.9):
        s = BivariateScenario(mu0=0.0, mu1=0.2, rho=rho, n=3)
        z = sample_statistics(s, 100_000, 71)
        stou = stouffer_dependent_pvalue(z[:, 0], z[:, 1], s) <= s.alpha
        identical &= bool(np.array_equal(stou, mp_reject(z[:, 0], z[:, 1], s)))

    rows = power_grid(reps=100_000, B=100_000, seed=7)
    by_cell = {}
    for r in rows:
        by_cell.setdefault((r["rho"], r["effect"]), {})[r["method"]] = r
    stou_ok, excess = True, []
    for (rho, effect), cell in by_cell.items():
        mp = cell["MP"]["power"]
        s = BivariateScenario(mu1=effect, rho=rho)
        est = stouffer_power_mc(s, 100_000, 72)
        stou_ok &= abs(est.power - mp_power(s)) <= 3 * est.mc_se
        for method in ("Cauchy", "dFisher"):
            est = cell[method]
            if est["power"] > mp + 3 * est["mc_se"]:
                excess.append(f"{method} rho={rho} effect={effect} "
                              f"({est['power']:.4f} vs {mp:.4f})")
    ok = identical and stou_ok and not excess
    verdict(7, ok, f"(a) identity {identical}; (b) Stouffer within 3 SE {stou_ok}; "
                   f"(c) above MP + 3 SE: {', '.join(excess) or 'none'}")
    assert ok


# -- 8 --------------------------------------------------------------------------


def test_criterion_8_numerics(verdict):
    u = np.concatenate([np.geomspace(1e-12, 0.5, 400), 1 - np.geomspace(1e-12, 0.5, 400)])
    # beyond |x| = 5 the normal CDF is within 3e-7 of 1 and x is no longer recoverable
    x = np.linspace(-5, 5, 801)
    pairs = ((std_normal_cdf, std_normal_quantile), (cauchy_cdf, cauchy_quantile),
             (laplace_cdf, laplace_quantile))
    round_trip = 0.0
    for cdf, quantile in pairs:
        round_trip = max(round_trip, np.max(np.abs(cdf(quantile(u)) - u)),
                         np.max(np.abs(quantile(cdf(x)) - x)))

    mix = ChiSqMixture((3.0, 1.0, 0.5, 0.2))
    n_mc = 1_000_000
    draws = stream(8, "acceptance-8").chisquare(1, (n_mc, 4)) @ np.array(mix.weights)
    mixture_ok = True
    for q in (0.5, 2.0, 5.0, 10.0, 20.0):
        exact = weighted_chisq_mixture_sf(q, mix)
        emp = np.mean(draws > q)
        mixture_ok &= abs(exact - emp) <= 3 * math.sqrt(exact * (1 - exact) / n_mc)

    rng = stream(8, "acceptance-8-logistic")
    X = np.column_stack([np.ones(200), rng.standard_normal((200, 2))])
    y = (rng.random(200) < 1 / (1 + np.exp(-(0.4 + X[:, 1] - 0.5 * X[:, 2])))).astype(float)
    gradient = np.linalg.norm(fit_null_logistic(y, X).score_gradient())

    ok = round_trip <= 1e-8 and mixture_ok and gradient <= 1e-8
    verdict(8, ok, f"round trip {round_trip:.1e}; mixture within 3 SE {mixture_ok}; "
                   f"logistic gradient {gradient:.1e}")
    assert ok
