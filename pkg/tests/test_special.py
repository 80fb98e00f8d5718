import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from depcomb import special
from depcomb.errors import DegenerateDistributionError, DomainError, InfiniteQuantileError
from depcomb.special import ChiSqMixture, weighted_chisq_mixture_sf

mpmath.mp.dps = 30


def mp_normal_cdf(x):
    return float(mpmath.ncdf(x))


# -- normal ---------------------------------------------------------------------


def test_normal_cdf_at_zero():
    assert special.std_normal_cdf(0.0) == 0.5


@pytest.mark.parametrize("x", [-8.0, -3.3, -1.0, -0.2, 0.7, 2.5, 6.0])
def test_normal_cdf_matches_high_precision(x):
    assert abs(special.std_normal_cdf(x) - mp_normal_cdf(x)) <= 1e-12


def test_normal_cdf_95_percent_point():
    # quadrature of the density at 30 digits is the reference
    ref = float(mpmath.quad(lambda t: mpmath.npdf(t), [-mpmath.inf, 1.6448536]))
    got = special.std_normal_cdf(1.6448536)
    assert abs(got - 0.95) <= 1e-7
    assert abs(got - ref) <= 1e-12


@given(st.floats(-30, 30))
def test_normal_cdf_symmetry(x):
    assert special.std_normal_cdf(x) + special.std_normal_cdf(-x) == pytest.approx(1.0, abs=1e-15)


def test_normal_quantile_values():
    assert special.std_normal_quantile(0.5) == 0.0
    assert abs(special.std_normal_quantile(0.975) - 1.959964) <= 1e-5


def test_normal_quantile_by_bisection():
    lo, hi = 0.0, 5.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mp_normal_cdf(mid) < 0.975:
            lo = mid
        else:
            hi = mid
    assert abs(special.std_normal_quantile(0.975) - lo) <= 1e-10


@pytest.mark.parametrize("x", [-3, -2, -1, 0, 1, 2, 3])
def test_normal_quantile_inverts_cdf(x):
    assert special.std_normal_quantile(special.std_normal_cdf(x)) == pytest.approx(x, abs=1e-10)


@given(st.floats(1e-12, 1 - 1e-12))
def test_normal_cdf_of_quantile(p):
    assert abs(special.std_normal_cdf(special.std_normal_quantile(p)) - p) <= 1e-10


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_normal_quantile_endpoints_raise(p):
    with pytest.raises(InfiniteQuantileError):
        special.std_normal_quantile(p)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_inputs_raise(bad):
    for fn in (special.std_normal_cdf, special.cauchy_cdf, special.laplace_cdf):
        with pytest.raises(DomainError):
            fn(bad)


def test_quantile_outside_unit_interval_raises():
    with pytest.raises(DomainError):
        special.std_normal_quantile(1.5)


# -- Cauchy ---------------------------------------------------------------------


def test_cauchy_values():
    assert special.cauchy_cdf(0.0) == 0.5
    assert special.cauchy_cdf(1.0) == pytest.approx(0.75, abs=1e-15)
    assert special.cauchy_quantile(0.75) == pytest.approx(1.0, abs=1e-15)


@given(st.floats(1e-9, 1 - 1e-9))
def test_cauchy_round_trip(u):
    assert abs(special.cauchy_cdf(special.cauchy_quantile(u)) - u) <= 1e-10


@given(st.floats(-1e6, 1e6))
def test_cauchy_sf_complements_cdf(t):
    assert special.cauchy_sf(t) + special.cauchy_cdf(t) == pytest.approx(1.0, abs=1e-14)


def test_cauchy_sf_far_tail_is_accurate():
    t = 1e12
    assert special.cauchy_sf(t) == pytest.approx(float(mpmath.atan(1 / mpmath.mpf(t)) / mpmath.pi),
                                                 rel=1e-12)


def test_cauchy_quantile_tail_precision():
    u = 1e-14
    assert special.cauchy_quantile(u) == pytest.approx(float(mpmath.tan((mpmath.mpf(u) - 0.5) * mpmath.pi)),
                                                       rel=1e-10)


# -- chi-square -----------------------------------------------------------------


def test_chi_square_values():
    assert special.chi_square_sf(0.0, 4) == 1.0
    assert abs(special.chi_square_sf(5.9914645, 2) - 0.05) <= 1e-6


@pytest.mark.parametrize("x", [1.0, 2.0, 5.0])
def test_chi_square_df2_closed_form(x):
    assert special.chi_square_sf(x, 2) == pytest.approx(math.exp(-x / 2), rel=1e-13)


@pytest.mark.parametrize("df", [1, 3, 4, 10])
def test_chi_square_matches_high_precision(df):
    for x in (0.3, 2.0, 9.0, 30.0):
        ref = float(mpmath.gammainc(df / 2, x / 2, regularized=True))
        assert special.chi_square_sf(x, df) == pytest.approx(ref, rel=1e-10)


def test_chi_square_negative_raises():
    with pytest.raises(DomainError):
        special.chi_square_sf(-1.0, 2)


def test_chi_square_decreasing():
    x = np.linspace(0, 40, 1000)
    assert np.all(np.diff(special.chi_square_sf(x, 6)) <= 0)


# -- Laplace --------------------------------------------------------------------


def test_laplace_values():
    assert special.laplace_cdf(0.0) == 0.5
    assert special.laplace_quantile(0.25) == pytest.approx(-math.log(2), abs=1e-15)


@pytest.mark.parametrize("t", [-4.0, -0.5, 0.5, 3.0])
def test_laplace_cdf_formula(t):
    expect = 0.5 * math.exp(t) if t <= 0 else 1 - 0.5 * math.exp(-t)
    assert special.laplace_cdf(t) == pytest.approx(expect, abs=1e-15)


@pytest.mark.parametrize("u", [0.1, 0.5, 0.9])
def test_laplace_round_trip(u):
    assert abs(special.laplace_cdf(special.laplace_quantile(u)) - u) <= 1e-12


# -- shared properties ----------------------------------------------------------


CDFS = {
    "normal": (special.std_normal_cdf, special.std_normal_quantile, (-8, 8)),
    "cauchy": (special.cauchy_cdf, special.cauchy_quantile, (-1e3, 1e3)),
    "laplace": (special.laplace_cdf, special.laplace_quantile, (-30, 30)),
}


@pytest.mark.parametrize("name", sorted(CDFS))
def test_cdf_nondecreasing_on_grid(name):
    cdf, _, (lo, hi) = CDFS[name]
    assert np.all(np.diff(cdf(np.linspace(lo, hi, 1000))) >= 0)


@pytest.mark.parametrize("name", sorted(CDFS))
def test_round_trip_on_grid(name):
    cdf, quantile, _ = CDFS[name]
    u = np.linspace(0.001, 0.999, 999)
    assert np.max(np.abs(cdf(quantile(u)) - u)) <= 1e-8


# -- weighted chi-square mixtures -----------------------------------------------


def test_mixture_single_weight_reduces_to_chi_square():
    assert weighted_chisq_mixture_sf(0.0, ChiSqMixture((2.0,))) == 1.0
    assert abs(weighted_chisq_mixture_sf(3.841459, ChiSqMixture((1.0,))) - 0.05) <= 1e-4
    for x in (0.5, 4.0, 17.0):
        assert weighted_chisq_mixture_sf(x, ChiSqMixture((2.5,))) == pytest.approx(
            special.chi_square_sf(x / 2.5, 1), rel=1e-14)


def test_mixture_equal_weights_match_chi_square():
    # two unit weights are exactly chi-square(2)
    assert weighted_chisq_mixture_sf(5.991, ChiSqMixture((1.0, 1.0))) == pytest.approx(
        math.exp(-5.991 / 2), abs=1e-8)
    w = (1.0,) * 6
    for x in (1.0, 6.0, 20.0):
        assert weighted_chisq_mixture_sf(x, ChiSqMixture(w)) == pytest.approx(
            special.chi_square_sf(x, 6), abs=1e-8)


def test_mixture_two_weights_monte_carlo():
    rng = np.random.default_rng(7)
    draws = rng.chisquare(1, size=(10 ** 6, 2)).sum(axis=1)
    mc = np.mean(draws > 5.991)
    assert abs(weighted_chisq_mixture_sf(5.991, ChiSqMixture((1.0, 1.0))) - 0.05) <= 0.005
    assert abs(mc - 0.05) <= 0.005


@pytest.mark.parametrize("seed", range(5))
def test_mixture_matches_monte_carlo_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    k = int(rng.integers(2, 11))
    w = rng.exponential(size=k)
    draws = rng.chisquare(1, size=(10 ** 6, k)) @ w
    for q in (0.5, 0.9, 0.99):
        x = float(np.quantile(draws, q))
        mc = np.mean(draws > x)
        se = math.sqrt(mc * (1 - mc) / draws.size)
        assert abs(weighted_chisq_mixture_sf(x, ChiSqMixture(tuple(w))) - mc) <= 3 * se


def test_mixture_drops_negligible_weights():
    a = weighted_chisq_mixture_sf(3.0, ChiSqMixture((1.0, 0.5, 1e-14)))
    b = weighted_chisq_mixture_sf(3.0, ChiSqMixture((1.0, 0.5)))
    assert a == b


def test_mixture_is_decreasing_and_bounded():
    mix = ChiSqMixture((3.0, 1.0, 0.2, 0.05))
    x = np.linspace(0, 60, 80)
    sf = weighted_chisq_mixture_sf(x, mix)
    assert np.all((sf >= 0) & (sf <= 1))
    assert np.all(np.diff(sf) <= 1e-10)


def test_mixture_deep_tail_absolute_accuracy():
    # exact sf of chi-square(2) scaled by 2: exp(-x / 4)
    mix = ChiSqMixture((2.0, 2.0))
    for x in (40.0, 80.0, 120.0):
        assert abs(weighted_chisq_mixture_sf(x, mix) - math.exp(-x / 4)) <= 1e-10


def test_moment_method_is_available():
    mix = ChiSqMixture((1.0, 1.0, 1.0))
    assert weighted_chisq_mixture_sf(7.81, mix, method="moments") == pytest.approx(0.05, abs=1e-3)


def test_mixture_errors():
    with pytest.raises(DegenerateDistributionError):
        ChiSqMixture((0.0, 0.0))
    with pytest.raises(DomainError):
        ChiSqMixture((1.0, -1.0))
    with pytest.raises(DomainError):
        weighted_chisq_mixture_sf(-1.0, ChiSqMixture((1.0,)))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.01, 10), min_size=2, max_size=8), st.floats(0, 50))
def test_mixture_sf_is_a_probability(weights, x):
    v = weighted_chisq_mixture_sf(x, ChiSqMixture(tuple(weights)))
    assert 0.0 <= v <= 1.0


def test_mixture_mean():
    assert ChiSqMixture((1.0, 2.0)).mean() == 3.0


def _two_weight_cdf(x, w1, w2):
    # condition on the second term; s = sqrt(t) removes the density singularity
    from scipy import integrate, stats

    def g(s):
        return 2 * s * stats.chi2.pdf(s * s, 1) * stats.chi2.cdf((x - w2 * s * s) / w1, 1)

    return integrate.quad(g, 0, math.sqrt(x / w2), epsabs=0, epsrel=1e-12, limit=200)[0]


@pytest.mark.parametrize("w2", [0.36, 1e-3])
@pytest.mark.parametrize("x", [1e-12, 1e-8, 1e-5, 1e-3, 0.0099, 0.0101, 1.0, 10.0])
def test_mixture_small_arguments_against_conditioning_oracle(w2, x):
    sf = weighted_chisq_mixture_sf(x, ChiSqMixture((1.0, w2)))
    assert abs((1 - sf) - _two_weight_cdf(x, 1.0, w2)) <= 1e-10


@pytest.mark.parametrize("x", [5e-324, 2.2e-308, 1e-300, 1e-20])
def test_mixture_subnormal_arguments(x):
    for w in ((0.01,) * 4, (5.8, 4.8, 0.38, 8.2, 3.4)):
        assert weighted_chisq_mixture_sf(x, ChiSqMixture(w)) == pytest.approx(1.0, abs=1e-12)


# -- signed chi-square forms ------------------------------------------------------


@pytest.mark.parametrize("a,b,scale", [(1, 1, 1.0), (1, 1, 2.0), (2, 1, 1.0), (3, 5, 0.7),
                                       (10, 2, 4.0)])
def test_signed_form_against_f_distribution(a, b, scale):
    # P(scale * chi2_a > chi2_b) = P(F(a, b) > b / (a * scale))
    from scipy import stats

    w = [scale] * a + [-1.0] * b
    ref = stats.f.sf(b / (a * scale), a, b)
    assert special.chisq_form_positive_prob(w) == pytest.approx(ref, abs=1e-9)


def test_signed_form_against_monte_carlo():
    rng = np.random.default_rng(17)
    for m in (4, 12, 60):
        w = rng.normal(size=m) + 0.2
        x = (rng.chisquare(1, (200_000, m)) * w).sum(axis=1)
        mc = np.mean(x > 0)
        se = math.sqrt(mc * (1 - mc) / x.size)
        assert abs(special.chisq_form_positive_prob(w) - mc) <= 4 * se + 1e-6


def test_signed_form_one_signed_weights():
    assert special.chisq_form_positive_prob([0.5, 0.0, 2.0]) == 1.0
    assert special.chisq_form_positive_prob([-0.5, -2.0]) == 0.0
    assert special.chisq_form_positive_prob([1.0, -1.0]) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(DegenerateDistributionError):
        special.chisq_form_positive_prob([0.0, 0.0])
    with pytest.raises(DomainError):
        special.chisq_form_positive_prob([])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3), min_size=2, max_size=10))
def test_signed_form_reflection(w):
    # P(sum w X > 0) + P(sum -w X > 0) = 1 since the form is continuous
    p = special.chisq_form_positive_prob(w)
    q = special.chisq_form_positive_prob([-v for v in w])
    assert p + q == pytest.approx(1.0, abs=1e-9)
