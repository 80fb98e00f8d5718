"""Distribution functions shared by the combiners and the microbiome tests.

Scalar inputs return Python floats, array inputs return arrays.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special as sc

from . import kernels
from .errors import DegenerateDistributionError, DomainError, InfiniteQuantileError

#: Mixture weights below this fraction of the largest weight are dropped.
WEIGHT_RTOL = 1e-12

#: Lower-tail probabilities below exp(_LOG_NEGLIGIBLE) are reported as sf = 1.
_LOG_NEGLIGIBLE = math.log(1e-16)

#: Half-argument (after scaling) below which the small-x quadrature layout is used.
_SLOW_OMEGA = 0.005


def _result(a):
    a = np.asarray(a, dtype=float)
    return float(a) if a.ndim == 0 else a


def _finite(x, name="x"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} must be finite")
    return x


def _open_unit(u, name="u"):
    u = np.asarray(u, dtype=float)
    if np.any(np.isnan(u)) or np.any((u < 0) | (u > 1)):
        raise DomainError(f"{name} must lie in (0, 1)")
    if np.any((u == 0) | (u == 1)):
        raise InfiniteQuantileError(f"quantile of {name} at 0 or 1 is infinite")
    return u


def std_normal_cdf(x):
    return _result(sc.ndtr(_finite(x)))


def std_normal_sf(x):
    return _result(sc.ndtr(-_finite(x)))


def std_normal_quantile(p):
    return _result(sc.ndtri(_open_unit(p, "p")))


def cauchy_cdf(t):
    t = _finite(t, "t")
    return _result(0.5 + np.arctan(t) / np.pi)


def cauchy_sf(t):
    """Upper tail of the standard Cauchy, accurate far into the right tail."""
    t = _finite(t, "t")
    with np.errstate(divide="ignore"):
        upper = np.where(t > 1, np.arctan(1.0 / np.where(t > 1, t, 1.0)) / np.pi,
                         0.5 - np.arctan(t) / np.pi)
    return _result(upper)


def cauchy_quantile(u):
    """``tan((u - 1/2) pi)``, evaluated as a cotangent to keep tail precision."""
    u = _open_unit(u)
    out = np.where(u < 0.5, -1.0 / np.tan(np.pi * u), 1.0 / np.tan(np.pi * (1.0 - u)))
    return _result(out)


def chi_square_sf(x, df):
    x = _finite(x)
    if np.any(x < 0):
        raise DomainError("chi-square argument must be nonnegative")
    if np.any(np.asarray(df) <= 0):
        raise DomainError("degrees of freedom must be positive")
    return _result(sc.chdtrc(df, x))


def laplace_cdf(t):
    t = _finite(t, "t")
    neg = np.minimum(t, 0.0)
    pos = np.maximum(t, 0.0)
    return _result(np.where(t <= 0, 0.5 * np.exp(neg), 1.0 - 0.5 * np.exp(-pos)))


def laplace_quantile(u):
    u = _open_unit(u)
    return _result(np.where(u <= 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u))))


@dataclass(frozen=True)
class ChiSqMixture:
    """Law of ``sum_j w_j X_j`` with ``X_j`` independent chi-square(1)."""

    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise DomainError("mixture weights must be finite and nonempty")
        if np.any(w < 0):
            raise DomainError("mixture weights must be nonnegative")
        if not np.any(w > 0):
            raise DegenerateDistributionError("all mixture weights are zero")
        object.__setattr__(self, "weights", tuple(w.tolist()))

    @property
    def effective_weights(self):
        w = np.asarray(self.weights)
        return np.sort(w[w >= WEIGHT_RTOL * w.max()])[::-1]

    def mean(self):
        return float(np.sum(self.weights))

    def sf(self, x, method="imhof"):
        return weighted_chisq_mixture_sf(x, self, method=method)


def weighted_chisq_mixture_sf(x, mix, method="imhof"):
    """Survival function of a nonnegative weighted sum of chi-square(1) variables.

    ``method="imhof"`` integrates Imhof's inversion formula numerically and is
    accurate to about 1e-9 absolute. ``method="moments"`` matches the first
    three cumulants to a shifted, scaled central chi-square; it is fast but
    only roughly accurate away from the tail.
    """
    if not isinstance(mix, ChiSqMixture):
        mix = ChiSqMixture(tuple(np.ravel(mix)))
    x = _finite(x)
    if np.any(x < 0):
        raise DomainError("mixture argument must be nonnegative")
    w = mix.effective_weights
    if w.size == 1:
        return _result(sc.chdtrc(1, x / w[0]))
    if method == "moments":
        return _result(_pearson_sf(x, w))
    if method != "imhof":
        raise ValueError(f"unknown method {method!r}")
    flat = np.atleast_1d(x).ravel()
    out = np.array([_imhof_sf(v, w) for v in flat])
    return _result(out.reshape(x.shape))


def _pearson_sf(x, w):
    c1, c2, c3 = w.sum(), (w ** 2).sum(), (w ** 3).sum()
    scale = c3 / c2
    df = c2 ** 3 / c3 ** 2
    shift = c1 - scale * df
    return sc.chdtrc(df, np.maximum((x - shift) / scale, 0.0))


def _imhof_sf(x, w, split=1.0):
    if x <= 0:
        return 1.0
    ws = w / w[0]
    xs = x / w[0]
    # P(Q <= x) <= prod_j P(w_j X_j <= x) <= prod_j sqrt(2x / (pi w_j))
    with np.errstate(divide="ignore"):
        log_bound = np.minimum(0.5 * np.log(2.0 * xs / (math.pi * ws)), 0.0).sum()
    if log_bound < _LOG_NEGLIGIBLE:
        return 1.0
    omega = 0.5 * xs
    points = None
    cut = split
    if omega < _SLOW_OMEGA:
        # for small x one Fourier cycle is long compared with the scale on
        # which the non-oscillating factor decays; start the Fourier tail
        # half a period out and break the head at every decade
        cut = max(split, math.pi / omega)
        decades = 10.0 ** np.arange(0, math.ceil(math.log10(cut)))
        points = sorted({v for v in np.concatenate((decades, 1.0 / ws)) if 0.0 < v < cut})
    data = np.ascontiguousarray(np.concatenate(([xs, ws.size, cut, 0.0], ws)))
    head, tail_cos, tail_sin = kernels.imhof_integrands(data)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        v0 = integrate.quad(head, 0.0, cut, points=points, limit=500, epsabs=1e-13)[0]
        v1 = integrate.quad(tail_cos, 0.0, np.inf, weight="cos", wvar=omega, limlst=200)[0]
        v2 = integrate.quad(tail_sin, 0.0, np.inf, weight="sin", wvar=omega, limlst=200)[0]
    p = 0.5 + (v0 + v1 + v2) / math.pi
    return min(max(p, 0.0), 1.0)


def chisq_form_positive_prob(weights):
    """``P(sum_j w_j X_j > 0)`` for independent chi-square(1) ``X_j`` and weights of any sign.

    Imhof's inversion at zero has no oscillating factor, so a single
    finite-range quadrature suffices; the integrand envelope decays at
    least like ``u ** -2`` once two weights are nonzero.
    """
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0 or not np.all(np.isfinite(w)):
        raise DomainError("weights must be finite and nonempty")
    top = np.max(np.abs(w))
    if top == 0:
        raise DegenerateDistributionError("all weights are zero")
    w = w / top
    w = w[np.abs(w) >= WEIGHT_RTOL]
    if np.all(w > 0):
        return 1.0
    if np.all(w < 0):
        return 0.0
    # the tail beyond ``upper`` is bounded by upper * envelope(upper)
    upper = 1.0
    while -0.25 * np.sum(np.log1p((w * upper) ** 2)) > _LOG_NEGLIGIBLE:
        upper *= 2.0
    decades = 10.0 ** np.arange(-1, math.ceil(math.log10(upper)))
    breaks = np.quantile(1.0 / np.abs(w), np.linspace(0, 1, 21))
    points = sorted({float(v) for v in np.concatenate((decades, breaks)) if 0.0 < v < upper})
    data = np.ascontiguousarray(np.concatenate(([0.0, w.size, upper, 0.0], w)))
    head = kernels.imhof_integrands(data)[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        v = integrate.quad(head, 0.0, upper, points=points, limit=500, epsabs=1e-13)[0]
    return min(max(0.5 + v / math.pi, 0.0), 1.0)
