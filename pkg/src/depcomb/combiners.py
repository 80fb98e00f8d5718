"""Combination functions and their null laws under independence.

A combination function maps a vector of ``k`` p-values to one real number.
Each kind below is coordinate-wise monotone; the combined p-value is the null
probability of a statistic at least as extreme as the observed one. For the
increasing kinds (Fisher, Stouffer, DE, minimum, Cauchy) small statistics are
extreme, so this is the null CDF at the statistic. The harmonic-mean and
Pareto sums decrease in each p-value, so for them the upper tail is used.
"""
import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special as sc

from . import special
from ._rng import stream
from .errors import ConfigurationError

KINDS = ("fisher", "stouffer", "de", "min", "cauchy", "hm", "pareto")

LABELS = {
    "fisher": "Fisher",
    "stouffer": "Stou",
    "de": "DE",
    "min": "Gcmin",
    "cauchy": "Cauchy",
    "hm": "HM",
    "pareto": "Pareto",
}

_ALIASES = {
    "fisher": "fisher",
    "stouffer": "stouffer",
    "stou": "stouffer",
    "de": "de",
    "double-exponential": "de",
    "min": "min",
    "gcmin": "min",
    "minimum": "min",
    "tippett": "min",
    "cauchy": "cauchy",
    "hm": "hm",
    "harmonic": "hm",
    "harmonic-mean": "hm",
    "pareto": "pareto",
}

#: p-values are clamped to [EPS, 1 - EPS] before transformation.
EPS = 1e-15

#: Monte Carlo sample size for the harmonic-mean and Pareto null laws.
MC_NULL_SIZE = 1_000_000
MC_NULL_SEED = 20240101


@dataclass(frozen=True)
class GcSpec:
    """A combination function: its kind plus Cauchy weights or Pareto exponent."""

    kind: str
    weights: tuple = None
    eta: float = None

    def __post_init__(self):
        kind = _ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise ConfigurationError(f"unknown combination method {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.weights is not None:
            if kind != "cauchy":
                raise ConfigurationError("weights are only supported for the Cauchy method")
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.size == 0 or np.any(~np.isfinite(w)) or np.any(w < 0):
                raise ConfigurationError("Cauchy weights must be nonnegative")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ConfigurationError("Cauchy weights must sum to 1")
            object.__setattr__(self, "weights", tuple(w.tolist()))
        if kind == "pareto":
            eta = 1.0 if self.eta is None else float(self.eta)
            if not eta > 0 or not math.isfinite(eta):
                raise ConfigurationError("Pareto exponent must be positive")
            object.__setattr__(self, "eta", eta)
        elif self.eta is not None:
            raise ConfigurationError("eta is only supported for the Pareto method")

    @classmethod
    def parse(cls, text):
        """Build a spec from ``"fisher"``, ``"pareto:eta=0.5"`` or ``"cauchy:w=0.3,0.7"``."""
        name, _, params = str(text).partition(":")
        kwargs = {}
        for item in filter(None, params.split(";")):
            key, _, value = item.partition("=")
            key = key.strip().lower()
            if key == "eta":
                kwargs["eta"] = float(value)
            elif key in ("w", "weights"):
                kwargs["weights"] = tuple(float(v) for v in value.split(","))
            else:
                raise ConfigurationError(f"unknown parameter {key!r} in method {text!r}")
        return cls(name.strip(), **kwargs)

    @property
    def increasing(self):
        """True when small statistics are evidence against the null."""
        return self.kind not in ("hm", "pareto")

    @property
    def label(self):
        if self.kind == "pareto" and self.eta != 1.0:
            return f"Pareto({self.eta:g})"
        return LABELS[self.kind]

    def descriptor(self):
        """Inverse of :meth:`parse`."""
        if self.weights is not None:
            return "cauchy:w=" + ",".join(repr(w) for w in self.weights)
        if self.kind == "pareto":
            return f"pareto:eta={self.eta!r}"
        return self.kind

    def weights_for(self, k):
        if self.weights is None:
            return np.full(k, 1.0 / k)
        if len(self.weights) != k:
            raise ConfigurationError(
                f"Cauchy spec has {len(self.weights)} weights but {k} p-values were given")
        return np.asarray(self.weights)


def _pvalue_matrix(p):
    p = np.asarray(p, dtype=float)
    if p.ndim not in (1, 2) or p.shape[-1] == 0:
        raise ConfigurationError("p-values must be a nonempty vector or a matrix of rows")
    if np.any(np.isnan(p)) or np.any((p < 0) | (p > 1)):
        raise ConfigurationError("p-values must lie in [0, 1]")
    return np.clip(p, EPS, 1.0 - EPS)


def gc_eval(spec, p):
    """Value of the combination function; rows of a matrix are combined separately."""
    q = _pvalue_matrix(p)
    k = q.shape[-1]
    kind = spec.kind
    if kind == "fisher":
        s = np.log(q).sum(axis=-1)
    elif kind == "stouffer":
        s = sc.ndtri(q).sum(axis=-1)
    elif kind == "de":
        s = special.laplace_quantile(q).sum(axis=-1)
    elif kind == "min":
        s = q.min(axis=-1)
    elif kind == "cauchy":
        s = special.cauchy_quantile(q) @ spec.weights_for(k)
    elif kind == "hm":
        s = (1.0 / q).sum(axis=-1)
    else:
        s = (q ** -spec.eta).sum(axis=-1)
    return special._result(s)


def independent_null_cdf(spec, k, s):
    """``P(g(U_1..U_k) <= s)`` for independent uniform ``U_i``."""
    if int(k) != k or k < 1:
        raise ConfigurationError("k must be a positive integer")
    k = int(k)
    s = np.asarray(s, dtype=float)
    kind = spec.kind
    if kind == "fisher":
        out = np.where(s >= 0, 1.0, sc.chdtrc(2 * k, -2.0 * np.minimum(s, 0.0)))
    elif kind == "stouffer":
        out = sc.ndtr(s / math.sqrt(k))
    elif kind == "min":
        out = 1.0 - (1.0 - np.clip(s, 0.0, 1.0)) ** k
    elif kind == "cauchy":
        if spec.weights is not None and len(spec.weights) != k:
            raise ConfigurationError("Cauchy weights do not match k")
        out = 0.5 + np.arctan(s) / np.pi
    elif kind == "de":
        out = laplace_sum_cdf(s, k)
    else:
        out = 1.0 - _heavy_tail_upper(spec, k, s, strict=True)
    return special._result(out)


def combine_independent(spec, p):
    """Combined p-value assuming the p-values are independent."""
    q = _pvalue_matrix(p)
    k = q.shape[-1]
    s = gc_eval(spec, q)
    if spec.kind == "cauchy":
        # left tail of the statistic, computed without cancellation
        out = special.cauchy_sf(-np.asarray(s))
    elif spec.increasing:
        out = independent_null_cdf(spec, k, s)
    else:
        out = _heavy_tail_upper(spec, k, s, strict=False)
    return special._result(out)


def vanilla_cauchy_pvalue(p, weights=None):
    """Cauchy combination in its usual form ``1 - F(sum w_i tan((1/2 - p_i) pi))``."""
    q = _pvalue_matrix(p)
    k = q.shape[-1]
    w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=float)
    t = np.tan((0.5 - q) * np.pi) @ w
    return special._result(1.0 - (0.5 + np.arctan(t) / np.pi))


def laplace_sum_cdf(s, k):
    """Exact CDF of a sum of ``k`` independent standard Laplace variables.

    Each Laplace variable is a difference of two unit exponentials, so the sum
    is a difference of two Gamma(k) variables; integrating the Gamma survival
    function against the Gamma density gives a finite double sum.
    """
    s = np.asarray(s, dtype=float)
    x = np.abs(s)
    coef = [math.comb(m + k - 1, m) / 2.0 ** (m + k) for m in range(k)]
    total = np.zeros_like(x)
    term = np.ones_like(x)
    partial = np.zeros_like(x)
    # partial_j = sum_{i<=j} x^i / i!, accumulated so each order is reused
    partials = []
    for j in range(k):
        if j > 0:
            term = term * x / j
        partial = partial + term
        partials.append(partial)
    for m in range(k):
        total = total + coef[m] * partials[k - 1 - m]
    upper = np.exp(-x) * total
    return np.where(s >= 0, 1.0 - upper, upper)


_mc_lock = threading.Lock()


@lru_cache(maxsize=32)
def _heavy_tail_sample(kind, k, eta):
    rng = stream(MC_NULL_SEED, "heavy-tail-null", kind, k)
    u = rng.random((MC_NULL_SIZE, k))
    u = np.clip(u, EPS, 1.0)
    vals = (u ** -eta).sum(axis=1)
    vals.sort()
    vals.setflags(write=False)
    return vals


def heavy_tail_null_sample(spec, k):
    """Sorted Monte Carlo sample of the harmonic-mean or Pareto statistic under independence."""
    eta = 1.0 if spec.kind == "hm" else spec.eta
    with _mc_lock:
        return _heavy_tail_sample(spec.kind, int(k), float(eta))


def _heavy_tail_upper(spec, k, s, strict):
    # P(S >= s), or P(S > s) when strict; beyond the sample range the tail of
    # a sum of k iid Pareto(1/eta) terms is k s^(-1/eta)
    eta = 1.0 if spec.kind == "hm" else spec.eta
    vals = heavy_tail_null_sample(spec, k)
    s = np.asarray(s, dtype=float)
    side = "right" if strict else "left"
    upper = (vals.size - np.searchsorted(vals, s, side=side)) / vals.size
    beyond = s > vals[-1]
    if np.any(beyond):
        asym = np.minimum(k * np.maximum(s, 1.0) ** (-1.0 / eta), 1.0 / vals.size)
        upper = np.where(beyond, asym, upper)
    return upper
