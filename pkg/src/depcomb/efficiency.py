"""Power of two-test combinations for a bivariate normal mean.

Two statistics ``Z1, Z2`` are jointly normal with mean ``mu``, variance
``1/n`` and correlation ``rho``; the null is ``mu = mu0`` against
``mu > mu0``. Each test reports the one-sided p-value
``1 - Phi(sqrt(n) (Z_i - mu0))``. The most powerful test rejects for a large
mean ``(Z1 + Z2) / 2``, and the dependence-adjusted Stouffer combination has
exactly the same rejection region.

All Monte Carlo estimators draw the same standard normals for a given seed
(common random numbers), so differences between methods are not blurred by
independent sampling noise.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from ._rng import derive_seed, stream
from .combiners import GcSpec, combine_independent
from .dependent import GaussianCopulaSampler, build_empirical_null, combine_dependent
from .errors import ConfigurationError
from .special import cauchy_quantile, std_normal_quantile

METHODS = ("MP", "dStouffer", "Cauchy", "dFisher")


@dataclass(frozen=True)
class BivariateScenario:
    mu0: float = 0.0
    mu1: float = 0.0
    rho: float = 0.0
    n: int = 1
    alpha: float = 0.05

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ConfigurationError("rho must lie in (-1, 1)")
        if self.n < 1:
            raise ConfigurationError("n must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError("alpha must lie in (0, 1)")

    @property
    def z_alpha(self):
        return std_normal_quantile(1.0 - self.alpha)

    @property
    def c_alpha(self):
        """Upper-alpha quantile of the standard Cauchy."""
        return cauchy_quantile(1.0 - self.alpha)


@dataclass(frozen=True)
class PowerEstimate:
    power: float
    mc_se: float

    @classmethod
    def from_indicator(cls, rejects):
        rate = float(np.mean(rejects))
        return cls(rate, math.sqrt(rate * (1.0 - rate) / np.size(rejects)))


def mp_power(s):
    """Closed-form power of the most powerful test at ``mu1``."""
    shift = math.sqrt(2.0 * s.n / (1.0 + s.rho)) * (s.mu1 - s.mu0)
    return float(sc.ndtr(shift - s.z_alpha))


def mp_reject(z1, z2, s):
    zbar = 0.5 * (np.asarray(z1) + np.asarray(z2))
    return zbar - s.mu0 >= s.z_alpha * math.sqrt((1.0 + s.rho) / (2.0 * s.n))


def one_sided_pvalues(z, s):
    return sc.ndtr(-math.sqrt(s.n) * (np.asarray(z, dtype=float) - s.mu0))


def stouffer_dependent_pvalue(z1, z2, s, weights=None):
    """Stouffer combination referred to its exact null under correlation ``rho``.

    ``weights`` gives an optional pair ``(w1, w2)``, e.g. inverse variances;
    the default weights the two tests equally.
    """
    w1, w2 = (1.0, 1.0) if weights is None else map(float, weights)
    # Phi^{-1}(1 - Phi(x)) = -x, so the transformed p-values are exact
    x1 = math.sqrt(s.n) * (np.asarray(z1, dtype=float) - s.mu0)
    x2 = math.sqrt(s.n) * (np.asarray(z2, dtype=float) - s.mu0)
    g = -(w1 * x1 + w2 * x2)
    sd = math.sqrt(w1 * w1 + w2 * w2 + 2.0 * s.rho * w1 * w2)
    out = sc.ndtr(g / sd)
    return float(out) if np.ndim(out) == 0 else out


def standard_normals(reps, seed):
    """The shared ``reps x 2`` standard normal draws behind every estimator."""
    return stream(seed, "efficiency-normals").standard_normal((int(reps), 2))


def sample_statistics(s, reps, seed):
    """Draws of ``(Z1, Z2)`` at ``mu1`` through the explicit 2x2 Cholesky factor."""
    e = standard_normals(reps, seed)
    r = s.rho
    z1 = e[:, 0]
    z2 = r * e[:, 0] + math.sqrt(1.0 - r * r) * e[:, 1]
    return s.mu1 + np.column_stack([z1, z2]) / math.sqrt(s.n)


def _check_reps(reps, minimum=10_000, name="reps"):
    if reps < minimum:
        raise ConfigurationError(f"{name} must be at least {minimum}")


def stouffer_power_mc(s, reps=100_000, seed=0):
    z = sample_statistics(s, reps, seed)
    return PowerEstimate.from_indicator(stouffer_dependent_pvalue(z[:, 0], z[:, 1], s) <= s.alpha)


def mp_power_mc(s, reps=100_000, seed=0):
    z = sample_statistics(s, reps, seed)
    return PowerEstimate.from_indicator(mp_reject(z[:, 0], z[:, 1], s))


def cauchy_power_mc(s, reps=100_000, seed=0):
    """Power of the equal-weight Cauchy combination with the standard Cauchy critical value."""
    _check_reps(reps)
    z = sample_statistics(s, reps, seed)
    t = cauchy_quantile(sc.ndtr(math.sqrt(s.n) * (z - s.mu0))).mean(axis=1)
    return PowerEstimate.from_indicator(t > s.c_alpha)


def fisher_dep_power_mc(s, reps=100_000, B=100_000, seed=0):
    """Power of Fisher's combination calibrated on ``B`` Gaussian-copula null draws."""
    _check_reps(reps)
    _check_reps(B, name="B")
    spec = GcSpec("fisher")
    null = build_empirical_null(GaussianCopulaSampler.equicorrelated(s.rho, 2), spec, B,
                                seed=derive_seed(seed, "fisher-null"))
    z = sample_statistics(s, reps, seed)
    p = one_sided_pvalues(z, s)
    return PowerEstimate.from_indicator(combine_dependent(spec, p, null) <= s.alpha)


def fisher_independent_power_mc(s, reps=100_000, seed=0):
    """Power of Fisher's combination with the chi-square(4) critical value."""
    z = sample_statistics(s, reps, seed)
    p = combine_independent(GcSpec("fisher"), one_sided_pvalues(z, s))
    return PowerEstimate.from_indicator(p <= s.alpha)


def power_grid(rhos=(0.0, 0.3, 0.6, 0.9), effects=(0.5, 1.0, 2.0), n=1, alpha=0.05,
               reps=100_000, B=100_000, seed=0, mu0=0.0):
    """Rows ``(rho, effect, method, power, mc_se)``; ``effect`` is ``sqrt(n) (mu1 - mu0)``."""
    rows = []
    for rho in rhos:
        for effect in effects:
            s = BivariateScenario(mu0, mu0 + effect / math.sqrt(n), rho, n, alpha)
            estimates = {
                "MP": PowerEstimate(mp_power(s), 0.0),
                "dStouffer": stouffer_power_mc(s, reps, seed),
                "Cauchy": cauchy_power_mc(s, reps, seed),
                "dFisher": fisher_dep_power_mc(s, reps, B, seed),
            }
            for method in METHODS:
                est = estimates[method]
                rows.append({"rho": float(rho), "effect": float(effect), "method": method,
                             "power": est.power, "mc_se": est.mc_se})
    return rows
