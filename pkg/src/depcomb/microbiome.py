"""Microbiome association tests and their bootstrap-calibrated combination.

Two tests of ``H0: no association between the response and the OTU
composition, given covariates`` are provided:

* MiRKAT, a kernel score test on a Bray-Curtis kernel whose null law is a
  weighted chi-square mixture;
* a MiHC-style adaptive test: the minimum of higher-criticism and Simes
  p-values over per-OTU score statistics, calibrated by simulating the
  statistics' joint Gaussian null.

Both are computed from the same data and hence dependent; the combined test
fits the null model once, simulates ``B`` responses from it, recomputes both
p-values for each, and refers the observed combination statistic to the
bootstrap distribution.
"""
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import special as sc

from . import kernels
from ._io import read_numeric_csv
from ._rng import stream
from .combiners import GcSpec, combine_independent
from .dependent import EmpiricalNullCdf, combine_dependent
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DataValidationError,
    DegenerateDistributionError,
    SeparationError,
    SingularDesignError,
)
from .special import ChiSqMixture, chisq_form_positive_prob, weighted_chisq_mixture_sf

DEFAULT_GRID = (1, 3, 5, 10, 20)
DEFAULT_RESAMPLES = 1000
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 50

KINDS = ("continuous", "binary")
TESTS = ("mirkat", "mihc")
TEST_LABELS = {"mirkat": "MiRKAT", "mihc": "MiHC"}


@dataclass
class OtuDesign:
    """Response ``y``, covariates ``X`` (n x q) and OTU counts ``Z`` (n x p)."""

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    kind: str = "continuous"
    otu_ids: tuple = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.X = np.asarray(self.X, dtype=float)
        self.Z = np.asarray(self.Z, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        n = self.y.size
        if self.kind not in KINDS:
            raise ConfigurationError(f"response kind must be one of {KINDS}")
        if self.X.shape[0] != n or self.Z.ndim != 2 or self.Z.shape[0] != n:
            raise DataValidationError(
                f"row counts differ: y has {n}, X has {self.X.shape[0]}, Z has {self.Z.shape[0]}")
        for name, a in (("y", self.y), ("X", self.X), ("Z", self.Z)):
            if not np.all(np.isfinite(a)):
                raise DataValidationError(f"{name} contains non-finite values")
        if np.any(self.Z < 0):
            raise DataValidationError("OTU counts must be nonnegative")
        zero = np.flatnonzero(self.Z.sum(axis=1) == 0)
        if zero.size:
            raise DataValidationError(f"subject rows with no reads: {zero[:5].tolist()}")
        if self.kind == "binary" and not np.all(np.isin(self.y, (0.0, 1.0))):
            raise DataValidationError("binary response must be coded 0/1")
        if self.otu_ids is not None and len(self.otu_ids) != self.Z.shape[1]:
            raise DataValidationError("number of OTU ids does not match the count matrix")

    @property
    def n(self):
        return self.y.size

    @property
    def p(self):
        return self.Z.shape[1]

    @cached_property
    def O(self):
        """Relative abundances; each row sums to one."""
        return self.Z / self.Z.sum(axis=1, keepdims=True)

    def with_response(self, y):
        new = replace(self, y=y)
        new.__dict__.pop("O", None)
        new.__dict__["O"] = self.O
        return new

    @classmethod
    def from_csv(cls, y_path, x_path, z_path, kind="auto", add_intercept=True):
        """Load a design from three CSV files.

        ``z_path`` holds counts with a header row of OTU ids. ``x_path`` holds
        covariates, with or without a header; an intercept column is added
        unless one is present. ``y_path`` holds one response column and may
        carry a ``# kind=binary`` comment, which ``kind`` overrides unless it
        is ``"auto"``.
        """
        _, y, comments = read_numeric_csv(y_path)
        if y.shape[1] != 1:
            raise DataValidationError(f"{y_path}: expected one response column, found {y.shape[1]}")
        ids, Z, _ = read_numeric_csv(z_path)
        _, X, _ = read_numeric_csv(x_path)
        n = y.shape[0]
        for path, a in ((x_path, X), (z_path, Z)):
            if a.shape[0] != n:
                raise DataValidationError(f"{path}: has {a.shape[0]} rows, {y_path} has {n}")
        if kind == "auto":
            flagged = [c.split("=", 1)[1].strip() for c in comments if c.startswith("kind=")]
            if flagged:
                kind = flagged[-1]
            else:
                kind = "binary" if np.all(np.isin(y, (0.0, 1.0))) else "continuous"
        if add_intercept and not np.any(np.all(X == X[0], axis=0)):
            X = np.column_stack([np.ones(n), X])
        try:
            return cls(y.ravel(), X, Z, kind, tuple(ids) if ids else None)
        except DataValidationError as exc:
            raise DataValidationError(f"{z_path}: {exc}") from None


@dataclass(frozen=True)
class TestResult:
    method: str
    statistic: float
    p_value: float
    details: dict = field(default_factory=dict, compare=False)

    __test__ = False  # not a pytest class

    def as_record(self):
        return {"method": self.method, "statistic": self.statistic, "p_value": self.p_value}


# -- distances and kernels ---------------------------------------------------


def bray_curtis(O):
    """Bray-Curtis dissimilarity between the rows (subjects) of ``O``."""
    O = np.asarray(O, dtype=float)
    if np.any(O < 0):
        raise DataValidationError("abundances must be nonnegative")
    if np.any(O.sum(axis=1) <= 0):
        raise DataValidationError("a subject has zero total abundance")
    return kernels.bray_curtis(O)


def kernel_from_distance(D, psd=True):
    """Gower-centred kernel ``-1/2 J D^2 J`` with ``J = I - 11'/n``.

    Bray-Curtis is not a Euclidean distance, so the centred matrix usually
    has some negative eigenvalues. With ``psd`` (the default) they are
    replaced by their absolute values, which keeps the kernel centred and
    makes the score statistic a nonnegative mixture of chi-squares.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DataValidationError("distance matrix must be square")
    if not np.allclose(D, D.T, atol=1e-12):
        raise DataValidationError("distance matrix must be symmetric")
    A = -0.5 * D ** 2
    K = A - A.mean(axis=0) - A.mean(axis=1)[:, None] + A.mean()
    K = 0.5 * (K + K.T)
    if psd:
        vals, vecs = np.linalg.eigh(K)
        K = (vecs * np.abs(vals)) @ vecs.T
        K = 0.5 * (K + K.T)
    return K


# -- null model fits -----------------------------------------------------------


@dataclass(frozen=True)
class NullModelFit:
    """Fit of the covariates-only model.

    Under the null, residuals have covariance ``phi * resid_root @ resid_root.T``
    (to first order for the logistic model).
    """

    kind: str
    X: np.ndarray = field(repr=False)
    alpha_hat: np.ndarray
    fitted: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    phi: float
    resid_root: np.ndarray = field(repr=False)
    sigma2_hat: float = None
    iterations: int = 0

    def score_gradient(self):
        """Gradient of the log-likelihood (logistic) or normal equations (linear) at the fit."""
        return self.X.T @ self.residuals


def _check_design(X, n):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise DataValidationError("X and Y have different numbers of rows")
    q = X.shape[1]
    if n <= q:
        raise SingularDesignError(f"need more subjects ({n}) than covariates ({q})")
    if np.linalg.matrix_rank(X) < q:
        raise SingularDesignError("covariate matrix is rank deficient")
    return X


def fit_null_linear(Y, X):
    Y = np.asarray(Y, dtype=float).ravel()
    n = Y.size
    X = _check_design(X, n)
    q = X.shape[1]
    Q, R = np.linalg.qr(X)
    alpha = np.linalg.solve(R, Q.T @ Y)
    fitted = X @ alpha
    resid = Y - fitted
    sigma2 = float(resid @ resid / (n - q))
    root = np.eye(n) - Q @ Q.T
    return NullModelFit("continuous", X, alpha, fitted, resid, sigma2, root, sigma2)


def fit_null_logistic(Y, X, tol=IRLS_TOL, max_iter=IRLS_MAX_ITER):
    """Maximum-likelihood logistic fit by iteratively reweighted least squares."""
    Y = np.asarray(Y, dtype=float).ravel()
    n = Y.size
    X = _check_design(X, n)
    if not np.all(np.isin(Y, (0.0, 1.0))):
        raise DataValidationError("logistic response must be coded 0/1")
    if Y.min() == Y.max():
        raise SeparationError("response is constant; the likelihood has no finite maximiser")
    alpha = np.zeros(X.shape[1])
    for it in range(1, max_iter + 1):
        eta = X @ alpha
        mu = sc.expit(eta)
        w = mu * (1.0 - mu)
        if np.any(w < 1e-12):
            raise SeparationError("fitted probabilities reached 0 or 1 (separation)")
        step = np.linalg.solve((X.T * w) @ X, X.T @ (Y - mu))
        alpha = alpha + step
        if np.max(np.abs(step)) < tol:
            break
        if np.max(np.abs(alpha)) > 50:
            raise SeparationError("coefficients diverge (separation)")
    else:
        raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations")
    mu = sc.expit(X @ alpha)
    w = mu * (1.0 - mu)
    M = np.linalg.inv((X.T * w) @ X)
    root = (np.eye(n) - (X * w[:, None]) @ M @ X.T) * np.sqrt(w)
    return NullModelFit("binary", X, alpha, mu, Y - mu, 1.0, root, None, it)


def fit_null(design):
    if design.kind == "binary":
        return fit_null_logistic(design.y, design.X)
    return fit_null_linear(design.y, design.X)


# -- MiRKAT ------------------------------------------------------------------


def mirkat_statistic(fit, K):
    if not fit.phi > 0:
        raise DegenerateDistributionError("dispersion estimate is zero; the statistic is undefined")
    r = fit.residuals
    return float(r @ K @ r / (2.0 * fit.phi))


def mirkat_null_weights(fit, K):
    """Positive eigenvalues of the null quadratic form of the MiRKAT statistic."""
    R = fit.resid_root
    vals = np.linalg.eigvalsh(R.T @ K @ R) / 2.0
    if vals.size == 0 or vals.max() <= 0:
        return np.empty(0)
    return vals[vals > 1e-12 * vals.max()]


def residual_kernel_eigenvalues(fit, K):
    """Eigenvalues of ``K`` compressed to the residual space of ``X`` (``n - q`` values)."""
    q = fit.X.shape[1]
    U = np.linalg.qr(fit.X, mode="complete")[0][:, q:]
    return np.linalg.eigvalsh(U.T @ K @ U)


def _mixture_sf(q, weights, method):
    if weights.size == 0:
        return 1.0
    return float(weighted_chisq_mixture_sf(max(q, 0.0), ChiSqMixture(tuple(weights)), method))


def _ratio_sf(q, eigs):
    # with phi estimated by RSS / (n - q), Q >= q  iff  e'(M - c I) e >= 0 for
    # the residual-space noise e, where c = 2 q / (n - q)
    if q <= 0:
        return 1.0
    shifted = eigs - 2.0 * q / eigs.size
    if not np.any(shifted):
        return 0.0
    return chisq_form_positive_prob(shifted)


def mirkat_pvalue(fit, K, method="imhof"):
    """MiRKAT score test.

    For a continuous response with ``method="imhof"`` the p-value accounts for
    the estimated variance exactly: it is the probability that a
    chi-square form with the shifted residual-space eigenvalues of ``K``
    exceeds zero. Otherwise the dispersion is treated as known and ``Q`` is
    referred to the weighted chi-square mixture of
    :func:`mirkat_null_weights`, by Imhof inversion or moment matching.
    """
    q = mirkat_statistic(fit, K)
    if fit.kind == "continuous" and method == "imhof":
        return TestResult("MiRKAT", q, _ratio_sf(q, residual_kernel_eigenvalues(fit, K)))
    return TestResult("MiRKAT", q, _mixture_sf(q, mirkat_null_weights(fit, K), method))


# -- per-OTU scores, HC and Simes ----------------------------------------------


def _score_scale(fit, O):
    # null standard deviation of O_k' r, per unit dispersion
    return np.sqrt(np.maximum(np.sum((fit.resid_root.T @ O) ** 2, axis=0), 0.0))


def _zscores(O, residuals, phi, scale):
    # phi is a scalar, or one dispersion per residual column
    num = O.T @ residuals
    ok = scale > 1e-10 * max(scale.max(), 1e-300)
    z = np.zeros_like(num)
    if num.ndim == 1:
        z[ok] = num[ok] / (np.sqrt(phi) * scale[ok])
    else:
        z[ok] = num[ok] / scale[ok][:, None] / np.sqrt(np.broadcast_to(phi, num.shape[1]))
    return z, ok


def marginal_otu_pvalues(fit, O):
    """Two-sided score-test p-value for each OTU column of ``O``."""
    O = np.asarray(O, dtype=float)
    scale = _score_scale(fit, O)
    if not fit.phi > 0:
        raise DegenerateDistributionError("dispersion estimate is zero")
    z, ok = _zscores(O, fit.residuals, fit.phi, scale)
    if not np.all(ok):
        warnings.warn(f"{np.count_nonzero(~ok)} OTU column(s) have zero null variance; p set to 1",
                      RuntimeWarning, stacklevel=2)
    return 2.0 * sc.ndtr(-np.abs(z))


def simes_pvalue(p):
    p = np.sort(np.asarray(p, dtype=float).ravel())
    if p.size == 0:
        raise ConfigurationError("Simes test needs at least one p-value")
    return float(min(kernels.simes_min(p)[0], 1.0))


def higher_criticism(p, h):
    """Largest standardised excess of the first ``h`` order statistics over uniform spacing."""
    p = np.sort(np.asarray(p, dtype=float).ravel())
    h = int(h)
    if not 1 <= h <= p.size:
        raise ConfigurationError(f"h must lie in 1..{p.size}")
    return float(kernels.hc_prefix_max(p, [h])[0, 0])


def abundance_weights(O):
    """Per-OTU weights proportional to mean relative abundance, averaging one."""
    a = np.asarray(O, dtype=float).mean(axis=0)
    return a / a.mean()


def _grid(grid, p):
    hs = sorted({min(int(h), p) for h in grid})
    if not hs or hs[0] < 1:
        raise ConfigurationError("HC grid must contain positive integers")
    return np.array(hs, dtype=np.intp)


class MihcCalibrator:
    """Null reference for the adaptive HC/Simes test of one design.

    The per-OTU z statistics are jointly Gaussian under the null with a
    covariance fixed by the null fit and ``O``; ``resamples`` draws from that
    law give Monte Carlo p-values for each component statistic and for their
    minimum.
    """

    def __init__(self, fit, O, grid=DEFAULT_GRID, resamples=DEFAULT_RESAMPLES, seed=0):
        if resamples < 100:
            raise ConfigurationError("MiHC needs at least 100 resamples for usable resolution")
        O = np.asarray(O, dtype=float)
        self.hs = _grid(grid, O.shape[1])
        self.scale = _score_scale(fit, O)
        self.weights = abundance_weights(O)
        self.resamples = int(resamples)
        rng = stream(seed, "mihc-null")
        eps = rng.standard_normal((fit.resid_root.shape[1], self.resamples))
        z, _ = _zscores(O, fit.resid_root @ eps, 1.0, self.scale)
        null_stats = self.statistics(2.0 * sc.ndtr(-np.abs(z.T)))
        self._null = np.sort(null_stats, axis=0)
        R = self.resamples
        ge = R - np.column_stack([
            np.searchsorted(self._null[:, c], null_stats[:, c], side="left")
            for c in range(null_stats.shape[1])])
        self._null_min = np.sort((ge / R).min(axis=1))

    @property
    def component_names(self):
        names = [f"uHC({h})" for h in self.hs] + [f"wHC({h})" for h in self.hs]
        return names + ["Simes"]

    def statistics(self, pvals):
        """Component statistics (larger is more extreme) for rows of per-OTU p-values."""
        pvals = np.atleast_2d(pvals)
        unweighted = np.sort(pvals, axis=1)
        # OTUs never observed have weight 0 and keep p = 1
        weighted = np.divide(pvals, self.weights, out=np.ones_like(pvals), where=self.weights > 0)
        weighted = np.sort(np.minimum(weighted, 1.0), axis=1)
        return np.column_stack([
            kernels.hc_prefix_max(unweighted, self.hs),
            kernels.hc_prefix_max(weighted, self.hs),
            -np.minimum(kernels.simes_min(unweighted), 1.0),
        ])

    def test(self, pvals):
        """Return ``(M, component p-values, final p-values)`` for rows of per-OTU p-values."""
        stats = self.statistics(pvals)
        R = self.resamples
        ge = R - np.column_stack([
            np.searchsorted(self._null[:, c], stats[:, c], side="left")
            for c in range(stats.shape[1])])
        comp = (1.0 + ge) / (1.0 + R)
        M = comp.min(axis=1)
        final = (1.0 + np.searchsorted(self._null_min, M, side="right")) / (1.0 + R)
        return M, comp, np.minimum(final, 1.0)


def mihc_test(fit, O, grid=DEFAULT_GRID, resamples=DEFAULT_RESAMPLES, seed=0):
    cal = MihcCalibrator(fit, O, grid, resamples, seed)
    p = marginal_otu_pvalues(fit, O)
    M, comp, final = cal.test(p)
    details = dict(zip(cal.component_names, comp[0].tolist()))
    return TestResult("MiHC", float(M[0]), float(final[0]), details)


# -- batch engine and the combined test ------------------------------------------


class AssociationTests:
    """MiRKAT and MiHC p-values for many responses on one fixed design.

    Quantities that depend only on ``X``, ``Z`` and the null fit (the kernel,
    mixture weights and the MiHC reference) are computed once from the
    observed data and reused for every response, observed or bootstrapped.
    """

    def __init__(self, design, fit=None, tests=TESTS, grid=DEFAULT_GRID,
                 resamples=DEFAULT_RESAMPLES, seed=0, mixture_method="imhof"):
        unknown = set(tests) - set(TESTS)
        if unknown or not tests:
            raise ConfigurationError(f"unknown tests {sorted(unknown)}; choose from {TESTS}")
        self.design = design
        self.tests = tuple(tests)
        self.fit = fit if fit is not None else fit_null(design)
        self.mixture_method = mixture_method
        O = design.O
        if "mirkat" in self.tests:
            self.K = kernel_from_distance(bray_curtis(O))
            self.mirkat_weights = mirkat_null_weights(self.fit, self.K)
            self._exact_ratio = design.kind == "continuous" and mixture_method == "imhof"
            if self._exact_ratio:
                self.mirkat_eigs = residual_kernel_eigenvalues(self.fit, self.K)
        if "mihc" in self.tests:
            self.mihc = MihcCalibrator(self.fit, O, grid, resamples, seed)

    @property
    def labels(self):
        return [TEST_LABELS[t] for t in self.tests]

    def _refit(self, Y):
        X = self.design.X
        if self.design.kind == "continuous":
            Q, _ = np.linalg.qr(X)
            resid = Y - Q @ (Q.T @ Y)
            phi = np.sum(resid ** 2, axis=0) / (X.shape[0] - X.shape[1])
            return resid, phi
        resid = np.column_stack([fit_null_logistic(Y[:, j], X).residuals for j in range(Y.shape[1])])
        return resid, np.ones(Y.shape[1])

    def evaluate(self, Y):
        """Statistics and p-values for response columns; returns ``(stats, pvalues)``."""
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        resid, phi = self._refit(Y)
        if np.any(phi <= 0):
            raise DegenerateDistributionError("dispersion estimate is zero")
        stats, pvals = [], []
        for test in self.tests:
            if test == "mirkat":
                q = np.einsum("ij,ij->j", resid, self.K @ resid) / (2.0 * phi)
                stats.append(q)
                if self._exact_ratio:
                    pvals.append([_ratio_sf(v, self.mirkat_eigs) for v in q])
                else:
                    pvals.append([_mixture_sf(v, self.mirkat_weights, self.mixture_method)
                                  for v in q])
            else:
                z, _ = _zscores(self.design.O, resid, phi, self.mihc.scale)
                M, _, final = self.mihc.test(2.0 * sc.ndtr(-np.abs(z.T)))
                stats.append(M)
                pvals.append(final)
        return np.column_stack(stats), np.column_stack(pvals)

    def pvalues(self, Y):
        return self.evaluate(Y)[1]


def parametric_bootstrap_responses(fit, B, seed):
    """``n x B`` matrix of responses simulated from the null fit; column b uses stream (seed, b)."""
    n = fit.fitted.size
    out = np.empty((n, int(B)))
    for b in range(int(B)):
        rng = stream(seed, "bootstrap", b)
        if fit.kind == "continuous":
            out[:, b] = fit.fitted + np.sqrt(fit.sigma2_hat) * rng.standard_normal(n)
        else:
            out[:, b] = (rng.random(n) < fit.fitted).astype(float)
    return out


def parametric_bootstrap_design(fit, design, b, seed):
    """Bootstrap replicate ``b``: same ``X`` and ``Z``, response simulated from the null fit."""
    n = design.n
    rng = stream(seed, "bootstrap", b)
    if fit.kind == "continuous":
        y = fit.fitted + np.sqrt(fit.sigma2_hat) * rng.standard_normal(n)
    else:
        y = (rng.random(n) < fit.fitted).astype(float)
    return design.with_response(y)


def combined_label(tests, spec, dependent=True):
    names = "+".join(TEST_LABELS[t] for t in tests)
    return f"{names} ({'d' if dependent else ''}{spec.label})"


@dataclass
class CombinedTestResult:
    components: list
    combined: dict
    reject: dict
    independent: dict
    alpha: float
    B: int
    seed: int
    bootstrap_pvalues: np.ndarray = field(repr=False)

    def records(self):
        rows = [c.as_record() for c in self.components]
        rows += [{"method": k, "statistic": float("nan"), "p_value": v}
                 for k, v in self.combined.items()]
        return rows


def combined_microbiome_test(design, specs=("fisher",), tests=TESTS, B=500, seed=0,
                             alpha=0.05, grid=DEFAULT_GRID, resamples=DEFAULT_RESAMPLES,
                             mixture_method="imhof", bootstrap_responses=None):
    """Bootstrap-calibrated combination of dependent microbiome tests.

    ``bootstrap_responses`` replaces the simulated ``n x B`` responses; it is
    meant for diagnostics.
    """
    specs = [s if isinstance(s, GcSpec) else GcSpec.parse(s) for s in specs]
    if len(tests) < 2:
        raise ConfigurationError("combining needs at least two tests")
    engine = AssociationTests(design, tests=tests, grid=grid, resamples=resamples,
                              seed=seed, mixture_method=mixture_method)
    if bootstrap_responses is None:
        if B < 100:
            raise ConfigurationError("B must be at least 100")
        bootstrap_responses = parametric_bootstrap_responses(engine.fit, B, seed)
    obs_stats, obs_p = engine.evaluate(design.y)
    boot_p = engine.pvalues(bootstrap_responses)
    components = [TestResult(TEST_LABELS[t], float(obs_stats[0, i]), float(obs_p[0, i]))
                  for i, t in enumerate(engine.tests)]
    combined, reject, independent = {}, {}, {}
    for spec in specs:
        cdf = EmpiricalNullCdf.from_pvalues(spec, boot_p)
        p_dep = float(combine_dependent(spec, obs_p[0], cdf))
        label = combined_label(engine.tests, spec)
        combined[label] = p_dep
        reject[label] = p_dep <= alpha
        independent[combined_label(engine.tests, spec, dependent=False)] = float(
            combine_independent(spec, obs_p[0]))
    return CombinedTestResult(components, combined, reject, independent, alpha,
                              boot_p.shape[0], seed, boot_p)
