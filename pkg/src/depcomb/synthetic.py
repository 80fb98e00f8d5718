"""Simulated OTU tables, responses and the size/power experiments built on them.

Also contains the two-test Cauchy counterexample: both statistics are
marginally standard Cauchy, but the second copies the sign of the first, so
the Cauchy combination's tail approximation does not hold.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from . import kernels
from ._rng import derive_seed, stream
from .combiners import GcSpec, combine_independent
from .dependent import EmpiricalNullCdf, PValueSampler, bootstrap_pvalues, combine_dependent
from .errors import ConfigurationError, DataValidationError, DegenerateDistributionError
from .microbiome import (
    DEFAULT_GRID,
    DEFAULT_RESAMPLES,
    TESTS,
    AssociationTests,
    OtuDesign,
    combined_label,
    parametric_bootstrap_responses,
)
from .special import cauchy_sf

STRUCTURES = ("phylogenetic", "abundance", "random")
N_LINEAGES = 20


@dataclass(frozen=True)
class DmParams:
    """Dirichlet-multinomial parameters: mean proportions, over-dispersion, read depth."""

    mean_props: tuple
    dispersion: float = 0.02
    depth: int = 1000

    def __post_init__(self):
        m = np.asarray(self.mean_props, dtype=float).ravel()
        if m.size == 0 or np.any(m < 0) or abs(m.sum() - 1.0) > 1e-10:
            raise ConfigurationError("mean proportions must be a probability vector")
        if not 0.0 <= self.dispersion < 1.0:
            raise ConfigurationError("dispersion must lie in [0, 1)")
        if int(self.depth) != self.depth or self.depth < 1:
            raise ConfigurationError("depth must be a positive integer")
        object.__setattr__(self, "mean_props", tuple(m.tolist()))
        object.__setattr__(self, "depth", int(self.depth))

    @classmethod
    def power_law(cls, p, exponent=1.5, dispersion=0.02, depth=1000):
        """Mean proportions proportional to ``i ** -exponent`` for ``i = 1..p``."""
        w = np.arange(1, int(p) + 1, dtype=float) ** -exponent
        return cls(tuple(w / w.sum()), dispersion, depth)


def dirichlet_multinomial_sample(params, n, seed):
    """``n x p`` count matrix; every row sums to ``params.depth``."""
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "dm")
    m = np.asarray(params.mean_props)
    if params.dispersion == 0.0:
        return rng.multinomial(params.depth, m, size=int(n))
    conc = m * (1.0 - params.dispersion) / params.dispersion
    g = np.zeros((int(n), m.size))
    pos = conc > 0
    g[:, pos] = rng.standard_gamma(conc[pos], size=(int(n), int(pos.sum())))
    total = g.sum(axis=1, keepdims=True)
    # all-zero gamma draws can only happen through underflow of tiny shapes
    bad = total[:, 0] <= 0
    if np.any(bad):
        g[bad] = m
        total[bad] = 1.0
    probs = g / total
    return rng.multinomial(params.depth, probs)


def simulate_covariates(n, rng):
    """Intercept, a standard normal covariate and a Bernoulli(1/2) covariate."""
    return np.column_stack([np.ones(n), rng.standard_normal(n), rng.integers(0, 2, n).astype(float)])


def _n_signal(K, p):
    count = math.ceil(K * p / 100.0 - 1e-9)
    if count < 1:
        raise ConfigurationError(f"sparsity {K}% of {p} OTUs selects no OTU")
    return min(count, p)


def otu_lineages(Z, n_clusters=N_LINEAGES):
    """Cluster labels (1..n_clusters) of OTUs by average linkage on Bray-Curtis profiles."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape[1] < n_clusters:
        raise ConfigurationError(f"lineage clustering needs at least {n_clusters} OTUs")
    profiles = Z.T
    totals = profiles.sum(axis=1, keepdims=True)
    if np.any(totals == 0):
        # OTUs never observed get a flat profile so the distance is defined
        profiles = np.where(totals == 0, 1.0, profiles)
    D = kernels.bray_curtis(profiles)
    tree = linkage(squareform(D, checks=False), method="average")
    return fcluster(tree, t=n_clusters, criterion="maxclust")


def signal_set(structure, Z, K=None, seed=0):
    """Indices (0-based, sorted) of the OTUs that carry the effect."""
    Z = np.asarray(Z, dtype=float)
    p = Z.shape[1]
    if structure == "phylogenetic":
        labels = otu_lineages(Z)
        ids, sizes = np.unique(labels, return_counts=True)
        target = 0.05 * p
        # ties go to the lowest cluster label (np.argmin takes the first)
        chosen = ids[np.argmin(np.abs(sizes - target))]
        return np.flatnonzero(labels == chosen)
    if K is None:
        raise ConfigurationError(f"{structure} signal needs a sparsity K")
    count = _n_signal(K, p)
    if structure == "abundance":
        order = np.argsort(-Z.sum(axis=0), kind="stable")
        return np.sort(order[:count])
    if structure == "random":
        return np.sort(stream(seed, "signal").choice(p, size=count, replace=False))
    raise ConfigurationError(f"unknown structure {structure!r}; choose from {STRUCTURES}")


def scale(v):
    v = np.asarray(v, dtype=float)
    sd = v.std(ddof=1)
    if not sd > 0:
        raise DegenerateDistributionError("signal aggregate has zero variance; cannot standardise")
    return (v - v.mean()) / sd


def generate_response(X, Z, A, beta, kind, seed):
    """``0.5 X1 + 0.5 X2 + beta * scale(sum of signal counts) + noise``.

    ``X`` columns 1 and 2 are the two covariates (column 0 is the
    intercept). Binary responses use the same predictor through a logit
    link.
    """
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "response")
    X = np.asarray(X, dtype=float)
    if beta < 0:
        raise ConfigurationError("beta must be nonnegative")
    eta = 0.5 * X[:, 1] + 0.5 * X[:, 2]
    if beta > 0:
        if A is None or len(A) == 0:
            raise ConfigurationError("a positive effect needs a nonempty signal set")
        eta = eta + beta * scale(np.asarray(Z, dtype=float)[:, A].sum(axis=1))
    n = eta.size
    if kind == "continuous":
        return eta + rng.standard_normal(n)
    if kind == "binary":
        return (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    raise ConfigurationError(f"unknown response kind {kind!r}")


# -- scenarios ----------------------------------------------------------------


DEFAULT_METHODS = ("fisher", "stouffer", "de", "min", "cauchy", "hm", "pareto")


@dataclass
class Scenario:
    structure: str = "phylogenetic"
    K: float = 1.0
    beta: float = 0.0
    n: int = 100
    p: int = 50
    kind: str = "continuous"
    reps: int = 500
    seed: int = 1
    methods: tuple = DEFAULT_METHODS
    B: int = 200
    alpha: float = 0.05
    dispersion: float = 0.02
    depth: int = 1000
    exponent: float = 1.5
    resamples: int = DEFAULT_RESAMPLES

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ConfigurationError(f"structure: must be one of {STRUCTURES}")
        if self.kind not in ("continuous", "binary"):
            raise ConfigurationError("kind: must be continuous or binary")
        if self.beta < 0:
            raise ConfigurationError("beta: must be nonnegative")
        if not 0 < self.alpha < 1:
            raise ConfigurationError("alpha: must lie in (0, 1)")
        for name in ("n", "p", "reps", "B", "depth", "resamples"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name}: must be positive")
        if self.structure != "phylogenetic":
            _n_signal(self.K, self.p)
        self.methods = tuple(GcSpec.parse(m).descriptor() if isinstance(m, str) else m.descriptor()
                             for m in self.methods)

    @property
    def specs(self):
        return [GcSpec.parse(m) for m in self.methods]

    @property
    def dm_params(self):
        return DmParams.power_law(self.p, self.exponent, self.dispersion, self.depth)

    @classmethod
    def from_text(cls, text, source="<scenario>"):
        """Parse ``key = value`` lines; ``#`` starts a comment, methods are comma-separated."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ConfigurationError(f"{source}:{lineno}: expected key = value")
            if key not in types:
                raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}")
            try:
                if key == "methods":
                    values[key] = tuple(m.strip() for m in value.split(",") if m.strip())
                elif types[key] is int:
                    values[key] = int(value)
                elif types[key] is float:
                    values[key] = float(value)
                else:
                    values[key] = value
            except ValueError:
                raise ConfigurationError(
                    f"{source}:{lineno}: {key}: cannot parse {value!r}") from None
        try:
            return cls(**values)
        except ConfigurationError as exc:
            raise ConfigurationError(f"{source}: {exc}") from None

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(f"{path}: cannot read ({exc.strerror})") from None
        return cls.from_text(text, str(path))

    def to_text(self):
        out = []
        for k, v in asdict(self).items():
            out.append(f"{k} = {','.join(v) if k == 'methods' else v}")
        return "\n".join(out) + "\n"


def scenario_signal(scenario):
    """The signal set of a scenario, fixed from a reference table drawn with the scenario seed."""
    ref = dirichlet_multinomial_sample(scenario.dm_params, max(scenario.n, 200),
                                       stream(scenario.seed, "reference-table"))
    return signal_set(scenario.structure, ref, scenario.K, seed=scenario.seed)


def simulate_design(scenario, A, replicate):
    rng = stream(scenario.seed, "replicate", replicate)
    Z = dirichlet_multinomial_sample(scenario.dm_params, scenario.n, rng)
    X = simulate_covariates(scenario.n, rng)
    y = generate_response(X, Z, A, scenario.beta, scenario.kind, rng)
    return OtuDesign(y, X, Z, scenario.kind)


def _replicate_pvalues(scenario, A, r, dependent, independent):
    """Per-method p-values for replicate ``r`` as an ordered dict label -> p."""
    design = simulate_design(scenario, A, r)
    seed = derive_seed(scenario.seed, "analysis", r)
    engine = AssociationTests(design, tests=TESTS, resamples=scenario.resamples,
                              seed=seed, grid=DEFAULT_GRID)
    obs = engine.pvalues(design.y)
    out = {label: float(obs[0, i]) for i, label in enumerate(engine.labels)}
    if independent:
        for spec in scenario.specs:
            out[combined_label(TESTS, spec, dependent=False)] = float(
                combine_independent(spec, obs[0]))
    if dependent:
        boot = engine.pvalues(parametric_bootstrap_responses(engine.fit, scenario.B, seed))
        for spec in scenario.specs:
            cdf = EmpiricalNullCdf.from_pvalues(spec, boot)
            out[combined_label(TESTS, spec)] = float(combine_dependent(spec, obs[0], cdf))
    return out


@dataclass
class ExperimentResult:
    """Rejection counts per method; ``pvalues`` keeps every replicate's p-values."""

    rows: list
    seed: int
    pvalues: dict = field(repr=False, default_factory=dict)

    COLUMNS = ("method", "alpha", "rejections", "reps", "size_or_power", "mc_se", "seed")

    def rate(self, method):
        return next(r["size_or_power"] for r in self.rows if r["method"] == method)

    def mc_se(self, method):
        return next(r["mc_se"] for r in self.rows if r["method"] == method)


def rejection_table(pvalues, alpha, seed):
    """Summarise per-method p-value arrays into rejection rates with binomial SEs."""
    rows = []
    for method, ps in pvalues.items():
        ps = np.asarray(ps)
        rej = int(np.count_nonzero(ps <= alpha))
        reps = ps.size
        rate = rej / reps
        rows.append({"method": method, "alpha": alpha, "rejections": rej, "reps": reps,
                     "size_or_power": rate, "mc_se": math.sqrt(rate * (1 - rate) / reps),
                     "seed": seed})
    return ExperimentResult(rows, seed, {k: np.asarray(v) for k, v in pvalues.items()})


def _run(scenario, dependent, independent, threads, progress=None):
    A = scenario_signal(scenario) if scenario.beta > 0 else None

    def one(r):
        return _replicate_pvalues(scenario, A, r, dependent, independent)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(scenario.reps)))
    else:
        results = []
        for r in range(scenario.reps):
            results.append(one(r))
            if progress:
                progress(r + 1, scenario.reps)
    pvalues = {k: [res[k] for res in results] for k in results[0]}
    return rejection_table(pvalues, scenario.alpha, scenario.seed)


def run_size_experiment(scenario, threads=1, progress=None):
    """Empirical size of the single tests and of every combined test, vanilla and adjusted."""
    return _run(scenario, dependent=True, independent=True, threads=threads, progress=progress)


def run_power_experiment(scenario, threads=1, progress=None):
    """Empirical power of the single tests and the dependence-adjusted combinations."""
    if not scenario.beta > 0:
        raise ConfigurationError("power experiment needs beta > 0")
    return _run(scenario, dependent=True, independent=False, threads=threads, progress=progress)


# -- the Cauchy counterexample --------------------------------------------------


def _counterexample_pvalues(rng, size):
    x = np.tan(np.pi * (rng.random((size, 2)) - 0.5))
    t1 = x[:, 0]
    t2 = np.where(t1 >= 0, np.abs(x[:, 1]), -np.abs(x[:, 1]))
    return np.column_stack([cauchy_sf(t1), cauchy_sf(t2)])


def cauchy_counterexample_sample(reps, seed):
    """``reps x 2`` array of p-values from sign-coupled standard Cauchy statistics."""
    if reps < 1:
        raise ConfigurationError("reps must be at least 1")
    return CounterexampleSampler().draw_range(0, int(reps), seed)


class CounterexampleSampler(PValueSampler):
    """The exact joint null of the counterexample, usable as a bootstrap law."""

    k = 2

    def sample(self, rng, size):
        return _counterexample_pvalues(rng, size)


def alpha_grid(stop=0.3, start=0.001, step=0.005):
    m = int(math.floor((stop - start) / step + 1e-9))
    return np.round(start + step * np.arange(m + 1), 10)


@dataclass
class CounterexampleResult:
    alphas: np.ndarray
    cauchy_size: np.ndarray
    dcauchy_size: np.ndarray
    reps: int
    B: int
    seed: int

    COLUMNS = ("alpha", "cauchy_size", "dcauchy_size")

    def records(self):
        return [{"alpha": float(a), "cauchy_size": float(c), "dcauchy_size": float(d)}
                for a, c, d in zip(self.alphas, self.cauchy_size, self.dcauchy_size)]


def run_counterexample_experiment(alphas=None, reps=100_000, B=1_000_000, seed=1, threads=1):
    """Size curves of the vanilla and the dependence-adjusted Cauchy combination.

    The adjusted version refers every replicate to one empirical null built
    from ``B`` independent draws of the exact joint law.
    """
    if reps < 10_000:
        raise ConfigurationError("reps must be at least 10000")
    alphas = alpha_grid() if alphas is None else np.asarray(alphas, dtype=float)
    sampler = CounterexampleSampler()
    spec = GcSpec("cauchy")
    p = sampler.draw_range(0, int(reps), derive_seed(seed, "observed"))
    null = EmpiricalNullCdf.from_pvalues(
        spec, bootstrap_pvalues(sampler, B, derive_seed(seed, "null"), threads))
    p_vanilla = combine_independent(spec, p)
    p_dep = combine_dependent(spec, p, null)
    cauchy = np.array([np.mean(p_vanilla <= a) for a in alphas])
    dcauchy = np.array([np.mean(p_dep <= a) for a in alphas])
    return CounterexampleResult(alphas, cauchy, dcauchy, int(reps), int(B), seed)

