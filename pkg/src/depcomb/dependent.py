"""Dependence-adjusted combination through a bootstrap null distribution.

The null law of the combination statistic is approximated by the empirical
distribution of the statistic over ``B`` draws of null p-value vectors that
share the dependence of the observed ones. The observed statistic is then
referred to that empirical distribution.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sc

from ._rng import CHUNK, stream
from .combiners import GcSpec, gc_eval
from .errors import ConfigurationError, DataValidationError, DomainError

DEFAULT_B = 500


class PValueSampler:
    """Joint sampler of null p-value vectors.

    Subclasses implement :meth:`sample`, drawing ``size`` vectors from a given
    Generator. Replicate ``b`` under base seed ``s`` always comes from the
    stream keyed by ``(s, b // CHUNK)``, so any replicate range is reproducible
    regardless of how the range is split across workers.
    """

    k = None

    def sample(self, rng, size):
        raise NotImplementedError

    def _chunk(self, seed, index):
        out = np.asarray(self.sample(stream(seed, "replicates", index), CHUNK), dtype=float)
        if out.shape != (CHUNK, self.k):
            raise DataValidationError(
                f"sampler returned shape {out.shape}, expected {(CHUNK, self.k)}")
        return out

    def draw_range(self, start, stop, seed):
        """Replicates ``start <= b < stop`` as a ``(stop - start, k)`` array."""
        if stop <= start:
            return np.empty((0, self.k))
        first, last = start // CHUNK, (stop - 1) // CHUNK
        block = np.vstack([self._chunk(seed, i) for i in range(first, last + 1)])
        offset = first * CHUNK
        return block[start - offset:stop - offset]

    def draw(self, b, seed):
        """Replicate ``b`` (0-based) as a length-``k`` vector."""
        return self.draw_range(b, b + 1, seed)[0]


class IndependentUniformSampler(PValueSampler):
    def __init__(self, k):
        self.k = int(k)

    def sample(self, rng, size):
        return rng.random((size, self.k))


class GaussianCopulaSampler(PValueSampler):
    """p-values ``Phi(Z)`` with ``Z ~ N(0, R)`` for a correlation matrix ``R``."""

    def __init__(self, corr):
        corr = np.atleast_2d(np.asarray(corr, dtype=float))
        k = corr.shape[0]
        if corr.shape != (k, k) or not np.allclose(corr, corr.T):
            raise DomainError("correlation matrix must be square and symmetric")
        if not np.allclose(np.diag(corr), 1.0):
            raise DomainError("correlation matrix must have a unit diagonal")
        vals, vecs = np.linalg.eigh(corr)
        if vals.min() <= 1e-12:
            raise DomainError("correlation matrix must be positive definite")
        self.k = k
        self.corr = corr
        self._root = (vecs * np.sqrt(vals)) @ vecs.T

    @classmethod
    def equicorrelated(cls, rho, k):
        rho = float(rho)
        k = int(k)
        if not -1.0 < rho < 1.0:
            raise DomainError("rho must lie in (-1, 1)")
        if k > 1 and rho <= -1.0 / (k - 1):
            raise DomainError(f"equicorrelation {rho} is not positive definite for k={k}")
        corr = np.full((k, k), rho)
        np.fill_diagonal(corr, 1.0)
        return cls(corr)

    def sample(self, rng, size):
        z = rng.standard_normal((size, self.k)) @ self._root
        return sc.ndtr(z)


def gaussian_copula_sampler(rho, k):
    return GaussianCopulaSampler.equicorrelated(rho, k)


def bootstrap_pvalues(sampler, B, seed, threads=1):
    """Draw ``B`` null p-value vectors; the result does not depend on ``threads``."""
    B = int(B)
    if B < 1:
        raise ConfigurationError("B must be at least 1")
    if threads <= 1 or B <= CHUNK:
        return sampler.draw_range(0, B, seed)
    bounds = [(s, min(s + CHUNK, B)) for s in range(0, B, CHUNK)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda ab: sampler.draw_range(ab[0], ab[1], seed), bounds))
    return np.vstack(parts)


@dataclass(frozen=True)
class EmpiricalNullCdf:
    """Bootstrap null distribution of a combination statistic.

    For increasing combination functions ``evaluate(z)`` is the fraction of
    bootstrap statistics ``<= z``; for decreasing ones (harmonic mean, Pareto)
    it is the fraction ``>= z``. With ``add_one`` the count and the
    denominator are both incremented, which avoids exact zeros.
    """

    spec: GcSpec
    k: int
    values: np.ndarray = field(repr=False)
    add_one: bool = False

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size == 0:
            raise ConfigurationError("empirical null needs at least one value")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "k", int(self.k))

    @property
    def B(self):
        return self.values.size

    @classmethod
    def from_pvalues(cls, spec, pvalues, add_one=False):
        pvalues = np.atleast_2d(np.asarray(pvalues, dtype=float))
        return cls(spec, pvalues.shape[1], np.atleast_1d(gc_eval(spec, pvalues)), add_one)

    def evaluate(self, z):
        z = np.asarray(z, dtype=float)
        if self.spec.increasing:
            count = np.searchsorted(self.values, z, side="right")
        else:
            count = self.B - np.searchsorted(self.values, z, side="left")
        if self.add_one:
            out = (count + 1.0) / (self.B + 1.0)
        else:
            out = count / self.B
        return float(out) if out.ndim == 0 else out

    def save(self, path):
        """Write a flat text file: ``#``-prefixed header, then one value per line."""
        with open(path, "w") as fh:
            fh.write("# depcomb empirical null v1\n")
            fh.write(f"# method={self.spec.descriptor()}\n")
            fh.write(f"# k={self.k}\n# B={self.B}\n")
            for v in self.values:
                fh.write(repr(float(v)) + "\n")

    @classmethod
    def load(cls, path):
        meta, values = {}, []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, sep, value = line.lstrip("# ").partition("=")
                    if sep:
                        meta[key.strip()] = value.strip()
                    continue
                try:
                    values.append(float(line))
                except ValueError:
                    raise DataValidationError(f"{path}:{lineno}: not a number: {line!r}") from None
        for key in ("method", "k", "B"):
            if key not in meta:
                raise DataValidationError(f"{path}: missing header field {key!r}")
        if int(meta["B"]) != len(values):
            raise DataValidationError(
                f"{path}: header says B={meta['B']} but {len(values)} values follow")
        return cls(GcSpec.parse(meta["method"]), int(meta["k"]), np.array(values))


def build_empirical_null(sampler, spec, B=DEFAULT_B, seed=0, threads=1, add_one=False):
    return EmpiricalNullCdf.from_pvalues(
        spec, bootstrap_pvalues(sampler, B, seed, threads), add_one=add_one)


def empirical_cdf_eval(cdf, z):
    return cdf.evaluate(z)


def combine_dependent(spec, p, cdf):
    """Dependence-adjusted combined p-value of ``p`` (a vector, or rows of a matrix)."""
    if spec != cdf.spec:
        raise ConfigurationError(f"null was built for {cdf.spec.label}, not {spec.label}")
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != cdf.k:
        raise ConfigurationError(f"null was built for k={cdf.k}, got {p.shape[-1]} p-values")
    return cdf.evaluate(gc_eval(spec, p))
