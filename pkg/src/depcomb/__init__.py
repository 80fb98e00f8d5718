"""Combination of dependent p-values via bootstrap null distributions."""
from .combiners import GcSpec, combine_independent, gc_eval, independent_null_cdf
from .dependent import (
    EmpiricalNullCdf,
    GaussianCopulaSampler,
    PValueSampler,
    build_empirical_null,
    combine_dependent,
    gaussian_copula_sampler,
)
from .kernels import BACKEND

__version__ = "0.1.0"
