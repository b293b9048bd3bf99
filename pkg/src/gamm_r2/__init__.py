"""Bayesian R-squared for generalized additive mixed models.

Fits GAMMs over exponential-family responses by adaptive MCMC and
decomposes the posterior predictive variation of each draw into explained
and residual parts.
"""
__version__ = "0.1.0"

from .families import FAMILIES, DomainError, Family, get_family  # noqa: E402
from .model import (  # noqa: E402
    Dataset,
    DrawSet,
    Gamm,
    ModelSpec,
    ParamDraw,
    PriorConfig,
    SmoothTerm,
)
from .partial import PartialSpec, ess1, marginal_ratio, partial_r2, reduced_mean, rss0  # noqa: E402
from .rsq import (  # noqa: E402
    RsqSummary,
    SsDecomp,
    bayes_r2,
    classical_r2,
    decompose,
    ess_tilde,
    gelman_form_r2,
    naive_bayes_r2,
    rss_tilde,
)
from .sampler import SamplerConfig, log_posterior, sample_posterior, sample_predictive  # noqa: E402

__all__ = [
    "FAMILIES", "DomainError", "Family", "get_family",
    "Dataset", "DrawSet", "Gamm", "ModelSpec", "ParamDraw", "PriorConfig", "SmoothTerm",
    "PartialSpec", "ess1", "marginal_ratio", "partial_r2", "reduced_mean", "rss0",
    "RsqSummary", "SsDecomp", "bayes_r2", "classical_r2", "decompose", "ess_tilde",
    "gelman_form_r2", "naive_bayes_r2", "rss_tilde",
    "SamplerConfig", "log_posterior", "sample_posterior", "sample_predictive",
]
