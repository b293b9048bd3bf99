"""Partial Bayesian R-squared for terms left out of a reduced model.

The reduced mean ``mu0`` reuses the full model's draw with the excluded
terms zeroed in the linear predictor; nothing is refitted. With
``d_i = mu_i - mu0_i``:

* ``ESS1~ = sum_i (d_i - mean(d))^2``
* ``RSS0~ = RSS~ + ESS1~``
* partial R2 ``= ESS1~ / (RSS~ + ESS1~)``; marginal ratio ``= ESS1~ / TSS~``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import INTERCEPT, DrawSet, Gamm, ModelSpec, ParamDraw
from .rsq import RsqSummary, _require_n, centered_ss, decompose_draws, rss_tilde, summarize

__all__ = [
    "PartialSpec",
    "reduced_mean",
    "ess1",
    "rss0",
    "partial_r2",
    "marginal_ratio",
]


@dataclass(frozen=True)
class PartialSpec:
    kept: tuple[str, ...]
    excluded: tuple[str, ...]

    @classmethod
    def keep(cls, spec: ModelSpec, terms: Iterable[str]) -> "PartialSpec":
        """Keep the named terms (plus the intercept), exclude the rest."""
        terms = set(terms) | {INTERCEPT}
        names = spec.term_names
        unknown = terms - set(names)
        if unknown:
            raise KeyError(f"unknown terms {sorted(unknown)}; model terms are {names}")
        return cls(tuple(t for t in names if t in terms), tuple(t for t in names if t not in terms))

    @classmethod
    def exclude(cls, spec: ModelSpec, terms: Iterable[str]) -> "PartialSpec":
        terms = set(terms)
        if INTERCEPT in terms:
            raise ValueError("the intercept cannot be excluded")
        names = spec.term_names
        unknown = terms - set(names)
        if unknown:
            raise KeyError(f"unknown terms {sorted(unknown)}; model terms are {names}")
        return cls(tuple(t for t in names if t not in terms), tuple(t for t in names if t in terms))


def reduced_mean(model: Gamm, partial: PartialSpec, draw: ParamDraw, i: int | None = None):
    mu0 = model.mean(draw, partial.kept)
    return mu0 if i is None else float(mu0[i])


def _diff(model, partial, draw):
    return model.mean(draw) - model.mean(draw, partial.kept)


def ess1(model: Gamm, partial: PartialSpec, draw: ParamDraw) -> float:
    """Centered sum of squares of the full-minus-reduced mean differences."""
    _require_n(model.n)
    return float(centered_ss(_diff(model, partial, draw)))


def rss0(model: Gamm, partial: PartialSpec, draw: ParamDraw) -> float:
    """Reduced-model predictive residual SS via ``RSS~ + ESS1~``."""
    return rss_tilde(model, draw) + ess1(model, partial, draw)


def _per_draw(model: Gamm, partial: PartialSpec, draws: DrawSet):
    ess, rss = decompose_draws(model, draws)
    d = model.mean_matrix(draws) - model.mean_matrix(draws, partial.kept)
    return ess, rss, centered_ss(d, axis=1)


def partial_r2(model: Gamm, partial: PartialSpec, draws: DrawSet) -> RsqSummary:
    """Per-draw ``ESS1~ / (RSS~ + ESS1~)``."""
    _, rss, e1 = _per_draw(model, partial, draws)
    den = rss + e1
    valid = den > 0
    return summarize(np.divide(e1, den, out=np.full(e1.shape, np.nan), where=valid), valid)


def marginal_ratio(model: Gamm, partial: PartialSpec, draws: DrawSet) -> RsqSummary:
    """Per-draw ``ESS1~ / TSS~``."""
    ess, rss, e1 = _per_draw(model, partial, draws)
    tss = ess + rss
    valid = tss > 0
    return summarize(np.divide(e1, tss, out=np.full(e1.shape, np.nan), where=valid), valid)


def partial_table(model: Gamm, partial: PartialSpec, draws: DrawSet) -> dict[str, np.ndarray]:
    """Per-draw ``ess, rss, tss, ess1, rss0`` and both ratios, for output files."""
    ess, rss, e1 = _per_draw(model, partial, draws)
    tss = ess + rss
    with np.errstate(invalid="ignore", divide="ignore"):
        return {
            "ess": ess, "rss": rss, "tss": tss, "ess1": e1, "rss0": rss + e1,
            "partial_r2": np.where(rss + e1 > 0, e1 / (rss + e1), np.nan),
            "marginal_ratio": np.where(tss > 0, e1 / tss, np.nan),
        }
