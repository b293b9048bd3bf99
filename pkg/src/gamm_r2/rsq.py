"""Posterior-predictive sums of squares and Bayesian R-squared.

For one posterior draw with conditional means ``mu_i`` and variances
``sigma2_i``:

* ``ESS~ = sum_i (mu_i - mean(mu))^2``
* ``RSS~ = (n - 1) * mean(sigma2)`` (closed form, no simulation)
* ``TSS~ = ESS~ + RSS~`` and ``R2 = ESS~ / TSS~``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DrawSet, Gamm, ParamDraw

__all__ = [
    "DegenerateError",
    "SsDecomp",
    "RsqSummary",
    "centered_ss",
    "ess_tilde",
    "rss_tilde",
    "decompose",
    "decompose_draws",
    "bayes_r2",
    "gelman_form_r2",
    "naive_bayes_r2",
    "classical_r2",
    "summarize",
]


class DegenerateError(ValueError):
    """The ratio is undefined (zero denominator)."""


def _require_n(n: int) -> None:
    if n < 2:
        raise ValueError(f"need at least two observations, got n={n}")


def centered_ss(values, axis: int = -1) -> np.ndarray:
    """Sum of squared deviations from the mean along ``axis``."""
    v = np.asarray(values, dtype=float)
    dev = v - v.mean(axis=axis, keepdims=True)
    return np.sum(dev * dev, axis=axis)


@dataclass(frozen=True)
class SsDecomp:
    ess: float
    rss: float
    tss: float
    r2: float

    @classmethod
    def from_parts(cls, ess: float, rss: float) -> "SsDecomp":
        tss = ess + rss
        if tss <= 0:
            raise DegenerateError("ESS~ = RSS~ = 0: R2 undefined for a constant deterministic model")
        return cls(float(ess), float(rss), float(tss), float(ess / tss))


@dataclass(frozen=True)
class RsqSummary:
    """Posterior summary of a per-draw ratio.

    ``samples`` keeps the non-degenerate draws in draw order and
    ``draw_ids`` their positions in the DrawSet.
    """

    samples: np.ndarray
    draw_ids: np.ndarray
    mean: float
    median: float
    sd: float
    q05: float
    q95: float
    n_degenerate: int = 0

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "median": self.median,
            "sd": self.sd,
            "q05": self.q05,
            "q95": self.q95,
            "n_draws": int(self.samples.size),
            "n_degenerate": self.n_degenerate,
        }

    def histogram(self, bins: int = 30) -> tuple[np.ndarray, np.ndarray]:
        """Bin counts over [0, 1] and the bin edges."""
        return np.histogram(self.samples, bins=bins, range=(0.0, 1.0))


def summarize(values, valid=None) -> RsqSummary:
    """Summaries over the valid entries of a per-draw vector."""
    values = np.asarray(values, dtype=float)
    valid = np.ones(values.size, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    n_bad = int((~valid).sum())
    if not valid.any():
        raise DegenerateError(f"all {values.size} draws are degenerate")
    s = values[valid]
    q05, q50, q95 = np.quantile(s, [0.05, 0.5, 0.95])  # type-7 interpolation
    sd = float(np.std(s, ddof=1)) if s.size > 1 else 0.0
    return RsqSummary(s, np.flatnonzero(valid), float(np.mean(s)), float(q50), sd,
                      float(q05), float(q95), n_bad)


def ess_tilde(model: Gamm, draw: ParamDraw) -> float:
    """Explained posterior-predictive sum of squares for one draw.

    Depends on the data only through the covariates, never on ``y``.
    """
    _require_n(model.n)
    return float(centered_ss(model.mean(draw)))


def rss_tilde(model: Gamm, draw: ParamDraw) -> float:
    """Residual posterior-predictive sum of squares, ``(n-1) * mean(sigma^2)``."""
    _require_n(model.n)
    return float((model.n - 1) * np.mean(model.variance(draw)))


def decompose(model: Gamm, draw: ParamDraw) -> SsDecomp:
    return SsDecomp.from_parts(ess_tilde(model, draw), rss_tilde(model, draw))


def decompose_draws(model: Gamm, draws: DrawSet):
    """Vectorised ``(ess, rss)`` arrays over a DrawSet."""
    _require_n(model.n)
    ess = centered_ss(model.mean_matrix(draws), axis=1)
    rss = (model.n - 1) * model.variance_matrix(draws).mean(axis=1)
    return ess, rss


def bayes_r2(model: Gamm, draws: DrawSet) -> RsqSummary:
    """Per-draw ``ESS~ / TSS~`` summarised over the posterior.

    Draws with ``ESS~ = RSS~ = 0`` are excluded and counted.
    """
    ess, rss = decompose_draws(model, draws)
    tss = ess + rss
    valid = tss > 0
    r2 = np.divide(ess, tss, out=np.full(ess.shape, np.nan), where=valid)
    return summarize(r2, valid)


def gelman_form_r2(model: Gamm, draw: ParamDraw) -> float:
    """``var_fit / (var_fit + var_res)`` with ``var_fit = ESS~/(n-1)``."""
    _require_n(model.n)
    mu = model.mean(draw)
    var_fit = centered_ss(mu) / (model.n - 1)
    var_res = float(np.mean(model.variance(draw)))
    if var_fit + var_res <= 0:
        raise DegenerateError("var_fit = var_res = 0")
    return float(var_fit / (var_fit + var_res))


def naive_bayes_r2(model: Gamm, draws: DrawSet | ParamDraw) -> float:
    """Posterior mean of the explained SS over the observed total SS.

    Not bounded by one.
    """
    if isinstance(draws, ParamDraw):
        draws = DrawSet.from_draws([draws])
    tss = float(centered_ss(model.data.y))
    if tss <= 0:
        raise DegenerateError("observed response is constant")
    ess = centered_ss(model.mean_matrix(draws), axis=1)
    return float(np.mean(ess) / tss)


def classical_r2(y, X) -> tuple[float, float, float, float]:
    """OLS coefficient of determination.

    ``X`` must contain an intercept column and have full column rank.
    Returns ``(r2, tss, rss, ess)``.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be an n x p matrix matching y")
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need n > p, got n={n}, p={p}")
    if np.linalg.matrix_rank(X) < p:
        raise ValueError("design matrix is rank deficient")
    ones = np.ones(n)
    resid_one, *_ = np.linalg.lstsq(X, ones, rcond=None)
    if not np.allclose(X @ resid_one, ones, atol=1e-8):
        raise ValueError("design matrix must span an intercept column")
    tss = float(centered_ss(y))
    if tss <= 0:
        raise DegenerateError("response is constant")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ coef
    rss = float(np.sum((y - fitted) ** 2))
    ess = float(np.sum((fitted - y.mean()) ** 2))
    return ess / tss, tss, rss, ess
