"""Brute-force Monte-Carlo checks of the analytic sum-of-squares formulas.

Every estimate replicates ``y~`` from the conditional distribution of one
draw and averages the realised sum of squares. Replicates are generated
in fixed-size chunks, each with its own child stream of
``SeedSequence(seed)``, so results do not depend on how chunks are
scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .families import FAMILIES, Family
from .model import Dataset, Gamm, ModelSpec, ParamDraw, SmoothTerm
from .partial import PartialSpec, rss0
from .rsq import centered_ss, ess_tilde, rss_tilde

__all__ = [
    "McEstimate",
    "mc_tss",
    "mc_rss",
    "mc_rss0",
    "mc_all",
    "conjugate_posterior",
    "FuzzCase",
    "random_case",
    "check_case",
]

CHUNK = 2048


@dataclass(frozen=True)
class McEstimate:
    mean: float
    se: float
    M: int
    seed: int

    def z(self, value: float) -> float:
        """Standardised distance of ``value`` from the estimate."""
        diff = self.mean - value
        if self.se == 0:
            return 0.0 if abs(diff) <= 1e-9 * max(1.0, abs(value)) else float("inf")
        return float(diff / self.se)

    def agrees(self, value: float, k: float = 4.0) -> bool:
        return abs(self.z(value)) <= k


def _estimate(values: np.ndarray, seed: int) -> McEstimate:
    M = values.size
    # np.mean / np.std use pairwise summation
    return McEstimate(float(np.mean(values)), float(np.std(values, ddof=1) / np.sqrt(M)), M, seed)


def _replicate_ss(model: Gamm, draw: ParamDraw, M: int, seed: int, mu0=None):
    """Per-replicate (total, residual, reduced-residual) sums of squares."""
    if M < 2:
        raise ValueError("need at least two replicates")
    mu = model.mean(draw)
    fam = model.family
    tot = np.empty(M)
    res = np.empty(M)
    red = np.empty(M) if mu0 is not None else None
    n_chunks = -(-M // CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    for c, child in enumerate(children):
        lo = c * CHUNK
        hi = min(M, lo + CHUNK)
        rng = np.random.default_rng(child)
        y = fam.sample_response(mu, draw.phi, rng, size=(hi - lo, mu.size))
        tot[lo:hi] = centered_ss(y, axis=1)
        res[lo:hi] = centered_ss(y - mu, axis=1)
        if mu0 is not None:
            red[lo:hi] = centered_ss(y - mu0, axis=1)
    return tot, res, red


def mc_tss(model: Gamm, draw: ParamDraw, M: int = 100_000, seed: int = 0) -> McEstimate:
    """Monte-Carlo ``E[sum (y~_i - mean(y~))^2 | draw]``."""
    tot, _, _ = _replicate_ss(model, draw, M, seed)
    return _estimate(tot, seed)


def mc_rss(model: Gamm, draw: ParamDraw, M: int = 100_000, seed: int = 0) -> McEstimate:
    """Monte-Carlo ``E[sum (e~_i - mean(e~))^2 | draw]`` with ``e~ = y~ - mu``."""
    _, res, _ = _replicate_ss(model, draw, M, seed)
    return _estimate(res, seed)


def mc_rss0(model: Gamm, partial: PartialSpec, draw: ParamDraw, M: int = 100_000,
            seed: int = 0) -> McEstimate:
    """Monte-Carlo reduced-model residual SS with ``e0~ = y~ - mu0``."""
    mu0 = model.mean(draw, partial.kept)
    _, _, red = _replicate_ss(model, draw, M, seed, mu0=mu0)
    return _estimate(red, seed)


def mc_all(model: Gamm, draw: ParamDraw, M: int = 100_000, seed: int = 0,
           partial: PartialSpec | None = None) -> dict[str, McEstimate]:
    """``tss``, ``rss`` (and ``rss0``) estimates from one shared set of replicates."""
    mu0 = None if partial is None else model.mean(draw, partial.kept)
    tot, res, red = _replicate_ss(model, draw, M, seed, mu0=mu0)
    out = {"tss": _estimate(tot, seed), "rss": _estimate(res, seed)}
    if red is not None:
        out["rss0"] = _estimate(red, seed)
    return out


def conjugate_posterior(y, prior_mean: float, prior_sd: float, obs_var: float):
    """Normal-normal posterior ``(mean, sd)`` of a mean with known variance.

    ``prior_sd = inf`` gives the flat-prior limit.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if not prior_sd > 0 or not obs_var > 0:
        raise ValueError("prior_sd and obs_var must be positive")
    data_prec = y.size / obs_var
    prior_prec = 0.0 if np.isinf(prior_sd) else 1.0 / prior_sd**2
    prec = prior_prec + data_prec
    mean = (prior_prec * prior_mean + data_prec * y.mean()) / prec
    return float(mean), float(1.0 / np.sqrt(prec))


# -- fuzzing -----------------------------------------------------------------

_CENTERS = {
    "gaussian": 0.0,
    "gamma": 1.0,
    "inverse_gaussian": 1.0,
    "beta": 0.0,
    "bernoulli": 0.0,
    "poisson": np.log(4.0),
    "neg_binomial": np.log(4.0),
}
_PHI_RANGE = {
    "gaussian": (0.2, 5.0),
    "gamma": (0.5, 10.0),
    "inverse_gaussian": (1.0, 10.0),
    "beta": (2.0, 30.0),
    "neg_binomial": (0.5, 10.0),
}
_PLACEHOLDER_Y = {"gaussian": 0.0, "gamma": 1.0, "inverse_gaussian": 1.0, "beta": 0.5,
                  "bernoulli": 0.0, "poisson": 0.0, "neg_binomial": 0.0}


@dataclass
class FuzzCase:
    family: Family
    model: Gamm
    draw: ParamDraw
    partial: PartialSpec


def random_case(rng: np.random.Generator, family: str | None = None,
                n_range=(8, 30)) -> FuzzCase:
    """A random (family, model, draw, partial split) with valid means."""
    fam = FAMILIES[family] if family else FAMILIES[rng.choice(sorted(FAMILIES))]
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    m1 = int(rng.integers(0, 3))
    n_factors = int(rng.integers(0, 2))
    n_smooth = int(rng.integers(0, 2))
    fixed_names = tuple(f"x{j + 1}" for j in range(m1))
    random_names = tuple(f"g{j + 1}" for j in range(n_factors))
    smooth = tuple(SmoothTerm(f"u{j + 1}", k=int(rng.integers(5, min(8, n) + 1))) for j in range(n_smooth))
    spec = ModelSpec(fam, fixed_names, random_names, smooth)
    cols = {"y": np.full(n, _PLACEHOLDER_Y[fam.name])}
    for name in fixed_names:
        cols[name] = rng.normal(size=n)
    for name in random_names:
        L = int(rng.integers(2, 5))
        codes = np.concatenate([np.arange(1, L + 1), rng.integers(1, L + 1, n - L)])
        cols[name] = rng.permutation(codes)
    for term in smooth:
        cols[term.var] = rng.random(n)
    model = Gamm(spec, Dataset.from_columns(cols, spec))

    phi = None
    if fam.has_dispersion:
        lo, hi = _PHI_RANGE[fam.name]
        phi = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    others = spec.term_names[1:]
    keep = [t for t in others if rng.random() < 0.5]
    partial = PartialSpec.keep(spec, keep)

    def valid(eta):
        return np.all(fam.valid_eta(eta)) and np.all(fam.valid_mean(fam._inverse_link(eta)))

    scale = 0.4
    for _ in range(50):
        coef = scale * rng.normal(size=model.p)
        coef[0] = 0.0
        base = model.design @ coef
        coef[0] = _CENTERS[fam.name] - base.mean()
        nb, nre = model.n_beta, model.n_b
        draw = ParamDraw(
            coef[:nb], coef[nb:nb + nre], coef[nb + nre:], phi,
            np.exp(rng.normal(size=n_factors)), np.exp(rng.normal(size=n_smooth)),
        )
        # the reduced mean must be valid as well as the full one
        if valid(model.eta(draw)) and valid(model.eta(draw, partial.kept)):
            break
        scale /= 2.0
    else:  # pragma: no cover - the scale shrinks to a valid constant predictor
        raise RuntimeError("could not draw a valid case")
    return FuzzCase(fam, model, draw, partial)


def check_case(case: FuzzCase, M: int = 100_000, seed: int = 0, k: float = 4.0) -> list[dict]:
    """Compare each analytic formula with its Monte-Carlo estimate.

    Rows carry ``formula, analytic, mc_mean, se, z, passed``.
    """
    m, d, p = case.model, case.draw, case.partial
    est = mc_all(m, d, M, seed, partial=p)
    ess = ess_tilde(m, d)
    rss = rss_tilde(m, d)
    analytic = {"tss": ess + rss, "rss": rss, "rss0": rss0(m, p, d)}
    rows = []
    for key in ("tss", "rss", "rss0"):
        e = est[key]
        z = e.z(analytic[key])
        rows.append({
            "family": case.family.name,
            "formula": key,
            "analytic": analytic[key],
            "mc_mean": e.mean,
            "se": e.se,
            "z": z,
            "passed": abs(z) <= k,
        })
    return rows
