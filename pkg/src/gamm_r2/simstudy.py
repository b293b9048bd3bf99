"""Synthetic negative-binomial GAMM study with three nested fits.

Data: ``eta = beta0 + beta1 x1 + b[z1] + f1(u1)``, ``y ~ NB(mean e^eta, size phi)``
with ``x1, u1 ~ U(0, 1)``, two groups drawn with equal probability and
``b ~ N(0, 1)``. The fits are fixed-only, fixed + random intercept, and
fixed + random + smooth of ``u1``.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .families import NegativeBinomial
from .model import INTERCEPT, Dataset, DrawSet, Gamm, ModelSpec, SmoothTerm
from .partial import PartialSpec, partial_r2
from .rsq import RsqSummary, bayes_r2
from .sampler import SamplerConfig, sample_posterior

__all__ = [
    "DEFAULT_SEED",
    "SMOOTH_RMSE_THRESHOLD",
    "Section5Config",
    "SimulatedData",
    "f1",
    "simulate_section5",
    "model_specs",
    "run_section5",
    "Section5Report",
]

DEFAULT_SEED = 20240501

# RMSE of the posterior-mean smooth against the (centred) truth on a 101-point
# grid. The reference run at DEFAULT_SEED gives 0.203 and seeds 0-4 give
# 0.095-0.184; the bound leaves about 50% headroom over the reference.
SMOOTH_RMSE_THRESHOLD = 0.30


@dataclass(frozen=True)
class Section5Config:
    n: int = 200
    beta0: float = 3.0
    beta1: float = 2.0
    phi: float = 2.0
    seed: int = DEFAULT_SEED
    include_random: bool = True
    include_smooth: bool = True

    def __post_init__(self):
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if not self.phi > 0:
            raise ValueError("phi must be positive")


def f1(u):
    """The true smooth: ``2250 (20 u^11 (1-u)^6 + u^3 (1-u)^10) - 3/4``."""
    u = np.asarray(u, dtype=float)
    out = 2250.0 * (20.0 * u**11 * (1.0 - u) ** 6 + u**3 * (1.0 - u) ** 10) - 0.75
    return float(out) if out.ndim == 0 else out


@dataclass
class SimulatedData:
    columns: dict[str, np.ndarray]
    truth: dict = field(default_factory=dict)

    def truth_json(self) -> str:
        return json.dumps(self.truth, indent=2, sort_keys=True)

    @staticmethod
    def truth_from_json(text: str) -> dict:
        return json.loads(text)


def simulate_section5(cfg: Section5Config = Section5Config()) -> SimulatedData:
    """Simulate the study dataset; deterministic in ``cfg.seed``.

    Draw order: u1, b, x1, group labels, y.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    u1 = rng.random(n)
    f = f1(u1) if cfg.include_smooth else np.zeros(n)
    b = rng.standard_normal(2) if cfg.include_random else np.zeros(2)
    x1 = rng.random(n)
    z1 = rng.integers(1, 3, size=n)
    eta = cfg.beta0 + cfg.beta1 * x1 + b[z1 - 1] + f
    mu = np.exp(eta)
    y = NegativeBinomial().sample_response(mu, cfg.phi, rng)
    truth = {
        "config": asdict(cfg),
        "b": b.tolist(),
        "f1": f.tolist(),
        "eta": eta.tolist(),
    }
    return SimulatedData({"y": y, "x1": x1, "z1": z1, "u1": u1}, truth)


def model_specs(k: int = 10) -> dict[str, ModelSpec]:
    fam = NegativeBinomial()
    return {
        "fit0": ModelSpec(fam, ("x1",)),
        "fit1": ModelSpec(fam, ("x1",), ("z1",)),
        "fit2": ModelSpec(fam, ("x1",), ("z1",), (SmoothTerm("u1", k=k),)),
    }


@dataclass
class Section5Report:
    r2: dict[str, RsqSummary]
    partial: RsqSummary
    draws: dict[str, DrawSet]
    models: dict[str, Gamm]
    smooth_grid: dict[str, np.ndarray]
    seed: int

    @property
    def smooth_rmse(self) -> float:
        g = self.smooth_grid
        return float(np.sqrt(np.mean((g["post_mean"] - g["true_f1"]) ** 2)))

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "r2": {k: v.to_dict() for k, v in self.r2.items()},
            "partial_r2": self.partial.to_dict(),
            "partial_keep": [INTERCEPT, "x1"],
            "smooth_rmse": self.smooth_rmse,
            "beta1_mean": float(self.draws["fit2"].beta[:, 1].mean()),
        }


def smooth_grid(model: Gamm, draws: DrawSet, n_grid: int = 101) -> dict[str, np.ndarray]:
    """Posterior of the fitted ``u1`` smooth on a grid, against the truth.

    Both curves are centred over the training inputs, since the intercept
    absorbs the level of the smooth.
    """
    term = model.spec.smooth[0]
    basis = model.bases[0]
    u = np.linspace(basis.lower, basis.upper, n_grid)
    curves = draws.gamma[:, : term.k] @ basis.evaluate(u).T
    truth = f1(u) - np.mean(f1(model.data.smooth[:, 0]))
    return {
        "u": u,
        "true_f1": truth,
        "post_mean": curves.mean(axis=0),
        "q05": np.quantile(curves, 0.05, axis=0),
        "q95": np.quantile(curves, 0.95, axis=0),
    }


def run_section5(cfg: Section5Config = Section5Config(),
                 sampler_cfg: SamplerConfig | None = None) -> Section5Report:
    """Fit the three models and compute their R2 and fit2's partial R2."""
    sim = simulate_section5(cfg)
    if sampler_cfg is None:
        sampler_cfg = SamplerConfig(seed=cfg.seed)
    models = {name: Gamm(spec, Dataset.from_columns(sim.columns, spec))
              for name, spec in model_specs().items()}
    # the fits are independent and each is seeded by sampler_cfg alone, so
    # running them concurrently does not change any draw
    with ThreadPoolExecutor(max_workers=len(models)) as pool:
        futures = {name: pool.submit(sample_posterior, m, sampler_cfg) for name, m in models.items()}
        draws = {name: f.result() for name, f in futures.items()}
    r2 = {name: bayes_r2(models[name], draws[name]) for name in models}
    fit2 = models["fit2"]
    part = partial_r2(fit2, PartialSpec.keep(fit2.spec, [INTERCEPT, "x1"]), draws["fit2"])
    return Section5Report(r2, part, draws, models, smooth_grid(fit2, draws["fit2"]), cfg.seed)
