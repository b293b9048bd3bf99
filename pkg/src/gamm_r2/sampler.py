"""Log posterior and an adaptive blocked random-walk Metropolis sampler.

Priors
------
* ``beta ~ N(0, beta_scale^2)`` iid
* ``b | psi ~ N(0, psi_f^2)`` per level of factor ``f``; ``psi_f ~ N+(0, psi_scale^2)``
* ``gamma_j | tau_j ~ N(0, tau_j^2 S_j^+)`` on the range of the penalty and
  ``N(0, beta_scale^2)`` on its null space; ``tau_j ~ N+(0, tau_scale^2)``.
  This is the proper form of ``exp(-lambda_j gamma^T S_j gamma / alpha_j)``
  with ``lambda_j / alpha_j = 1 / (2 tau_j^2)``.
* ``phi`` per ``PriorConfig.dispersion_prior``.

Sampling works on an unconstrained, non-centered vector: ``b = psi * z_b``,
``gamma_j = Q_j diag(scale_j) z_j`` and log scales. Blocks are
(beta), (z_b), (z_gamma per smooth), (log psi), (log tau), (log phi), plus a
joint block over all coefficients that captures intercept/random-effect
correlation.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import DrawSet, Gamm, ParamDraw

__all__ = [
    "SamplerConfig",
    "InitializationError",
    "log_posterior",
    "log_prior_terms",
    "sample_posterior",
    "sample_predictive",
    "split_rhat",
]

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)
_HALF_NORMAL_CONST = 0.5 * np.log(2.0 / np.pi)


class InitializationError(RuntimeError):
    """No starting point with a finite log posterior was found."""


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup: int = 1000
    iters: int = 1000
    seed: int = 0
    target_accept: float = 0.234
    thin: int = 1
    threads: int | None = None

    def __post_init__(self):
        if self.chains < 1 or self.warmup < 1 or self.iters < 1 or self.thin < 1:
            raise ValueError("chains, warmup, iters and thin must all be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


def _normal_logpdf(x, scale):
    x = np.asarray(x, dtype=float)
    return -0.5 * _LOG_2PI - np.log(scale) - 0.5 * (x / scale) ** 2


def _half_normal_logpdf(x, scale):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, _HALF_NORMAL_CONST - np.log(scale) - 0.5 * (x / scale) ** 2, -np.inf)


def _penalty_eigen(S: np.ndarray, tol: float = 1e-10):
    """Eigen-split of a penalty into range (positive eigenvalues) and null space."""
    w, Q = np.linalg.eigh(S)
    pos = w > tol * max(w.max(), 1.0)
    return w[pos], Q[:, pos], Q[:, ~pos]


def _dispersion_logpdf(phi, priors):
    if priors.dispersion_prior == "half_normal":
        return float(_half_normal_logpdf(phi, priors.dispersion_scale))
    if priors.dispersion_prior == "lognormal":
        if phi <= 0:
            return -np.inf
        lp = np.log(phi)
        return float(_normal_logpdf(lp, priors.dispersion_scale) - lp)
    return 0.0


def log_prior_terms(model: Gamm, draw: ParamDraw) -> dict[str, float]:
    """Each prior/random-effect log-density term of the joint posterior."""
    pr = model.spec.priors
    out = {"beta": float(np.sum(_normal_logpdf(draw.beta, pr.beta_scale)))}
    if model.n_b:
        psi_per_level = draw.psi[model.b_factor_index]
        if np.any(psi_per_level <= 0):
            out["b"] = -np.inf
        else:
            out["b"] = float(np.sum(_normal_logpdf(draw.b, psi_per_level)))
        out["psi"] = float(np.sum(_half_normal_logpdf(draw.psi, pr.psi_scale)))
    if model.spec.smooth:
        total = 0.0
        for j, term in enumerate(model.spec.smooth):
            g = draw.gamma[model.slices[term.name].start - model.n_beta - model.n_b:][: term.k]
            tau = draw.tau[j]
            if tau <= 0:
                total = -np.inf
                break
            lam, Qr, Qn = _penalty_eigen(model.penalties[j].S)
            zr = Qr.T @ g
            zn = Qn.T @ g
            total += float(np.sum(_normal_logpdf(zr, tau / np.sqrt(lam))))
            total += float(np.sum(_normal_logpdf(zn, pr.beta_scale)))
        out["gamma"] = total
        out["tau"] = float(np.sum(_half_normal_logpdf(draw.tau, pr.tau_scale)))
    if model.spec.samples_dispersion:
        out["phi"] = _dispersion_logpdf(draw.phi, pr)
    return out


def log_likelihood(model: Gamm, draw: ParamDraw) -> float:
    fam = model.family
    eta = model.eta(draw)
    if not np.all(fam.valid_eta(eta)):
        return -np.inf
    mu = fam._inverse_link(eta)
    if not np.all(fam.valid_mean(mu)):
        return -np.inf
    if fam.has_dispersion and not (draw.phi is not None and 0 < draw.phi < np.inf):
        return -np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = float(np.sum(fam.log_density(model.data.y, mu, draw.phi)))
    return ll if not np.isnan(ll) else -np.inf


def log_posterior(model: Gamm, draw: ParamDraw) -> float:
    """Unnormalised log joint posterior of (beta, b, gamma, psi, tau, phi).

    Out-of-support draws give ``-inf``; the result is never NaN.
    """
    model.check_draw(draw)
    scales = [draw.psi, draw.tau] + ([np.array([draw.phi])] if model.spec.samples_dispersion else [])
    if any(np.any(~(s > 0)) for s in scales):
        return -np.inf
    total = sum(log_prior_terms(model, draw).values())
    if not np.isfinite(total):
        return -np.inf
    total += log_likelihood(model, draw)
    return float(total) if not np.isnan(total) else -np.inf


class _Target:
    """Non-centered unconstrained target for one model."""

    def __init__(self, model: Gamm):
        self.model = model
        spec = model.spec
        pr = spec.priors
        self.fam = model.family
        self.y = model.data.y
        self.X = model.design
        nb, nre, ng = model.n_beta, model.n_b, model.n_gamma
        nf, ns = len(spec.random), len(spec.smooth)
        self.dispersion = spec.samples_dispersion
        self.fixed_phi = pr.dispersion_scale if (spec.has_dispersion and not self.dispersion) else None
        sizes = [("beta", nb), ("zb", nre), ("zg", ng), ("logpsi", nf), ("logtau", ns),
                 ("logphi", 1 if self.dispersion else 0)]
        self.sl = {}
        pos = 0
        for name, size in sizes:
            self.sl[name] = slice(pos, pos + size)
            pos += size
        self.dim = pos
        self.b_factor = model.b_factor_index

        # gamma_j = Q_j diag(scale_j(tau)) z_j ; range columns first
        self.smooth_maps = []
        off = self.sl["zg"].start
        for j, term in enumerate(spec.smooth):
            lam, Qr, Qn = _penalty_eigen(model.penalties[j].S)
            Q = np.hstack([Qr, Qn])
            inv_sqrt = np.concatenate([1.0 / np.sqrt(lam), np.zeros(Qn.shape[1])])
            null_scale = np.concatenate([np.zeros(lam.size), np.full(Qn.shape[1], pr.beta_scale)])
            self.smooth_maps.append((slice(off, off + term.k), Q, inv_sqrt, null_scale, lam.size))
            off += term.k

        blocks = [("beta", self.sl["beta"])]
        if nre:
            blocks.append(("b", self.sl["zb"]))
        for j, term in enumerate(spec.smooth):
            blocks.append((f"gamma:{term.name}", self.smooth_maps[j][0]))
        if nf:
            blocks.append(("psi", self.sl["logpsi"]))
        if ns:
            blocks.append(("tau", self.sl["logtau"]))
        if self.dispersion:
            blocks.append(("phi", self.sl["logphi"]))
        coef_end = self.sl["zg"].stop
        if nre or ng:
            blocks.append(("joint", slice(0, self.dim)))
        self.blocks = blocks

    def to_draw(self, theta: np.ndarray) -> ParamDraw:
        beta = theta[self.sl["beta"]].copy()
        psi = np.exp(theta[self.sl["logpsi"]])
        tau = np.exp(theta[self.sl["logtau"]])
        b = psi[self.b_factor] * theta[self.sl["zb"]]
        gamma = np.empty(self.model.n_gamma)
        pos = 0
        for j, (sl, Q, inv_sqrt, null_scale, _) in enumerate(self.smooth_maps):
            scale = tau[j] * inv_sqrt + null_scale
            k = Q.shape[0]
            gamma[pos:pos + k] = Q @ (scale * theta[sl])
            pos += k
        if self.dispersion:
            phi = float(np.exp(theta[self.sl["logphi"]][0]))
        else:
            phi = self.fixed_phi
        return ParamDraw(beta, b, gamma, phi, psi, tau)

    def from_draw(self, draw: ParamDraw) -> np.ndarray:
        theta = np.zeros(self.dim)
        theta[self.sl["beta"]] = draw.beta
        theta[self.sl["logpsi"]] = np.log(draw.psi)
        theta[self.sl["logtau"]] = np.log(draw.tau)
        if self.model.n_b:
            theta[self.sl["zb"]] = draw.b / draw.psi[self.b_factor]
        pos = 0
        for j, (sl, Q, inv_sqrt, null_scale, _) in enumerate(self.smooth_maps):
            k = Q.shape[0]
            scale = draw.tau[j] * inv_sqrt + null_scale
            theta[sl] = (Q.T @ draw.gamma[pos:pos + k]) / scale
            pos += k
        if self.dispersion:
            theta[self.sl["logphi"]] = np.log(draw.phi)
        return theta

    def log_jacobian(self, theta: np.ndarray) -> float:
        """log |d(natural params) / d theta|."""
        logpsi = theta[self.sl["logpsi"]]
        logtau = theta[self.sl["logtau"]]
        lj = float(np.sum(logpsi)) + float(np.sum(logtau))
        lj += float(np.sum(logpsi[self.b_factor]))
        for j, (_, _, inv_sqrt, null_scale, n_range) in enumerate(self.smooth_maps):
            lj += n_range * logtau[j] + float(np.sum(np.log(inv_sqrt[:n_range])))
            lj += float(np.sum(np.log(null_scale[n_range:])))
        if self.dispersion:
            lj += float(theta[self.sl["logphi"]][0])
        return lj

    def logp(self, theta: np.ndarray) -> float:
        m = self.model
        pr = m.spec.priors
        if not np.all(np.isfinite(theta)):
            return -np.inf
        logpsi = theta[self.sl["logpsi"]]
        logtau = theta[self.sl["logtau"]]
        if np.any(np.abs(logpsi) > 30) or np.any(np.abs(logtau) > 30):
            return -np.inf
        draw = self.to_draw(theta)
        fam = self.fam
        eta = self.X @ draw.coef
        if not np.all(fam.valid_eta(eta)):
            return -np.inf
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            mu = fam._inverse_link(eta)
            if not np.all(fam.valid_mean(mu)):
                return -np.inf
            phi = draw.phi
            if fam.has_dispersion and not (0 < phi < np.inf):
                return -np.inf
            ll = float(np.sum(fam._log_density(self.y, mu, phi)))
        if not np.isfinite(ll):
            return -np.inf
        lp = ll
        lp += float(np.sum(_normal_logpdf(draw.beta, pr.beta_scale)))
        zb = theta[self.sl["zb"]]
        zg = theta[self.sl["zg"]]
        lp += -0.5 * float(zb @ zb) - 0.5 * float(zg @ zg) - 0.5 * _LOG_2PI * (zb.size + zg.size)
        # log-scale priors include the exp() Jacobian
        psi, tau = draw.psi, draw.tau
        lp += float(np.sum(_HALF_NORMAL_CONST - np.log(pr.psi_scale) - 0.5 * (psi / pr.psi_scale) ** 2 + logpsi))
        lp += float(np.sum(_HALF_NORMAL_CONST - np.log(pr.tau_scale) - 0.5 * (tau / pr.tau_scale) ** 2 + logtau))
        if self.dispersion:
            lp += _dispersion_logpdf(phi, pr) + float(np.log(phi))
        return lp if np.isfinite(lp) else -np.inf


def _link_init(model: Gamm) -> np.ndarray:
    """Least-squares fit of the fixed effects on link-transformed responses."""
    fam = model.family
    y = model.data.y
    name = fam.name
    if name in ("poisson", "neg_binomial"):
        z = np.log(y + 0.5)
    elif name in ("bernoulli", "beta"):
        p = np.clip((y + 0.5) / 2.0 if name == "bernoulli" else y, 0.01, 0.99)
        z = np.log(p / (1 - p))
    elif name == "gamma":
        z = 1.0 / y
    elif name == "inverse_gaussian":
        z = 1.0 / y**2
    else:
        z = y.copy()
    Xf = model.design[:, : model.n_beta]
    coef, *_ = np.linalg.lstsq(Xf, z, rcond=None)
    return coef


def _initial_theta(target: _Target, rng: np.random.Generator, jitter: float) -> np.ndarray:
    model = target.model
    fam = model.family
    y = model.data.y
    theta = np.zeros(target.dim)
    beta = _link_init(model)
    theta[target.sl["beta"]] = beta
    if not np.isfinite(target_logp_safe(target, theta)):
        # fall back to an intercept-only start at the mean response
        beta = np.zeros(model.n_beta)
        try:
            beta[0] = fam.link(np.clip(y.mean(), 1e-3, None) if fam.name != "beta" and fam.name != "bernoulli" else np.clip(y.mean(), 0.01, 0.99))
        except ValueError:
            beta[0] = 0.0
        theta[target.sl["beta"]] = beta
    if target.dispersion:
        theta[target.sl["logphi"]] = np.log(_moment_phi(model, theta, target))
    base = theta.copy()
    for attempt in range(100):
        cand = base + jitter * rng.standard_normal(target.dim) if (attempt or jitter) else base
        if np.isfinite(target.logp(cand)):
            return cand
        jitter = max(jitter, 0.05) * 1.5
    raise InitializationError(
        f"no finite log posterior after 100 initialization attempts for {model.family.name}"
    )


def target_logp_safe(target: _Target, theta: np.ndarray) -> float:
    try:
        return target.logp(theta)
    except (ValueError, FloatingPointError):
        return -np.inf


def _moment_phi(model: Gamm, theta: np.ndarray, target: _Target) -> float:
    """Crude method-of-moments dispersion from the initial fixed-effect fit."""
    fam = model.family
    y = model.data.y
    eta = model.design[:, : model.n_beta] @ theta[target.sl["beta"]]
    with np.errstate(all="ignore"):
        if not np.all(fam.valid_eta(eta)):
            mu = np.full_like(y, y.mean())
        else:
            mu = fam._inverse_link(eta)
        r2 = float(np.mean((y - mu) ** 2))
        name = fam.name
        if name == "gaussian":
            phi = 1.0 / r2
        elif name == "gamma":
            phi = float(np.mean(mu**2)) / r2
        elif name == "inverse_gaussian":
            phi = float(np.mean(mu**3)) / r2
        elif name == "beta":
            phi = float(np.mean(mu * (1 - mu))) / r2 - 1.0
        else:  # negative binomial
            excess = r2 - float(np.mean(mu))
            phi = float(np.mean(mu**2)) / excess if excess > 0 else 100.0
    if not np.isfinite(phi) or phi <= 0:
        phi = 1.0
    return float(np.clip(phi, 1e-3, 1e6))


def _shift_intercept(target: _Target, theta: np.ndarray, rng: np.random.Generator) -> None:
    """Exact Gibbs draw along (beta_0 + c, b_f - c) for each factor, in place.

    Every row carries exactly one level of each factor, so the likelihood
    is constant along this line and only the two Gaussian priors remain.
    """
    s2 = target.model.spec.priors.beta_scale ** 2
    zb = theta[target.sl["zb"]]
    logpsi = theta[target.sl["logpsi"]]
    for f in range(logpsi.size):
        idx = target.sl["zb"].start + np.flatnonzero(target.b_factor == f)
        inv_psi = np.exp(-logpsi[f])
        z = theta[idx]
        prec = 1.0 / s2 + idx.size * inv_psi**2
        mean = (inv_psi * z.sum() - theta[0] / s2) / prec
        c = mean + rng.standard_normal() / np.sqrt(prec)
        theta[0] += c
        theta[idx] = z - c * inv_psi
    del zb


def _centered_scale_moves(target: _Target):
    """(name, log-scale index, affected z indices) for scale moves at fixed b / gamma."""
    moves = []
    zb0 = target.sl["zb"].start
    for f, name in enumerate(target.model.spec.random):
        idx = zb0 + np.flatnonzero(target.b_factor == f)
        moves.append((f"psi|b:{name}", target.sl["logpsi"].start + f, idx))
    for j, (sl, _, _, _, n_range) in enumerate(target.smooth_maps):
        idx = np.arange(sl.start, sl.start + n_range)
        moves.append((f"tau|gamma:{target.model.spec.smooth[j].name}", target.sl["logtau"].start + j, idx))
    return moves


def _run_chain(target: _Target, config: SamplerConfig, seed_seq: np.random.SeedSequence):
    rng = np.random.default_rng(seed_seq)
    theta = _initial_theta(target, rng, jitter=0.1)
    lp = target.logp(theta)
    blocks = target.blocks
    scale_moves = _centered_scale_moves(target)
    names = [name for name, _ in blocks] + [m[0] for m in scale_moves]
    nblk = len(blocks)
    nmov = len(names)
    chol = [np.eye(sl.stop - sl.start) * 0.1 for _, sl in blocks]
    log_step = np.zeros(nmov)
    log_step[nblk:] = np.log(0.5)
    counts = np.zeros(nmov)
    accepts = np.zeros(nmov)
    has_shift = target.model.n_b > 0

    W = config.warmup
    # covariance re-estimates at these warmup iterations, each using the
    # draws since the previous re-estimate
    updates = sorted({int(W * f) for f in (0.15, 0.3, 0.5, 0.75)} - {0})
    window_start = 0
    warm_hist = np.empty((W, target.dim))

    def settle(bi, prop, lp_prop, log_jac, t, warm):
        nonlocal theta, lp
        delta = lp_prop - lp + log_jac
        acc_prob = np.exp(min(0.0, delta)) if np.isfinite(lp_prop) else 0.0
        accepted = np.log(rng.random()) < delta
        if accepted:
            theta, lp = prop, lp_prop
        if warm:
            # Robbins-Monro on the log step size
            rate = 1.0 / (1.0 + t - window_start) ** 0.6
            log_step[bi] += rate * (acc_prob - config.target_accept)
        else:
            counts[bi] += 1
            accepts[bi] += accepted

    kept = []
    for t in range(W + config.iters):
        warm = t < W
        for bi, (name, sl) in enumerate(blocks):
            d = sl.stop - sl.start
            prop = theta.copy()
            prop[sl] += np.exp(log_step[bi]) * (chol[bi] @ rng.standard_normal(d))
            settle(bi, prop, target.logp(prop), 0.0, t, warm)
        for mi, (name, k, idx) in enumerate(scale_moves):
            bi = nblk + mi
            eps = np.exp(log_step[bi]) * rng.standard_normal()
            prop = theta.copy()
            prop[k] += eps
            prop[idx] *= np.exp(-eps)
            settle(bi, prop, target.logp(prop), -eps * idx.size, t, warm)
        if has_shift:
            theta = theta.copy()
            _shift_intercept(target, theta, rng)
            lp = target.logp(theta)
        if warm:
            warm_hist[t] = theta
            if t + 1 in updates:
                window = warm_hist[window_start: t + 1]
                for bi, (name, sl) in enumerate(blocks):
                    d = sl.stop - sl.start
                    seg = window[:, sl]
                    if seg.shape[0] <= d + 1:
                        continue
                    cov = np.atleast_2d(np.cov(seg, rowvar=False))
                    cov = cov + 1e-8 * np.eye(d) + 1e-6 * np.diag(np.diag(cov))
                    try:
                        L = np.linalg.cholesky(cov)
                    except np.linalg.LinAlgError:
                        continue
                    chol[bi] = L * (2.38 / np.sqrt(d))
                    log_step[bi] = 0.0
                window_start = t + 1
        else:
            i = t - W
            if i % config.thin == 0:
                kept.append((i, theta.copy()))
    rates = np.divide(accepts, counts, out=np.zeros(nmov), where=counts > 0)
    return kept, {name: float(r) for name, r in zip(names, rates)}


def _threads(config: SamplerConfig) -> int:
    if config.threads is not None:
        return max(1, int(config.threads))
    env = os.environ.get("GAMM_R2_THREADS")
    return max(1, int(env)) if env else 1


def sample_posterior(model: Gamm, config: SamplerConfig = SamplerConfig()) -> DrawSet:
    """Run ``config.chains`` independent chains and merge them by chain id.

    Deterministic given ``config.seed`` whatever the thread count.
    """
    target = _Target(model)
    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    workers = min(_threads(config), config.chains)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _run_chain(target, config, s), seeds))
    else:
        results = [_run_chain(target, config, s) for s in seeds]

    draws, chain_ids, iters, accept = [], [], [], {}
    for c, (kept, rates) in enumerate(results):
        for i, theta in kept:
            draws.append(target.to_draw(theta))
            chain_ids.append(c)
            iters.append(i)
        accept[c] = rates
        log.info("chain %d acceptance: %s", c, ", ".join(f"{k}={v:.2f}" for k, v in rates.items()))
    return DrawSet.from_draws(
        draws, chain=chain_ids, iteration=iters, accept_rates=accept, seed=config.seed
    )


def chain_accept_rate(draws: DrawSet, chain: int) -> float:
    """Mean acceptance over all blocks of one chain."""
    rates = draws.accept_rates[chain]
    return float(np.mean(list(rates.values())))


def sample_predictive(model: Gamm, draw: ParamDraw, rng: np.random.Generator, size=None) -> np.ndarray:
    """Replicate responses ``y~_i ~ f(. | mu_i, phi)`` independently over rows.

    With ``size=M`` returns an ``M x n`` array of replicates.
    """
    mu = model.mean(draw)
    shape = mu.shape if size is None else (int(size), mu.size)
    return model.family.sample_response(mu, draw.phi, rng, size=shape)


def split_rhat(values: np.ndarray, chain: np.ndarray) -> float:
    """Split-chain potential scale reduction for one scalar quantity."""
    values = np.asarray(values, dtype=float)
    chain = np.asarray(chain)
    halves = []
    for c in np.unique(chain):
        v = values[chain == c]
        h = v.size // 2
        if h < 2:
            continue
        halves += [v[:h], v[h: 2 * h]]
    if len(halves) < 2:
        return float("nan")
    m = np.array(halves)
    n = m.shape[1]
    W = m.var(axis=1, ddof=1).mean()
    B = n * m.mean(axis=1).var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))
