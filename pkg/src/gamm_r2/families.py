"""Exponential-family response distributions with canonical links.

Each family bundles a link, its inverse, a variance function ``V(mu, phi)``,
a log-density and a sampler. The dispersion conventions are:

==================  =========  ==============  ======================
family              link       V(mu, phi)      phi
==================  =========  ==============  ======================
gaussian            identity   1 / phi         1 / variance
gamma               1 / mu     mu^2 / phi      shape
inverse_gaussian    1 / mu^2   mu^3 / phi      1 / scale
beta                logit      mu(1-mu)/(1+phi) shape1 + shape2
bernoulli           logit      mu (1 - mu)     --
poisson             log        mu              --
neg_binomial        log        mu (1 + mu/phi) shape (size)
==================  =========  ==============  ======================

Note the Gaussian precision convention: ``phi`` is the inverse of the
variance, not the variance itself.
"""
from __future__ import annotations

import numpy as np
from scipy.special import betaln, expit, gammaln, logit

__all__ = [
    "DomainError",
    "Family",
    "Gaussian",
    "Gamma",
    "InverseGaussian",
    "Beta",
    "Bernoulli",
    "Poisson",
    "NegativeBinomial",
    "FAMILIES",
    "get_family",
]

_LOG_2PI = np.log(2.0 * np.pi)


class DomainError(ValueError):
    """A value lies outside the domain of a link, variance or density."""


def _arr(x):
    return np.asarray(x, dtype=float)


def _unwrap(x, like):
    # scalars in, scalars out
    if np.ndim(like) == 0:
        return float(x)
    return x


class Family:
    """Base class. Subclasses fill in the family-specific pieces.

    All methods accept scalars or numpy arrays and broadcast.
    """

    name: str = ""
    has_dispersion: bool = True

    # -- mean space / link image -------------------------------------------
    def valid_mean(self, mu):
        raise NotImplementedError

    def valid_eta(self, eta):
        return np.isfinite(_arr(eta))

    def in_support(self, y):
        raise NotImplementedError

    def _link(self, mu):
        raise NotImplementedError

    def _inverse_link(self, eta):
        raise NotImplementedError

    def _variance(self, mu, phi):
        raise NotImplementedError

    def _log_density(self, y, mu, phi):
        raise NotImplementedError

    def _sample(self, mu, phi, rng, size):
        raise NotImplementedError

    # -- public api ----------------------------------------------------------
    def link(self, mu):
        m = _arr(mu)
        if not np.all(self.valid_mean(m)):
            raise DomainError(f"{self.name}: mean outside the mean space")
        return _unwrap(self._link(m), mu)

    def inverse_link(self, eta):
        e = _arr(eta)
        if not np.all(self.valid_eta(e)):
            raise DomainError(f"{self.name}: linear predictor outside the link image")
        return _unwrap(self._inverse_link(e), eta)

    def check_phi(self, phi):
        """Validate the dispersion argument against ``has_dispersion``."""
        if not self.has_dispersion:
            if phi is not None:
                raise DomainError(f"{self.name} takes no dispersion parameter")
            return None
        if phi is None:
            raise DomainError(f"{self.name} requires a dispersion parameter")
        p = _arr(phi)
        if np.any(np.isnan(p)) or np.any(p <= 0):
            raise DomainError(f"{self.name}: dispersion must be positive")
        if np.any(np.isinf(p)) and not self.allows_infinite_phi:
            raise DomainError(f"{self.name}: dispersion must be finite")
        return p

    allows_infinite_phi = False

    def variance(self, mu, phi=None):
        m = _arr(mu)
        p = self.check_phi(phi)
        if not np.all(self.valid_mean(m)):
            raise DomainError(f"{self.name}: mean outside the mean space")
        return _unwrap(self._variance(m, p), mu)

    def log_density(self, y, mu, phi=None):
        """Log density (or mass) of ``y`` given mean ``mu``.

        Responses outside the support give ``-inf``, never NaN.
        """
        y_ = _arr(y)
        m = _arr(mu)
        p = self.check_phi(phi)
        y_, m = np.broadcast_arrays(y_, m)
        out = np.full(y_.shape, -np.inf)
        ok = self.in_support(y_)
        if np.any(ok):
            pp = None if p is None else np.broadcast_to(p, y_.shape)[ok]
            out[ok] = self._log_density(y_[ok], m[ok], pp)
        return float(out) if out.ndim == 0 else out

    def sample_response(self, mu, phi, rng, size=None):
        """Draw responses with mean ``mu`` and variance ``V(mu, phi)``."""
        m = _arr(mu)
        p = self.check_phi(phi)
        if size is None:
            size = np.broadcast(m, p if p is not None else m).shape
        out = self._sample(m, p, rng, size)
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))


class Gaussian(Family):
    name = "gaussian"
    # phi = inf is the noiseless limit: variance 0 and draws equal the mean
    allows_infinite_phi = True

    def valid_mean(self, mu):
        return np.isfinite(mu)

    def in_support(self, y):
        return np.isfinite(y)

    def _link(self, mu):
        return mu

    def _inverse_link(self, eta):
        return eta

    def _variance(self, mu, phi):
        return np.broadcast_to(1.0 / phi, np.broadcast(mu, phi).shape).copy()

    def _log_density(self, y, mu, phi):
        return 0.5 * (np.log(phi) - _LOG_2PI) - 0.5 * phi * (y - mu) ** 2

    def _sample(self, mu, phi, rng, size):
        return mu + rng.standard_normal(size) / np.sqrt(phi)


class Gamma(Family):
    name = "gamma"

    def valid_mean(self, mu):
        return np.isfinite(mu) & (mu > 0)

    def valid_eta(self, eta):
        return np.isfinite(eta) & (eta > 0)

    def in_support(self, y):
        return np.isfinite(y) & (y > 0)

    def _link(self, mu):
        return 1.0 / mu

    def _inverse_link(self, eta):
        return 1.0 / eta

    def _variance(self, mu, phi):
        return mu**2 / phi

    def _log_density(self, y, mu, phi):
        # shape = phi, scale = mu / phi
        return (
            phi * np.log(phi / mu) - gammaln(phi) + (phi - 1.0) * np.log(y) - phi * y / mu
        )

    def _sample(self, mu, phi, rng, size):
        return rng.gamma(shape=phi, scale=mu / phi, size=size)


class InverseGaussian(Family):
    name = "inverse_gaussian"

    def valid_mean(self, mu):
        return np.isfinite(mu) & (mu > 0)

    def valid_eta(self, eta):
        return np.isfinite(eta) & (eta > 0)

    def in_support(self, y):
        return np.isfinite(y) & (y > 0)

    def _link(self, mu):
        return 1.0 / mu**2

    def _inverse_link(self, eta):
        return 1.0 / np.sqrt(eta)

    def _variance(self, mu, phi):
        return mu**3 / phi

    def _log_density(self, y, mu, phi):
        lam = phi
        return 0.5 * (np.log(lam) - _LOG_2PI - 3.0 * np.log(y)) - lam * (y - mu) ** 2 / (
            2.0 * mu**2 * y
        )

    def _sample(self, mu, phi, rng, size):
        # Michael, Schucany & Haas (1976) transformation with one root choice
        mu = np.broadcast_to(mu, size)
        lam = np.broadcast_to(phi, size)
        nu = rng.standard_normal(size)
        w = nu * nu
        x = mu + mu * mu * w / (2.0 * lam) - mu / (2.0 * lam) * np.sqrt(
            4.0 * mu * lam * w + mu * mu * w * w
        )
        u = rng.random(size)
        return np.where(u <= mu / (mu + x), x, mu * mu / x)


class Beta(Family):
    name = "beta"

    def valid_mean(self, mu):
        return (mu > 0) & (mu < 1)

    def in_support(self, y):
        return (y > 0) & (y < 1)

    def _link(self, mu):
        return logit(mu)

    def _inverse_link(self, eta):
        return expit(eta)

    def _variance(self, mu, phi):
        return mu * (1.0 - mu) / (1.0 + phi)

    def _log_density(self, y, mu, phi):
        a = mu * phi
        b = (1.0 - mu) * phi
        return (a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y) - betaln(a, b)

    def _sample(self, mu, phi, rng, size):
        a = mu * phi
        b = (1.0 - mu) * phi
        if np.any(a <= 0) or np.any(b <= 0):
            raise DomainError("beta: shape parameters must be positive")
        # tiny shapes put mass closer to 0 or 1 than float64 resolves; keep
        # draws inside the open support
        y = rng.beta(a, b, size=size)
        return np.clip(y, np.finfo(float).tiny, np.nextafter(1.0, 0.0))


class Bernoulli(Family):
    name = "bernoulli"
    has_dispersion = False

    def valid_mean(self, mu):
        return (mu > 0) & (mu < 1)

    def in_support(self, y):
        return (y == 0) | (y == 1)

    def _link(self, mu):
        return logit(mu)

    def _inverse_link(self, eta):
        return expit(eta)

    def variance(self, mu, phi=None):
        # the boundary means are allowed here: V(0) = V(1) = 0
        m = _arr(mu)
        self.check_phi(phi)
        if not np.all((m >= 0) & (m <= 1)):
            raise DomainError("bernoulli: mean outside [0, 1]")
        return _unwrap(m * (1.0 - m), mu)

    def _variance(self, mu, phi):
        return mu * (1.0 - mu)

    def _log_density(self, y, mu, phi):
        with np.errstate(divide="ignore"):
            return np.where(y == 1, np.log(mu), np.log1p(-mu))

    def _sample(self, mu, phi, rng, size):
        return (rng.random(size) < mu).astype(float)


class Poisson(Family):
    name = "poisson"
    has_dispersion = False

    def valid_mean(self, mu):
        return np.isfinite(mu) & (mu > 0)

    def in_support(self, y):
        return np.isfinite(y) & (y >= 0) & (y == np.floor(y))

    def _link(self, mu):
        return np.log(mu)

    def _inverse_link(self, eta):
        return np.exp(eta)

    def variance(self, mu, phi=None):
        m = _arr(mu)
        self.check_phi(phi)
        if not np.all(np.isfinite(m) & (m >= 0)):
            raise DomainError("poisson: mean must be nonnegative")
        return _unwrap(m.copy(), mu)

    def _variance(self, mu, phi):
        return mu

    def _log_density(self, y, mu, phi):
        return y * np.log(mu) - mu - gammaln(y + 1.0)

    def _sample(self, mu, phi, rng, size):
        return rng.poisson(mu, size=size).astype(float)


class NegativeBinomial(Family):
    name = "neg_binomial"

    def valid_mean(self, mu):
        return np.isfinite(mu) & (mu > 0)

    def in_support(self, y):
        return np.isfinite(y) & (y >= 0) & (y == np.floor(y))

    def _link(self, mu):
        return np.log(mu)

    def _inverse_link(self, eta):
        return np.exp(eta)

    def _variance(self, mu, phi):
        return mu * (1.0 + mu / phi)

    def _log_density(self, y, mu, phi):
        # size = phi, prob = phi / (phi + mu)
        return (
            gammaln(y + phi)
            - gammaln(phi)
            - gammaln(y + 1.0)
            + phi * np.log(phi / (phi + mu))
            + y * np.log(mu / (phi + mu))
        )

    def _sample(self, mu, phi, rng, size):
        return rng.negative_binomial(phi, phi / (phi + mu), size=size).astype(float)


FAMILIES: dict[str, Family] = {
    f.name: f
    for f in (
        Gaussian(),
        Gamma(),
        InverseGaussian(),
        Beta(),
        Bernoulli(),
        Poisson(),
        NegativeBinomial(),
    )
}


def get_family(name: str) -> Family:
    """Look a family up by its serialized name (e.g. ``"neg_binomial"``)."""
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(
            f"unknown family {name!r}; expected one of {sorted(FAMILIES)}"
        ) from None
