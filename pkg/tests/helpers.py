"""Shared builders for the test modules."""
import numpy as np

from gamm_r2 import Dataset, Gamm, ModelSpec, ParamDraw
from gamm_r2.families import FAMILIES


def make_model(family, y, fixed=None, groups=None, smooth=None, smooth_terms=(), priors=None):
    """Bind a spec built from plain arrays to a dataset."""
    y = np.asarray(y, dtype=float)
    cols = {"y": y}
    fixed_names, random_names = [], []
    if fixed is not None:
        fixed = np.asarray(fixed, dtype=float).reshape(y.size, -1)
        for j in range(fixed.shape[1]):
            cols[f"x{j + 1}"] = fixed[:, j]
            fixed_names.append(f"x{j + 1}")
    if groups is not None:
        groups = np.asarray(groups).reshape(y.size, -1)
        for j in range(groups.shape[1]):
            cols[f"g{j + 1}"] = groups[:, j]
            random_names.append(f"g{j + 1}")
    for term, col in zip(smooth_terms, [] if smooth is None else np.asarray(smooth).reshape(y.size, -1).T):
        cols[term.var] = col
    kw = {} if priors is None else {"priors": priors}
    spec = ModelSpec(family, tuple(fixed_names), tuple(random_names), tuple(smooth_terms), **kw)
    return Gamm(spec, Dataset.from_columns(cols, spec))


def intercept_only(family, y, beta0, phi=None, priors=None):
    m = make_model(family, y, priors=priors)
    return m, ParamDraw([beta0], phi=phi)


def family_point(name, rng):
    """A random interior (mu, phi) for a family."""
    if name == "gaussian":
        return rng.normal(0, 3), float(np.exp(rng.uniform(np.log(0.2), np.log(5))))
    if name in ("gamma", "inverse_gaussian"):
        return float(np.exp(rng.uniform(-1, 1.5))), float(np.exp(rng.uniform(np.log(0.5), np.log(20))))
    if name == "beta":
        return float(rng.uniform(0.05, 0.95)), float(np.exp(rng.uniform(np.log(0.5), np.log(50))))
    if name == "bernoulli":
        return float(rng.uniform(0.02, 0.98)), None
    if name == "poisson":
        return float(np.exp(rng.uniform(-2, 4))), None
    return float(np.exp(rng.uniform(-2, 4))), float(np.exp(rng.uniform(np.log(0.3), np.log(30))))


def means_model(mu, family="gaussian", phi=1.0, y=None):
    """Model with one indicator column per row so that any mean vector is reachable."""
    mu = np.asarray(mu, dtype=float)
    n = mu.size
    fam = FAMILIES[family]
    eta = fam.link(mu)
    X = np.eye(n)[:, 1:]
    y = (mu if family == "gaussian" else np.zeros(n)) if y is None else y
    m = make_model(fam, y, fixed=X)
    beta = np.concatenate([[eta[0]], eta[1:] - eta[0]])
    return m, ParamDraw(beta, phi=phi if fam.has_dispersion else None)
