"""GAMM specification, design assembly and conditional mean/variance."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .families import Family, get_family
from .splines import PenaltyMatrix, SmoothBasis, build_basis, penalty_matrix

__all__ = [
    "INTERCEPT",
    "SmoothTerm",
    "PriorConfig",
    "ModelSpec",
    "Dataset",
    "ParamDraw",
    "DrawSet",
    "Gamm",
    "linear_predictor",
    "conditional_mean",
    "conditional_variance",
]

INTERCEPT = "intercept"


@dataclass(frozen=True)
class SmoothTerm:
    var: str
    k: int = 10
    degree: int = 3
    penalty_order: int = 2

    @property
    def name(self) -> str:
        return f"s({self.var})"

    def to_dict(self) -> dict:
        return {"var": self.var, "k": self.k, "degree": self.degree,
                "penalty_order": self.penalty_order}


@dataclass(frozen=True)
class PriorConfig:
    """Prior scales.

    ``dispersion_prior`` is one of ``"lognormal"`` (log phi ~ N(0, scale^2)),
    ``"half_normal"`` (phi ~ N+(0, scale^2)) or ``"fixed"`` (phi held at
    ``dispersion_scale`` and not sampled).
    """

    beta_scale: float = 10.0
    psi_scale: float = 1.0
    tau_scale: float = 1.0
    dispersion_prior: str = "lognormal"
    dispersion_scale: float = 5.0

    def __post_init__(self):
        for name in ("beta_scale", "psi_scale", "tau_scale", "dispersion_scale"):
            v = getattr(self, name)
            if not (v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if self.dispersion_prior not in ("lognormal", "half_normal", "fixed"):
            raise ValueError(f"unknown dispersion prior {self.dispersion_prior!r}")

    def to_dict(self) -> dict:
        return {
            "beta_scale": self.beta_scale,
            "psi_scale": self.psi_scale,
            "tau_scale": self.tau_scale,
            "dispersion_prior": self.dispersion_prior,
            "dispersion_scale": self.dispersion_scale,
        }


@dataclass(frozen=True)
class ModelSpec:
    """Declarative GAMM: intercept + fixed slopes + random intercepts + smooths."""

    family: Family
    fixed: tuple[str, ...] = ()
    random: tuple[str, ...] = ()
    smooth: tuple[SmoothTerm, ...] = ()
    priors: PriorConfig = field(default_factory=PriorConfig)
    response: str = "y"

    def __post_init__(self):
        if isinstance(self.family, str):
            object.__setattr__(self, "family", get_family(self.family))
        object.__setattr__(self, "fixed", tuple(self.fixed))
        object.__setattr__(self, "random", tuple(self.random))
        object.__setattr__(
            self,
            "smooth",
            tuple(s if isinstance(s, SmoothTerm) else SmoothTerm(**s) for s in self.smooth),
        )
        names = self.term_names
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate term names in {names}")
        columns = list(self.fixed) + list(self.random) + [s.var for s in self.smooth]
        if len(set(columns)) != len(columns):
            raise ValueError("a covariate is used by more than one term")
        if self.response in columns:
            raise ValueError("the response cannot also be a covariate")

    @property
    def term_names(self) -> list[str]:
        return [INTERCEPT, *self.fixed, *self.random, *(s.name for s in self.smooth)]

    @property
    def has_dispersion(self) -> bool:
        return self.family.has_dispersion

    @property
    def samples_dispersion(self) -> bool:
        return self.family.has_dispersion and self.priors.dispersion_prior != "fixed"

    def restrict(self, keep: Sequence[str]) -> "ModelSpec":
        """The spec with only the named terms (the intercept always stays)."""
        keep = set(keep)
        return ModelSpec(
            self.family,
            tuple(f for f in self.fixed if f in keep),
            tuple(r for r in self.random if r in keep),
            tuple(s for s in self.smooth if s.name in keep),
            self.priors,
            self.response,
        )


@dataclass(frozen=True)
class Dataset:
    """Observed data laid out per term type.

    ``groups`` holds 1-based level codes, one column per random factor;
    ``group_labels[j]`` maps code ``c`` to the original label at index ``c-1``.
    """

    y: np.ndarray
    fixed: np.ndarray
    groups: np.ndarray
    smooth: np.ndarray
    group_labels: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        n = y.size
        fixed = np.asarray(self.fixed, dtype=float).reshape(n, -1)
        groups = np.asarray(self.groups, dtype=int).reshape(n, -1)
        smooth = np.asarray(self.smooth, dtype=float).reshape(n, -1)
        for name, a in (("y", y), ("fixed", fixed), ("smooth", smooth)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"non-finite values in {name}")
        if groups.size and groups.min() < 1:
            raise ValueError("group codes must be 1-based")
        labels = tuple(self.group_labels)
        if not labels:
            labels = tuple(
                tuple(range(1, int(groups[:, j].max()) + 1)) for j in range(groups.shape[1])
            )
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "fixed", fixed)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "smooth", smooth)
        object.__setattr__(self, "group_labels", labels)

    @property
    def n(self) -> int:
        return self.y.size

    def n_levels(self) -> list[int]:
        return [len(lab) for lab in self.group_labels]

    @classmethod
    def from_columns(cls, columns: Mapping[str, Sequence], spec: ModelSpec) -> "Dataset":
        """Pick the columns a spec needs out of a name -> values mapping.

        Grouping labels are coded 1..L in sorted order of the distinct labels.
        """
        def col(name):
            if name not in columns:
                raise KeyError(f"column {name!r} not found in data")
            return np.asarray(columns[name])

        y = col(spec.response).astype(float)
        n = y.size
        fixed = np.column_stack([col(c).astype(float) for c in spec.fixed]) if spec.fixed else np.empty((n, 0))
        smooth = (
            np.column_stack([col(s.var).astype(float) for s in spec.smooth])
            if spec.smooth
            else np.empty((n, 0))
        )
        codes, labels = [], []
        for r in spec.random:
            lab, inv = np.unique(col(r), return_inverse=True)
            codes.append(inv + 1)
            labels.append(tuple(lab.tolist()))
        groups = np.column_stack(codes) if codes else np.empty((n, 0), dtype=int)
        return cls(y, fixed, groups, smooth, tuple(labels))


@dataclass
class ParamDraw:
    """One joint draw of every unknown in the model.

    ``psi`` are random-intercept standard deviations (one per factor) and
    ``tau`` the smooth-coefficient scales (one per smooth term).
    """

    beta: np.ndarray
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phi: float | None = None
    psi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tau: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        self.psi = np.atleast_1d(np.asarray(self.psi, dtype=float))
        self.tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        if self.phi is not None:
            self.phi = float(self.phi)

    @property
    def coef(self) -> np.ndarray:
        return np.concatenate([self.beta, self.b, self.gamma])


class DrawSet:
    """A collection of posterior draws stored column-wise.

    Indexing returns a :class:`ParamDraw`; iteration walks the draws in
    order (chains concatenated by chain id).
    """

    def __init__(self, beta, b, gamma, phi, psi, tau, chain=None, iteration=None,
                 accept_rates=None, seed=None):
        self.beta = np.atleast_2d(np.asarray(beta, dtype=float))
        L = self.beta.shape[0]
        self.b = np.asarray(b, dtype=float).reshape(L, -1)
        self.gamma = np.asarray(gamma, dtype=float).reshape(L, -1)
        self.psi = np.asarray(psi, dtype=float).reshape(L, -1)
        self.tau = np.asarray(tau, dtype=float).reshape(L, -1)
        self.phi = None if phi is None else np.asarray(phi, dtype=float).reshape(L)
        self.chain = np.zeros(L, dtype=int) if chain is None else np.asarray(chain, dtype=int)
        self.iteration = np.arange(L) if iteration is None else np.asarray(iteration, dtype=int)
        self.accept_rates = {} if accept_rates is None else dict(accept_rates)
        self.seed = seed
        if L < 1:
            raise ValueError("a DrawSet needs at least one draw")

    @classmethod
    def from_draws(cls, draws: Sequence[ParamDraw], **kw) -> "DrawSet":
        draws = list(draws)
        if not draws:
            raise ValueError("a DrawSet needs at least one draw")
        phi = None if draws[0].phi is None else [d.phi for d in draws]
        return cls(
            np.array([d.beta for d in draws]),
            np.array([d.b for d in draws]),
            np.array([d.gamma for d in draws]),
            phi,
            np.array([d.psi for d in draws]),
            np.array([d.tau for d in draws]),
            **kw,
        )

    def __len__(self):
        return self.beta.shape[0]

    def __getitem__(self, l: int) -> ParamDraw:
        return ParamDraw(
            self.beta[l], self.b[l], self.gamma[l],
            None if self.phi is None else self.phi[l],
            self.psi[l], self.tau[l],
        )

    def __iter__(self):
        for l in range(len(self)):
            yield self[l]

    @property
    def coef(self) -> np.ndarray:
        """``L x p`` matrix of stacked (beta, b, gamma) coefficients."""
        return np.hstack([self.beta, self.b, self.gamma])

    def subset(self, idx) -> "DrawSet":
        idx = np.asarray(idx)
        return DrawSet(
            self.beta[idx], self.b[idx], self.gamma[idx],
            None if self.phi is None else self.phi[idx],
            self.psi[idx], self.tau[idx], self.chain[idx], self.iteration[idx],
            self.accept_rates, self.seed,
        )

    def equals(self, other: "DrawSet") -> bool:
        """Bit-for-bit equality of every stored array."""
        pairs = [
            (self.beta, other.beta), (self.b, other.b), (self.gamma, other.gamma),
            (self.psi, other.psi), (self.tau, other.tau),
            (self.chain, other.chain), (self.iteration, other.iteration),
        ]
        if (self.phi is None) != (other.phi is None):
            return False
        if self.phi is not None:
            pairs.append((self.phi, other.phi))
        return all(a.shape == b.shape and np.array_equal(a, b) for a, b in pairs)


class Gamm:
    """A model specification bound to a dataset.

    The full design matrix ``[1, X, Z, B_1, ..., B_m3]`` is built once; the
    coefficient vector is ``(beta, b, gamma)`` in the same column order.
    """

    def __init__(self, spec: ModelSpec, data: Dataset):
        if data.fixed.shape[1] != len(spec.fixed):
            raise ValueError("dataset fixed covariates do not match the spec")
        if data.groups.shape[1] != len(spec.random):
            raise ValueError("dataset grouping factors do not match the spec")
        if data.smooth.shape[1] != len(spec.smooth):
            raise ValueError("dataset smooth inputs do not match the spec")
        ok = spec.family.in_support(data.y)
        if not np.all(ok):
            bad = int(np.flatnonzero(~ok)[0])
            raise ValueError(
                f"response value {data.y[bad]!r} at row {bad} outside the "
                f"{spec.family.name} support"
            )
        for j, L in enumerate(data.n_levels()):
            if data.groups.size and data.groups[:, j].max() > L:
                raise ValueError(f"group codes of factor {spec.random[j]!r} exceed its levels")
        self.spec = spec
        self.data = data
        self.family = spec.family
        self.n = data.n

        bases: list[SmoothBasis] = []
        blocks = [np.ones((self.n, 1)), data.fixed]
        levels = data.n_levels()
        for j, L in enumerate(levels):
            Z = np.zeros((self.n, L))
            Z[np.arange(self.n), data.groups[:, j] - 1] = 1.0
            blocks.append(Z)
        for j, term in enumerate(spec.smooth):
            basis, B = build_basis(data.smooth[:, j], term.k, term.degree)
            bases.append(basis)
            blocks.append(B)
        self.design = np.hstack(blocks)
        self.design.setflags(write=False)
        self.bases = bases
        self.penalties: list[PenaltyMatrix] = [
            penalty_matrix(t.k, t.penalty_order) for t in spec.smooth
        ]
        self.n_levels = levels

        # coefficient-vector slices per term
        self.slices: dict[str, slice] = {INTERCEPT: slice(0, 1)}
        pos = 1
        for name in spec.fixed:
            self.slices[name] = slice(pos, pos + 1)
            pos += 1
        for name, L in zip(spec.random, levels):
            self.slices[name] = slice(pos, pos + L)
            pos += L
        for term in spec.smooth:
            self.slices[term.name] = slice(pos, pos + term.k)
            pos += term.k
        self.p = pos

    # -- dimensions ---------------------------------------------------------
    @property
    def n_beta(self) -> int:
        return 1 + len(self.spec.fixed)

    @property
    def n_b(self) -> int:
        return int(sum(self.n_levels))

    @property
    def n_gamma(self) -> int:
        return int(sum(t.k for t in self.spec.smooth))

    @cached_property
    def b_factor_index(self) -> np.ndarray:
        """Factor index of each stacked random-effect coefficient."""
        return np.repeat(np.arange(len(self.n_levels)), self.n_levels).astype(int)

    def check_draw(self, draw: ParamDraw) -> None:
        dims = [
            ("beta", draw.beta.size, self.n_beta),
            ("b", draw.b.size, self.n_b),
            ("gamma", draw.gamma.size, self.n_gamma),
            ("psi", draw.psi.size, len(self.spec.random)),
            ("tau", draw.tau.size, len(self.spec.smooth)),
        ]
        for name, got, want in dims:
            if got != want:
                raise ValueError(f"draw.{name} has length {got}, model expects {want}")
        if self.family.has_dispersion and draw.phi is None:
            raise ValueError("draw lacks the dispersion parameter")
        if not self.family.has_dispersion and draw.phi is not None:
            raise ValueError(f"{self.family.name} takes no dispersion parameter")

    def term_mask(self, terms: Sequence[str] | None) -> np.ndarray:
        """Boolean mask over coefficients belonging to ``terms``."""
        mask = np.zeros(self.p, dtype=bool)
        if terms is None:
            mask[:] = True
            return mask
        for t in terms:
            if t not in self.slices:
                raise KeyError(f"unknown term {t!r}; model terms are {list(self.slices)}")
            mask[self.slices[t]] = True
        return mask

    # -- evaluation ---------------------------------------------------------
    def eta(self, draw: ParamDraw, terms: Sequence[str] | None = None) -> np.ndarray:
        self.check_draw(draw)
        coef = draw.coef
        if terms is not None:
            coef = np.where(self.term_mask(terms), coef, 0.0)
        return self.design @ coef

    def mean(self, draw: ParamDraw, terms: Sequence[str] | None = None) -> np.ndarray:
        return self.family.inverse_link(self.eta(draw, terms))

    def variance(self, draw: ParamDraw) -> np.ndarray:
        return self.family.variance(self.mean(draw), draw.phi)

    def eta_matrix(self, draws: DrawSet, terms: Sequence[str] | None = None) -> np.ndarray:
        """``L x n`` linear predictors for every draw at once."""
        coef = draws.coef
        if coef.shape[1] != self.p:
            raise ValueError(f"draws carry {coef.shape[1]} coefficients, model has {self.p}")
        if terms is not None:
            coef = coef * self.term_mask(terms)
        return coef @ self.design.T

    def mean_matrix(self, draws: DrawSet, terms: Sequence[str] | None = None) -> np.ndarray:
        return self.family.inverse_link(self.eta_matrix(draws, terms))

    def variance_matrix(self, draws: DrawSet) -> np.ndarray:
        phi = None if draws.phi is None else draws.phi[:, None]
        return self.family.variance(self.mean_matrix(draws), phi)

    def smooth_curve(self, term: str, u, gamma: np.ndarray) -> np.ndarray:
        """Evaluate a fitted (centered) smooth at new inputs."""
        j = [t.name for t in self.spec.smooth].index(term)
        return self.bases[j].evaluate(u) @ gamma

    def draw_names(self) -> list[str]:
        """Column names for the draws file, in storage order."""
        names = [f"beta_{j}" for j in range(self.n_beta)]
        for f, L in zip(self.spec.random, self.n_levels):
            names += [f"b_{f}_{lev}" for lev in range(1, L + 1)]
        for t in self.spec.smooth:
            names += [f"gamma_{t.var}_{l}" for l in range(1, t.k + 1)]
        names += [f"psi_{f}" for f in self.spec.random]
        names += [f"tau_{t.var}" for t in self.spec.smooth]
        if self.family.has_dispersion:
            names.append("phi")
        return names


def _row(values, i):
    return values if i is None else float(values[i])


def linear_predictor(model: Gamm, draw: ParamDraw, i: int | None = None):
    """``eta_i`` for row ``i`` (or the whole vector when ``i`` is None)."""
    if i is not None and not 0 <= i < model.n:
        raise IndexError(f"row {i} out of range for n={model.n}")
    return _row(model.eta(draw), i)


def conditional_mean(model: Gamm, draw: ParamDraw, i: int | None = None):
    return _row(model.mean(draw), i)


def conditional_variance(model: Gamm, draw: ParamDraw, i: int | None = None):
    return _row(model.variance(draw), i)
