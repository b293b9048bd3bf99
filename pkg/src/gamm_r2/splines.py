"""P-spline smooth terms: B-spline design blocks and difference penalties."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

__all__ = [
    "SmoothBasis",
    "PenaltyMatrix",
    "build_basis",
    "penalty_matrix",
    "wiggliness",
    "difference_operator",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SmoothBasis:
    """A clamped B-spline basis fitted to a set of training inputs.

    ``knots`` is the full knot vector (boundary knots repeated
    ``degree + 1`` times). ``transform`` holds the column means subtracted
    when ``centered`` is true.
    """

    k: int
    degree: int
    knots: np.ndarray
    centered: bool
    transform: np.ndarray

    @property
    def lower(self) -> float:
        return float(self.knots[0])

    @property
    def upper(self) -> float:
        return float(self.knots[-1])

    def raw(self, u) -> np.ndarray:
        """Uncentered ``len(u) x k`` basis evaluations (rows sum to one)."""
        u = np.asarray(u, dtype=float).ravel()
        if not np.all(np.isfinite(u)):
            raise ValueError("smooth inputs must be finite")
        outside = (u < self.lower) | (u > self.upper)
        if np.any(outside):
            log.warning(
                "%d smooth input(s) outside [%g, %g]; clamped to the boundary",
                int(outside.sum()),
                self.lower,
                self.upper,
            )
            u = np.clip(u, self.lower, self.upper)
        return BSpline.design_matrix(u, self.knots, self.degree).toarray()

    def evaluate(self, u) -> np.ndarray:
        """Design block at ``u``, centered with the training offsets."""
        B = self.raw(u)
        if self.centered:
            B = B - self.transform
        return B


@dataclass(frozen=True)
class PenaltyMatrix:
    S: np.ndarray
    order: int

    @property
    def k(self) -> int:
        return self.S.shape[0]


def build_basis(u_values, k: int = 10, degree: int = 3, centered: bool = True):
    """Build a B-spline basis with equally spaced knots over the range of ``u``.

    Returns ``(basis, design)`` where ``design`` is the ``n x k`` block
    evaluated at the training inputs.
    """
    u = np.asarray(u_values, dtype=float).ravel()
    if not np.all(np.isfinite(u)):
        raise ValueError("smooth inputs must be finite")
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if k < degree + 1:
        raise ValueError(f"basis dimension k={k} too small for degree {degree}")
    n = u.size
    if n < k:
        raise ValueError(f"need at least k={k} observations, got {n}")
    n_interior = k - degree - 1
    lo, hi = float(u.min()), float(u.max())
    if np.unique(u).size < max(n_interior, 2):
        raise ValueError("fewer distinct smooth inputs than interior knots")
    inner = np.linspace(lo, hi, n_interior + 2)
    knots = np.concatenate([np.repeat(lo, degree), inner, np.repeat(hi, degree)])
    basis = SmoothBasis(k, degree, knots, False, np.zeros(k))
    B = basis.raw(u)
    if not centered:
        return basis, B
    offsets = B.mean(axis=0)
    basis = SmoothBasis(k, degree, knots, True, offsets)
    return basis, B - offsets


def difference_operator(k: int, order: int) -> np.ndarray:
    """``(k - order) x k`` finite-difference matrix."""
    return np.diff(np.eye(k), n=order, axis=0)


def penalty_matrix(k: int, order: int = 2) -> PenaltyMatrix:
    """Difference penalty ``S = D^T D`` of the given order."""
    if order < 0:
        raise ValueError("penalty order must be nonnegative")
    if order >= k:
        raise ValueError(f"penalty order {order} must be smaller than k={k}")
    D = difference_operator(k, order)
    return PenaltyMatrix(D.T @ D, order)


def wiggliness(gamma, S) -> float:
    """Quadratic roughness ``gamma^T S gamma``."""
    S = S.S if isinstance(S, PenaltyMatrix) else np.asarray(S, dtype=float)
    g = np.asarray(gamma, dtype=float).ravel()
    if g.size != S.shape[0]:
        raise ValueError(f"coefficient length {g.size} != penalty dimension {S.shape[0]}")
    # clip tiny negative round-off
    return max(float(g @ S @ g), 0.0)
