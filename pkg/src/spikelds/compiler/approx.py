"""Bounded rational approximation of nonnegative weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

THRESHOLD_MAX = 2**18 - 1
WEIGHT_MAX = 255


@dataclass(frozen=True)
class RationalWeight:
    numerator: int
    denominator: int

    def __post_init__(self):
        if self.numerator < 0:
            raise ValueError("numerator must be nonnegative")
        if self.denominator < 1:
            raise ValueError("denominator must be >= 1")

    @property
    def value(self) -> float:
        return self.numerator / self.denominator

    def __iter__(self):
        yield self.numerator
        yield self.denominator


@dataclass(frozen=True)
class RationalApproxBounds:
    alpha_max: int = WEIGHT_MAX
    beta_max: int = WEIGHT_MAX

    def __post_init__(self):
        if self.alpha_max < 1 or self.beta_max < 1:
            raise ValueError("bounds must be >= 1")


def bounds_for(w: float, p: int) -> RationalApproxBounds:
    """Weight-register bounds: the single-neuron small-w fragment allows an 18-bit threshold."""
    if w <= 1.0 / p:
        return RationalApproxBounds(WEIGHT_MAX, THRESHOLD_MAX)
    return RationalApproxBounds(WEIGHT_MAX, WEIGHT_MAX)


def _pick(w, alphas, betas):
    err = (w - alphas / betas) ** 2
    best = err.min()
    tied = np.flatnonzero(err == best)
    key = np.lexsort((alphas[tied], betas[tied]))
    k = tied[key[0]]
    return int(alphas[k]), int(betas[k])


def approx_weight(w: float, bounds: RationalApproxBounds = RationalApproxBounds()) -> RationalWeight:
    """Closest ``alpha/beta`` to ``w`` on the bounded grid.

    Fixes whichever variable has the smaller range and solves for the other
    in closed form (floor/ceil of the continuous optimum), so the cost is
    O(min(alpha_max, beta_max)). Ties go to the smallest beta, then alpha.
    """
    if w < 0 or not np.isfinite(w):
        raise ValueError(f"weight must be finite and nonnegative, got {w}")
    amax, bmax = bounds.alpha_max, bounds.beta_max
    if w == 0:
        return RationalWeight(0, 1)
    if bmax <= amax + 1:
        b = np.arange(1, bmax + 1, dtype=np.float64)
        star = w * b
        a = np.concatenate([np.floor(star), np.ceil(star)])
        b = np.concatenate([b, b])
        a = np.clip(a, 0, amax)
    else:
        a = np.arange(0, amax + 1, dtype=np.float64)
        star = np.where(a > 0, a / w, 1.0)
        b = np.concatenate([np.floor(star), np.ceil(star)])
        a = np.concatenate([a, a])
        b = np.clip(b, 1, bmax)
    return RationalWeight(*_pick(w, a, b))


def approx_weight_bruteforce(w: float, bounds: RationalApproxBounds = RationalApproxBounds()) -> RationalWeight:
    """Exhaustive O(alpha_max * beta_max) search with the same tie rule."""
    a = np.arange(0, bounds.alpha_max + 1, dtype=np.float64)
    b = np.arange(1, bounds.beta_max + 1, dtype=np.float64)
    A, B = np.meshgrid(a, b, indexing="ij")
    return RationalWeight(*_pick(w, A.ravel(), B.ravel()))
