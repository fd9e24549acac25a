"""Tail probabilities behind the battery's verdicts.

Chi-square and Poisson tails go through the regularized incomplete gamma
function. Discrete statistics (birthday collisions, urn collisions) report
sub-randomized tails, P(X > k) + u * P(X = k), which are continuous and
uniform under the null; callers derive u from the generator stream so the
result stays a pure function of the test inputs.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special


class ComputationError(ValueError):
    """Raised for non-finite or out-of-domain statistic inputs."""


def chi_square_upper(statistic: float, dof: int) -> float:
    """Upper-tail probability Q(dof/2, statistic/2) of a chi-square statistic."""
    if not math.isfinite(statistic):
        raise ComputationError(f"chi-square statistic must be finite, got {statistic!r}")
    if statistic < 0:
        raise ComputationError(f"chi-square statistic must be >= 0, got {statistic!r}")
    if dof < 1:
        raise ComputationError(f"degrees of freedom must be >= 1, got {dof!r}")
    return float(special.gammaincc(dof / 2.0, statistic / 2.0))


def normal_two_sided(z: float) -> float:
    """Two-sided tail of a standard normal deviate."""
    if not math.isfinite(z):
        raise ComputationError(f"normal deviate must be finite, got {z!r}")
    return math.erfc(abs(z) / math.sqrt(2.0))


def poisson_upper(k: int, lam: float) -> float:
    """P(X >= k) for X ~ Poisson(lam)."""
    if k <= 0:
        return 1.0
    return float(special.gammainc(k, lam))


def poisson_randomized_upper(k: int, lam: float, u: float) -> float:
    """Sub-randomized upper tail P(X > k) + u * P(X = k), u in [0, 1)."""
    above = poisson_upper(k + 1, lam)
    at_least = poisson_upper(k, lam)
    return min(1.0, above + u * (at_least - above))


@lru_cache(maxsize=32)
def _occupancy_distribution(n_balls: int, n_urns: int) -> tuple[int, np.ndarray]:
    """Distribution of the number of occupied urns after n uniform throws.

    Returns (k_lo, probs) where probs[i] = P(occupied = k_lo + i). The window
    is trimmed to probabilities above 1e-30, which bounds the lost mass far
    below any p-value tolerance used here.
    """
    d = float(n_urns)
    k_lo = 1
    probs = np.array([1.0])
    for _ in range(n_balls - 1):
        ks = np.arange(k_lo, k_lo + len(probs), dtype=np.float64)
        stay = probs * (ks / d)
        grow = probs * ((d - ks) / d)
        probs = np.concatenate([stay, [0.0]])
        probs[1:] += grow
        keep = np.flatnonzero(probs > 1e-30)
        if len(keep):
            k_lo += int(keep[0])
            probs = probs[keep[0]: keep[-1] + 1]
    return k_lo, probs


def collision_randomized_upper(collisions: int, n_balls: int, n_urns: int, u: float) -> float:
    """Sub-randomized upper tail of the urn-collision count (balls - occupied urns).

    Uses the exact occupancy distribution, so under the null the result is
    uniform on [0, 1] up to floating-point rounding.
    """
    if n_balls < 1:
        raise ComputationError("collision test needs at least one ball")
    k_lo, probs = _occupancy_distribution(n_balls, n_urns)
    k_hi = k_lo + len(probs) - 1
    occupied = n_balls - collisions
    # C > c is K < occupied; the window [k_lo, k_hi] carries all relevant mass
    if occupied < k_lo:
        return 0.0
    if occupied > k_hi:
        return 1.0
    above = float(probs[: occupied - k_lo].sum())
    atom = float(probs[occupied - k_lo])
    return min(1.0, above + u * atom)
