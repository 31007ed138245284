"""Rank consistency of controller RIMs between two noise levels.

The statistic is a Kendall tau-b in which the ranks on the reference side
(``i``) are first coarsened into ordinal bins, so that RIMs differing by
less than a fraction ``alpha`` of their range count as tied. The other side
(``j``) keeps its raw order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateTauError, ValidationError

__all__ = [
    "RankVector",
    "BinnedRankVector",
    "TauResult",
    "bin_ranks",
    "tau_b",
    "tau_curve",
]


@dataclass(frozen=True, eq=False)
class RankVector:
    """RIM values of ``k`` controllers at one noise level; their order is the rank."""

    values: np.ndarray
    sigma: float | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size < 2:
            raise ValidationError("a rank vector needs at least 2 controllers")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class BinnedRankVector:
    """Ordinal bin label (1-based) per controller, in input order."""

    ordinals: np.ndarray
    alpha: float
    sigma: float | None = None


@dataclass(frozen=True)
class TauResult:
    tau: float
    concordant: int
    discordant: int
    ties_i: int
    ties_j: int
    p_value: float
    sigma_base: float | None = None
    sigma_j: float | None = None
    alpha: float | None = None


def bin_ranks(rims, alpha: float, sigma: float | None = None) -> BinnedRankVector:
    """Greedy ordinal binning of RIM values.

    Controllers are visited in ascending RIM order. A bin is anchored at its
    first member; the next value opens a new bin once it exceeds the anchor
    by more than ``alpha * (max - min)``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha}")
    values = rims.values if isinstance(rims, RankVector) else np.asarray(rims, dtype=float)
    if values.size < 2:
        raise ValidationError("binning needs at least 2 controllers")
    if sigma is None and isinstance(rims, RankVector):
        sigma = rims.sigma
    width = alpha * float(np.max(values) - np.min(values))
    order = np.argsort(values, kind="stable")
    ordinals = np.empty(values.size, dtype=np.int64)
    label, anchor = 0, None
    for pos in order:
        v = values[pos]
        if anchor is None or v - anchor > width:
            label += 1
            anchor = v
        ordinals[pos] = label
    ordinals.setflags(write=False)
    return BinnedRankVector(ordinals, float(alpha), sigma)


def _tie_sums(x):
    _, counts = np.unique(x, return_counts=True)
    t = counts[counts > 1].astype(float)
    return (
        int(np.sum(t * (t - 1) / 2)),
        float(np.sum(t * (t - 1) * (2 * t + 5))),
        float(np.sum(t * (t - 1) * (t - 2))),
        float(np.sum(t * (t - 1))),
    )


def tau_b(binned_i: BinnedRankVector, raw_j) -> TauResult:
    """Ordinal Kendall tau-b between binned side ``i`` and raw side ``j``.

    ``tau = (C - D) / sqrt((K - t_i)(K - t_j))`` with ``K = k(k-1)/2`` and
    ``t = sum t_l (t_l - 1) / 2`` over tie groups. The p-value is two-sided
    under the normal approximation with the tie-corrected variance of
    ``C - D``.

    Raises
    ------
    DegenerateTauError
        If either side is completely tied.
    """
    xi = np.asarray(binned_i.ordinals, dtype=float)
    xj = raw_j.values if isinstance(raw_j, RankVector) else np.asarray(raw_j, dtype=float)
    if xi.shape != xj.shape:
        raise ValidationError(f"rank vectors differ in length: {xi.size} vs {xj.size}")
    k = xi.size
    if k < 2:
        raise ValidationError("tau needs at least 2 controllers")
    iu = np.triu_indices(k, 1)
    si = np.sign(xi[:, None] - xi[None, :])[iu]
    sj = np.sign(xj[:, None] - xj[None, :])[iu]
    prod = si * sj
    concordant = int(np.count_nonzero(prod > 0))
    discordant = int(np.count_nonzero(prod < 0))

    ties_i, vi1, vi2, vi3 = _tie_sums(xi)
    ties_j, vj1, vj2, vj3 = _tie_sums(xj)
    n_pairs = k * (k - 1) // 2
    if ties_i == n_pairs or ties_j == n_pairs:
        raise DegenerateTauError(
            "all controllers tied on one side; tau-b denominator is zero"
        )
    s = concordant - discordant
    tau = s / math.sqrt((n_pairs - ties_i) * (n_pairs - ties_j))
    tau = min(max(tau, -1.0), 1.0)

    var = (k * (k - 1) * (2 * k + 5) - vi1 - vj1) / 18.0
    if k > 2:
        var += vi2 * vj2 / (9.0 * k * (k - 1) * (k - 2))
    var += vi3 * vj3 / (2.0 * k * (k - 1))
    if var > 0:
        z = s / math.sqrt(var)
        p_value = float(2.0 * ndtr(-abs(z)))
    else:
        p_value = 1.0
    return TauResult(
        tau=float(tau),
        concordant=concordant,
        discordant=discordant,
        ties_i=ties_i,
        ties_j=ties_j,
        p_value=p_value,
        sigma_base=binned_i.sigma,
        sigma_j=raw_j.sigma if isinstance(raw_j, RankVector) else None,
        alpha=binned_i.alpha,
    )


def tau_curve(
    rim_grid,
    sigma_grid: Sequence[float],
    alpha: float = 0.05,
    base_sigma: float = 0.0,
) -> list[TauResult]:
    """Tau between the base column and every column of a controller x sigma grid."""
    grid = np.asarray(rim_grid, dtype=float)
    sigmas = [float(s) for s in sigma_grid]
    if grid.ndim != 2 or grid.shape[1] != len(sigmas):
        raise ValidationError("RIM grid must be controllers x sigma levels")
    matches = [j for j, s in enumerate(sigmas) if math.isclose(s, base_sigma, abs_tol=1e-15)]
    if not matches:
        raise ValidationError(f"base sigma {base_sigma} not in the grid")
    base = matches[0]
    binned = bin_ranks(grid[:, base], alpha, sigma=sigmas[base])
    return [
        tau_b(binned, RankVector(grid[:, j], sigma=s)) for j, s in enumerate(sigmas)
    ]
