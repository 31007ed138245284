"""Robustness-infidelity statistics over fidelity samples.

``RIM_p`` is the order-``p`` Wasserstein distance between a fidelity
distribution and the point mass at fidelity 1. For a one-dimensional
distribution this collapses to the ``p``-th root of the ``p``-th raw moment
of the infidelity, ``E[(1 - f)^p]^(1/p)``. ``rim`` evaluates that moment
form and ``rim_via_quantile`` integrates the empirical quantile function
instead; the two are kept as independent computations of the same number.

All moments use 1/n normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .errors import ValidationError
from .rng import RngStream

__all__ = [
    "FidelitySampleSet",
    "RimEstimate",
    "ArimEstimate",
    "EcdfBand",
    "RimOrderReport",
    "SpearmanResult",
    "rim",
    "rim_via_quantile",
    "rim2_identity_check",
    "rim_order_relations",
    "rim_error_bound",
    "arim",
    "yield_fraction",
    "worst_case_fidelity",
    "ecdf_with_dkw",
    "bootstrap_ci",
    "spearman",
]

# absolute slack when checking the order relations on values in [0, 1]
ORDER_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class FidelitySampleSet:
    """``n`` fidelity draws plus where they came from."""

    samples: np.ndarray
    sigma: float | None = None
    seed: int | None = None
    controller_id: int | None = None

    def __post_init__(self):
        f = np.array(self.samples, dtype=float).reshape(-1)
        if f.size == 0:
            raise ValidationError("sample set is empty")
        if not np.all((f >= 0.0) & (f <= 1.0)):
            raise ValidationError("fidelity samples must lie in [0, 1]")
        f.setflags(write=False)
        object.__setattr__(self, "samples", f)

    @property
    def n(self) -> int:
        return self.samples.size

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class RimEstimate:
    order: float
    value: float
    n: int
    sigma: float | None = None


@dataclass(frozen=True, eq=False)
class ArimEstimate:
    value: float
    L: int
    per_controller_rims: np.ndarray = field(repr=False)


class RimOrderReport(NamedTuple):
    p: float
    q: float
    n: int
    rim_p: float
    rim_q: float
    upper_bound: float
    monotone_ok: bool
    bound_ok: bool


class SpearmanResult(NamedTuple):
    rho: float
    p_value: float


def _fidelities(samples) -> np.ndarray:
    if isinstance(samples, FidelitySampleSet):
        return samples.samples
    return FidelitySampleSet(samples).samples


def _check_order(p):
    if not p >= 1:
        raise ValidationError(f"RIM order must be >= 1, got {p}")


def _sigma_of(samples):
    return samples.sigma if isinstance(samples, FidelitySampleSet) else None


def rim(samples, p: float = 1) -> RimEstimate:
    """``RIM_p`` estimated as ``((1/n) sum (1 - f_i)^p)^(1/p)``.

    For a point mass (all samples equal) the value is exactly ``1 - f``.
    """
    _check_order(p)
    f = _fidelities(samples)
    if np.all(f == f[0]):
        value = 1.0 - float(f[0])
    else:
        value = float(np.mean((1.0 - f) ** p) ** (1.0 / p))
    return RimEstimate(float(p), min(max(value, 0.0), 1.0), f.size, _sigma_of(samples))


def rim_via_quantile(samples, p: float = 1) -> RimEstimate:
    """``RIM_p`` as ``(int_0^1 |Q(z) - 1|^p dz)^(1/p)`` with the empirical quantile ``Q``.

    ``Q`` is a step function that takes the k-th distinct sample value on
    the interval ``(C_{k-1}, C_k]`` of ECDF levels, so the integral is a
    sum over those interval widths.
    """
    _check_order(p)
    f = _fidelities(samples)
    values, counts = np.unique(f, return_counts=True)
    levels = np.cumsum(counts) / f.size
    widths = np.diff(levels, prepend=0.0)
    integral = float(np.sum(widths * np.abs(values - 1.0) ** p))
    value = integral ** (1.0 / p)
    return RimEstimate(float(p), min(max(value, 0.0), 1.0), f.size, _sigma_of(samples))


def rim2_identity_check(samples) -> tuple[float, float]:
    """Return ``(RIM_2^2, Var(f) + RIM_1^2)``; the two agree for any sample set."""
    f = _fidelities(samples)
    r1 = rim(f, 1).value
    r2 = rim(f, 2).value
    return r2 * r2, float(np.var(f)) + r1 * r1


def rim_order_relations(samples, p: float, q: float) -> RimOrderReport:
    """Check ``RIM_p <= RIM_q <= n^(1/p - 1/q) RIM_p`` for ``p < q``.

    A ``False`` flag signals a defect; no exception is raised for it.
    """
    _check_order(p)
    if not q > p:
        raise ValidationError(f"need p < q, got p={p}, q={q}")
    f = _fidelities(samples)
    rp = rim(f, p).value
    rq = rim(f, q).value
    bound = f.size ** (1.0 / p - 1.0 / q) * rp
    return RimOrderReport(
        float(p), float(q), f.size, rp, rq, bound,
        rp <= rq + ORDER_SLACK,
        rq <= bound + ORDER_SLACK,
    )


def rim_error_bound(p: float, n: int, delta: float) -> float:
    """PAC deviation bound ``(1/(p+1)) (log(4/delta) / (2n))^(1/(2p))``.

    Holds with probability at least ``1 - delta/2`` for a ``RIM_p``
    estimated from ``n`` samples.
    """
    _check_order(p)
    if not 0 < delta < 1:
        raise ValidationError(f"failure probability must be in (0, 1), got {delta}")
    if n < 1:
        raise ValidationError(f"sample count must be >= 1, got {n}")
    return (1.0 / (p + 1.0)) * (math.log(4.0 / delta) / (2.0 * n)) ** (1.0 / (2.0 * p))


def arim(rims: Sequence[RimEstimate]) -> ArimEstimate:
    """Algorithmic RIM: mean of per-controller RIMs sharing order and noise level."""
    rims = list(rims)
    if not rims:
        raise ValidationError("ARIM needs at least one RIM estimate")
    orders = {r.order for r in rims}
    sigmas = {r.sigma for r in rims}
    if len(orders) > 1:
        raise ValidationError(f"RIM estimates mix orders {sorted(orders)}")
    if len(sigmas) > 1:
        raise ValidationError("RIM estimates mix noise levels")
    values = np.array([r.value for r in rims], dtype=float)
    return ArimEstimate(float(np.mean(values)), values.size, values)


def yield_fraction(samples, threshold: float) -> float:
    """Fraction of fidelities strictly above ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"threshold must lie in [0, 1], got {threshold}")
    f = _fidelities(samples)
    return float(np.count_nonzero(f > threshold)) / f.size


def worst_case_fidelity(samples) -> float:
    return float(np.min(_fidelities(samples)))


@dataclass(frozen=True, eq=False)
class EcdfBand:
    """ECDF at the sorted samples with a Dvoretzky-Kiefer-Wolfowitz envelope."""

    grid: np.ndarray
    ecdf: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    confidence: float
    half_width: float

    def evaluate(self, x) -> np.ndarray:
        """Right-continuous ECDF at arbitrary points."""
        return np.searchsorted(self.grid, np.asarray(x, dtype=float), side="right") / self.grid.size

    def sup_deviation(self, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
        """``sup_x |ECDF(x) - cdf(x)|`` for a continuous ``cdf``."""
        at = cdf(self.grid)
        left = np.searchsorted(self.grid, self.grid, side="left") / self.grid.size
        return float(max(np.max(np.abs(self.ecdf - at)), np.max(np.abs(left - at))))

    def contains_cdf(self, cdf: Callable[[np.ndarray], np.ndarray]) -> bool:
        return self.sup_deviation(cdf) <= self.half_width


def ecdf_with_dkw(samples, confidence: float = 0.95) -> EcdfBand:
    if not 0.0 < confidence < 1.0:
        raise ValidationError(f"confidence must be in (0, 1), got {confidence}")
    f = np.sort(_fidelities(samples))
    n = f.size
    ecdf = np.searchsorted(f, f, side="right") / n
    eps = math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n))
    return EcdfBand(
        grid=f,
        ecdf=ecdf,
        lower=np.clip(ecdf - eps, 0.0, 1.0),
        upper=np.clip(ecdf + eps, 0.0, 1.0),
        confidence=confidence,
        half_width=eps,
    )


def bootstrap_ci(
    data,
    statistic: Callable[[np.ndarray], float] = np.mean,
    resamples: int = 100,
    confidence: float = 0.95,
    rng: RngStream | None = None,
) -> tuple[float, float]:
    """Non-parametric percentile bootstrap interval for ``statistic(data)``.

    Resampling indices come from ``rng`` (default stream ``RngStream(0)``),
    so the interval is a deterministic function of its inputs.
    """
    if resamples < 1:
        raise ValidationError("need at least one bootstrap resample")
    if not 0.0 < confidence < 1.0:
        raise ValidationError(f"confidence must be in (0, 1), got {confidence}")
    x = np.asarray(data, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValidationError("bootstrap data must be a non-empty 1-D array")
    gen = (rng or RngStream(0)).generator()
    idx = gen.integers(0, x.size, size=(resamples, x.size))
    values = np.array([statistic(x[row]) for row in idx], dtype=float)
    alpha = 1.0 - confidence
    lo, hi = np.quantile(values, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def spearman(x, y) -> SpearmanResult:
    """Spearman rank correlation with average ranks for ties.

    The p-value uses the t-distribution approximation with ``n - 2``
    degrees of freedom.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("spearman needs two 1-D vectors of equal length")
    if x.size < 3:
        raise ValidationError("spearman needs at least 3 observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValidationError("rank correlation is undefined for a constant vector")
    res = stats.spearmanr(x, y)
    return SpearmanResult(float(res.statistic), float(res.pvalue))
