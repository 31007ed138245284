"""End-to-end campaign: multi-start search, RIM grid, ARIM curve, tau row, yields.

Every random quantity is drawn from a stream addressed by the campaign
seed and the task's position, never from shared state:

* search: ``RngStream(seed).substream("search")`` (LHS starts and restarts),
* RIM cell ``(i, j)``: ``substream("rim", i, j)``, its bootstrap
  ``substream("rim-ci", i, j)``,
* ARIM bootstrap at ``sigma_j``: ``substream("arim", j)``.

Tasks run on a thread pool and their results are stored by index, so the
output does not depend on the number of threads.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .._version import __version__
from ..consistency import RankVector, bin_ranks, tau_b
from ..errors import DegenerateTauError, ValidationError
from ..optimizers import ObjectiveSpec, run_campaign_search
from ..perturbation import NoiseModel, sample_fidelities
from ..rim_stats import RimEstimate, arim, bootstrap_ci, rim, worst_case_fidelity, yield_fraction
from ..rng import RngStream
from ..spin_model import ChainSpec, Controller
from .config import CampaignConfig, config_hash

log = logging.getLogger(__name__)

__all__ = [
    "SCHEMA_VERSION",
    "ControllerRecord",
    "RimCell",
    "ArimPoint",
    "CampaignResult",
    "rim_cell",
    "rim_grid",
    "rank_average_selection",
    "search",
    "analyze",
    "run",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class ControllerRecord:
    """A found controller, its rank ``id`` (0 = best) and search provenance."""

    id: int
    controller: Controller
    objective: float
    restart: int | None = None
    calls_used: int = 0
    status: str = ""
    trajectory: tuple = ()


@dataclass(frozen=True, eq=False)
class RimCell:
    rim: float
    ci_lo: float
    ci_hi: float
    yields: tuple
    worst: float


@dataclass(frozen=True)
class ArimPoint:
    sigma: float
    arim: float
    ci_lo: float
    ci_hi: float
    L: int


@dataclass(eq=False)
class CampaignResult:
    """Everything a campaign produces.

    ``rim``, ``ci_lo`` and ``ci_hi`` are ``L x S`` over controllers and the
    noise grid; ``yields`` is ``L x S x T`` over the yield thresholds and
    ``worst`` the ``L x S`` worst sampled fidelity.
    """

    config: CampaignConfig
    controllers: list
    rim: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    yields: np.ndarray
    worst: np.ndarray
    arim_curve: list
    tau: list
    tau_degenerate: list
    best_index: int | None
    median_index: int | None
    metadata: dict = field(default_factory=dict)

    @property
    def sigma_grid(self) -> tuple:
        return self.config.sigma_sim_grid

    @property
    def partial(self) -> bool:
        return bool(self.metadata.get("partial", False))

    @property
    def arim_mean(self) -> float | None:
        """ARIM averaged uniformly over the noise grid."""
        if not self.arim_curve:
            return None
        return float(np.mean([a.arim for a in self.arim_curve]))


def _rim_statistic(p):
    def stat(f):
        if np.all(f == f[0]):
            return 1.0 - float(f[0])
        return float(np.mean((1.0 - f) ** p) ** (1.0 / p))
    return stat


def rim_cell(
    spec: ChainSpec,
    ctrl: Controller,
    sigma: float,
    n_samples: int,
    p: float,
    seed: int,
    i: int,
    j: int,
    resamples: int = 100,
    confidence: float = 0.95,
    thresholds=(0.95, 0.98),
) -> RimCell:
    """One grid entry: ``RIM_p`` of controller ``i`` at noise level ``sigma_j``.

    The value depends only on its arguments, so any cell of a persisted grid
    can be recomputed on its own.
    """
    root = RngStream(seed)
    samples = sample_fidelities(
        spec, ctrl, NoiseModel(sigma), n_samples, root.substream("rim", i, j), controller_id=i
    )
    value = rim(samples, p).value
    lo, hi = bootstrap_ci(
        samples.samples, _rim_statistic(p), resamples, confidence, root.substream("rim-ci", i, j)
    )
    return RimCell(
        rim=value,
        ci_lo=lo,
        ci_hi=hi,
        yields=tuple(yield_fraction(samples, t) for t in thresholds),
        worst=worst_case_fidelity(samples),
    )


def _pool_map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def rim_grid(
    spec: ChainSpec,
    controllers,
    sigma_grid,
    n_samples: int = 100,
    p: float = 1,
    seed: int = 0,
    threads: int = 1,
    resamples: int = 100,
    confidence: float = 0.95,
    thresholds=(0.95, 0.98),
) -> dict:
    """RIM of every controller at every noise level, with bootstrap CIs and yields.

    Returns a dict of arrays ``rim``, ``ci_lo``, ``ci_hi``, ``worst``
    (``L x S``) and ``yields`` (``L x S x T``).
    """
    controllers = list(controllers)
    sigmas = [float(s) for s in sigma_grid]
    L, S, T = len(controllers), len(sigmas), len(thresholds)
    if L == 0 or S == 0:
        raise ValidationError("RIM grid needs at least one controller and one noise level")
    cells = [(i, j) for i in range(L) for j in range(S)]

    def task(cell):
        i, j = cell
        return rim_cell(
            spec, controllers[i], sigmas[j], n_samples, p, seed, i, j,
            resamples, confidence, thresholds,
        )

    out = {
        "rim": np.empty((L, S)),
        "ci_lo": np.empty((L, S)),
        "ci_hi": np.empty((L, S)),
        "worst": np.empty((L, S)),
        "yields": np.empty((L, S, T)),
    }
    for (i, j), c in zip(cells, _pool_map(task, cells, threads)):
        out["rim"][i, j] = c.rim
        out["ci_lo"][i, j] = c.ci_lo
        out["ci_hi"][i, j] = c.ci_hi
        out["worst"][i, j] = c.worst
        out["yields"][i, j] = c.yields
    return out


def rank_average_selection(grid, sigma_grid=None) -> tuple[int, int]:
    """Indices of the best and the median controller by summed per-sigma rank.

    Ranks are taken within each column (average ranks for ties, rank 1 =
    lowest RIM) and summed per controller. Ties in the rank sum go to the
    lower RIM at sigma = 0 (the first column if the grid has no zero
    level), then to the lower index. The median is the middle element of
    that ordering, the lower one for an even count.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 2 or g.shape[0] == 0 or g.shape[1] == 0:
        raise ValidationError("selection needs a non-empty controllers x sigma grid")
    base = 0
    if sigma_grid is not None:
        zeros = [j for j, s in enumerate(sigma_grid) if float(s) == 0.0]
        base = zeros[0] if zeros else 0
    sums = rankdata(g, method="average", axis=0).sum(axis=1)
    order = np.lexsort((np.arange(g.shape[0]), g[:, base], sums))
    return int(order[0]), int(order[(g.shape[0] - 1) // 2])


def _objective(config: CampaignConfig) -> ObjectiveSpec:
    return ObjectiveSpec(
        kind=config.objective_kind,
        spec=config.chain,
        bounds=config.bounds,
        sigma_train=config.sigma_train,
        k=config.k,
        ensemble_seed=config.seed,
        p=config.p,
    )


def search(config: CampaignConfig, threads: int = 1) -> list[ControllerRecord]:
    """Multi-start search; fewer than ``L`` records means the budget fell short."""
    options = dict(config.options)
    if config.checkpoint_every is not None or "checkpoint_every" not in options:
        options["checkpoint_every"] = config.effective_checkpoint
    runs = run_campaign_search(
        _objective(config),
        config.L,
        config.budget,
        RngStream(config.seed).substream("search"),
        algorithm=config.algorithm,
        options=options,
        n_restarts=config.n_restarts,
        threads=threads,
    )
    return [
        ControllerRecord(
            id=rank,
            controller=r.best,
            objective=r.best_objective,
            restart=r.restart,
            calls_used=r.calls_used,
            status=r.status,
            trajectory=tuple((int(c), float(v)) for c, v in r.trajectory),
        )
        for rank, r in enumerate(runs)
    ]


def _tau_row(config, grid):
    sigmas = config.sigma_sim_grid
    base = sigmas.index(config.tau_base)
    results, degenerate = [], []
    if grid.shape[0] < 2:
        return results, list(sigmas)
    binned = bin_ranks(grid[:, base], config.alpha, sigma=sigmas[base])
    for j, s in enumerate(sigmas):
        try:
            results.append(tau_b(binned, RankVector(grid[:, j], sigma=s)))
        except DegenerateTauError:
            log.info("tau undefined at sigma=%g: all controllers tied", s)
            degenerate.append(s)
    return results, degenerate


def analyze(
    config: CampaignConfig,
    controllers,
    threads: int = 1,
    spec: ChainSpec | None = None,
) -> CampaignResult:
    """All noise statistics for a given controller set.

    ``controllers`` may be :class:`ControllerRecord` or bare
    :class:`Controller` objects; the latter get ids in input order.
    """
    records = []
    for i, c in enumerate(controllers):
        if isinstance(c, ControllerRecord):
            records.append(c)
        else:
            records.append(ControllerRecord(id=i, controller=c, objective=float("nan")))
    if not records:
        raise ValidationError("no controllers to analyze")
    spec = spec or config.chain
    ctrls = [r.controller for r in records]
    grid = rim_grid(
        spec, ctrls, config.sigma_sim_grid, config.n_samples, config.p, config.seed,
        threads, config.bootstrap_resamples, config.confidence, config.yield_thresholds,
    )
    root = RngStream(config.seed)
    curve = []
    for j, s in enumerate(config.sigma_sim_grid):
        column = grid["rim"][:, j]
        est = arim([RimEstimate(float(config.p), float(v), config.n_samples, float(s)) for v in column])
        lo, hi = bootstrap_ci(
            column, np.mean, config.bootstrap_resamples, config.confidence, root.substream("arim", j)
        )
        curve.append(ArimPoint(float(s), est.value, lo, hi, est.L))
    taus, degenerate = _tau_row(config, grid["rim"])
    best, median = rank_average_selection(grid["rim"], config.sigma_sim_grid)
    return CampaignResult(
        config=config,
        controllers=records,
        rim=grid["rim"],
        ci_lo=grid["ci_lo"],
        ci_hi=grid["ci_hi"],
        yields=grid["yields"],
        worst=grid["worst"],
        arim_curve=curve,
        tau=taus,
        tau_degenerate=degenerate,
        best_index=best,
        median_index=median,
        metadata=base_metadata(config, records),
    )


def base_metadata(config: CampaignConfig, records) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "config_hash": config_hash(config),
        "seed": config.seed,
        "n_controllers": len(records),
        "requested_controllers": config.L,
        "partial": len(records) < config.L,
    }


def run(config: CampaignConfig, threads: int = 1) -> CampaignResult:
    """Search, then analyze whatever controllers the budget produced.

    If the search yields fewer than ``L`` distinct controllers the result is
    still complete for those found, with ``metadata["partial"]`` set.
    """
    records = search(config, threads)
    if not records:
        raise ValidationError("search produced no controller; raise the budget")
    return analyze(config, records, threads)
