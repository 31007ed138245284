"""Controller search with budget accounting.

Objectives are minimized: infidelity ``1 - F`` for the noiseless and
stochastic regimes, ``RIM_p`` over a frozen noise ensemble otherwise. Every
objective call debits its cost (1, or ``k`` for the ensemble objective)
from a :class:`Budget`; an optimizer that cannot afford its next call stops
and reports its best point so far.

Any callable with the signature
``optimizer(objective, start, budget, rng, options) -> OptimRun`` can be
registered with :func:`register_optimizer` and used by
:func:`run_campaign_search` and the campaign runner.
"""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BudgetExhausted, ValidationError
from .perturbation import noise_block, perturbed_hamiltonians
from .quantum_core import _fidelity_and_gradient, transfer_fidelities
from .rim_stats import rim
from .rng import RngStream
from .spin_model import ChainSpec, ControlBounds, Controller, hamiltonian_matrix

log = logging.getLogger(__name__)

__all__ = [
    "NOISELESS",
    "STOCHASTIC",
    "FIXED_ENSEMBLE_RIM",
    "ObjectiveSpec",
    "FunctionObjective",
    "Budget",
    "OptimRun",
    "evaluate",
    "evaluate_with_gradient",
    "forward_difference_gradient",
    "latin_hypercube_points",
    "latin_hypercube_init",
    "nelder_mead",
    "lbfgs",
    "register_optimizer",
    "get_optimizer",
    "available_optimizers",
    "run_campaign_search",
]

NOISELESS = "noiseless"
STOCHASTIC = "stochastic"
FIXED_ENSEMBLE_RIM = "fixed_ensemble_rim"
_KINDS = (NOISELESS, STOCHASTIC, FIXED_ENSEMBLE_RIM)


class Budget:
    """Weighted count of fidelity evaluations.

    ``used_calls`` never exceeds ``max_calls``: a charge that would overrun
    raises :class:`BudgetExhausted` and leaves the budget untouched.
    """

    def __init__(self, max_calls: int):
        if max_calls < 0:
            raise ValidationError("budget must be non-negative")
        self.max_calls = int(max_calls)
        self.used_calls = 0

    @property
    def remaining(self) -> int:
        return self.max_calls - self.used_calls

    def can_afford(self, cost: int) -> bool:
        return self.used_calls + cost <= self.max_calls

    def charge(self, cost: int):
        if not self.can_afford(cost):
            raise BudgetExhausted(cost, self.remaining)
        self.used_calls += cost

    def __repr__(self):
        return f"Budget(used={self.used_calls}, max={self.max_calls})"


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """Infidelity-type objective for one transfer problem.

    ``kind`` selects the regime:

    * ``noiseless``: ``1 - F``, cost 1.
    * ``stochastic``: ``1 - F`` under one fresh perturbation of strength
      ``sigma_train`` per call, cost 1.
    * ``fixed_ensemble_rim``: ``RIM_p`` over ``k`` perturbations drawn once
      (from ``ensemble_seed``) at construction, cost ``k``.
    """

    kind: str
    spec: ChainSpec
    bounds: ControlBounds = field(default_factory=ControlBounds)
    sigma_train: float = 0.0
    k: int = 100
    ensemble_seed: int = 0
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown objective kind {self.kind!r}; expected one of {_KINDS}")
        if self.sigma_train < 0:
            raise ValidationError("sigma_train must be >= 0")
        if self.kind == FIXED_ENSEMBLE_RIM:
            if self.k < 1:
                raise ValidationError("ensemble size k must be >= 1")
            gen = RngStream(self.ensemble_seed).substream("ensemble").generator()
            gj, gc = noise_block(gen, self.spec.M, self.k, self.sigma_train)
            gj.setflags(write=False)
            gc.setflags(write=False)
            object.__setattr__(self, "_ensemble", (gj, gc))

    @property
    def dim(self) -> int:
        return self.spec.M + 1

    @property
    def cost(self) -> int:
        return self.k if self.kind == FIXED_ENSEMBLE_RIM else 1

    @property
    def lower(self) -> np.ndarray:
        return self.bounds.lower(self.spec.M)

    @property
    def upper(self) -> np.ndarray:
        return self.bounds.upper(self.spec.M)

    @property
    def deterministic(self) -> bool:
        return self.kind != STOCHASTIC or self.sigma_train == 0.0

    @property
    def has_gradient(self) -> bool:
        return self.kind == NOISELESS or (self.kind == STOCHASTIC and self.sigma_train == 0.0)

    @property
    def ensemble(self):
        return getattr(self, "_ensemble", None)

    def _noiseless(self, x):
        s = self.spec
        h = hamiltonian_matrix(s.M, s.J, x[:-1])
        return 1.0 - float(transfer_fidelities(h[None], x[-1], s.source, s.target)[0])

    def value(self, x: np.ndarray, gen: np.random.Generator | None = None) -> float:
        """Objective at parameter vector ``x = (biases..., time)``; no budget debit."""
        s = self.spec
        if self.kind == NOISELESS or self.sigma_train == 0.0:
            return self._noiseless(x)
        ctrl = Controller.from_vector(x)
        if self.kind == STOCHASTIC:
            if gen is None:
                raise ValidationError("stochastic objective needs a random generator")
            gj, gc = noise_block(gen, s.M, 1, self.sigma_train)
        else:
            gj, gc = self._ensemble
        h = perturbed_hamiltonians(s, ctrl, gj, gc)
        f = transfer_fidelities(h, ctrl.time, s.source, s.target)
        if self.kind == STOCHASTIC:
            return 1.0 - float(f[0])
        return rim(f, self.p).value

    def value_and_grad(self, x: np.ndarray):
        if not self.has_gradient:
            raise ValidationError("analytic gradients exist only for the noiseless objective")
        s = self.spec
        h = hamiltonian_matrix(s.M, s.J, x[:-1])
        fid, gd, gt = _fidelity_and_gradient(h, x[-1], s.source - 1, s.target - 1)
        return 1.0 - fid, -np.append(gd, gt)


@dataclass(frozen=True, eq=False)
class FunctionObjective:
    """Wrap a plain function of a box-bounded vector as an objective."""

    fun: Callable[[np.ndarray], float]
    lower: np.ndarray
    upper: np.ndarray
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    cost: int = 1
    deterministic: bool = True

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValidationError("bounds must satisfy lower < upper elementwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def has_gradient(self) -> bool:
        return self.grad is not None

    def value(self, x, gen=None) -> float:
        return float(self.fun(x))

    def value_and_grad(self, x):
        if self.grad is None:
            raise ValidationError("this objective has no analytic gradient")
        return float(self.fun(x)), np.asarray(self.grad(x), dtype=float)


def _as_vector(x) -> np.ndarray:
    if isinstance(x, Controller):
        return x.as_vector()
    return np.asarray(x, dtype=float)


def evaluate(obj, x, budget: Budget, gen: np.random.Generator | None = None) -> float:
    """Debit one objective call from ``budget`` and return its value."""
    budget.charge(obj.cost)
    return obj.value(_as_vector(x), gen)


def evaluate_with_gradient(obj, x, budget: Budget):
    """Objective and exact gradient; charged as a single call."""
    budget.charge(obj.cost)
    return obj.value_and_grad(_as_vector(x))


def forward_difference_gradient(obj, x, f0: float, budget: Budget, gen=None, step: float = 1e-7):
    """One-sided difference gradient, ``dim`` extra calls on top of ``f0``.

    Steps go backwards for coordinates sitting on their upper bound.
    """
    x = _as_vector(x)
    g = np.empty_like(x)
    for i in range(x.size):
        h = step if x[i] + step <= obj.upper[i] else -step
        xi = x.copy()
        xi[i] += h
        g[i] = (evaluate(obj, xi, budget, gen) - f0) / h
    return g


def latin_hypercube_points(lower, upper, count: int, rng: RngStream) -> np.ndarray:
    """``count`` Latin hypercube points in the box, one per stratum per axis."""
    if count < 1:
        raise ValidationError("need at least one point")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    gen = rng.generator()
    d = lower.size
    strata = np.stack([gen.permutation(count) for _ in range(d)], axis=1)
    unit = (strata + gen.random((count, d))) / count
    return lower + unit * (upper - lower)


def latin_hypercube_init(bounds: ControlBounds, M: int, count: int, rng: RngStream) -> list[Controller]:
    pts = latin_hypercube_points(bounds.lower(M), bounds.upper(M), count, rng)
    return [Controller.from_vector(p) for p in pts]


@dataclass(eq=False)
class OptimRun:
    """Outcome of one optimizer run."""

    best_x: np.ndarray
    best_objective: float
    trajectory: list[tuple[int, float]]
    calls_used: int
    evaluations: int
    status: str
    algorithm: str = ""
    restart: int | None = None
    seed: int | None = None
    stream: int | None = None

    @property
    def best(self) -> Controller:
        return Controller.from_vector(self.best_x)


class _Tracker:
    """Budgeted objective wrapper that remembers the best point seen."""

    def __init__(self, obj, budget: Budget, gen, checkpoint_every: int | None):
        self.obj = obj
        self.budget = budget
        self.gen = gen
        self.every = checkpoint_every
        self.best_x = None
        self.best_f = np.inf
        self.evaluations = 0
        self.trajectory: list[tuple[int, float]] = []
        self._next_mark = checkpoint_every

    def _record(self, x, f):
        self.evaluations += 1
        improved = f < self.best_f
        if improved:
            self.best_f = f
            self.best_x = np.array(x, dtype=float)
        if self.every is None:
            if improved:
                self.trajectory.append((self.budget.used_calls, self.best_f))
        else:
            while self.budget.used_calls >= self._next_mark:
                self.trajectory.append((self.budget.used_calls, self.best_f))
                self._next_mark += self.every

    def f(self, x) -> float:
        value = evaluate(self.obj, x, self.budget, self.gen)
        self._record(x, value)
        return value

    def fg(self, x):
        value, grad = evaluate_with_gradient(self.obj, x, self.budget)
        self._record(x, value)
        return value, grad

    def result(self, status, algorithm, rng: RngStream | None) -> OptimRun:
        traj = list(self.trajectory)
        if self.best_x is not None and (not traj or traj[-1] != (self.budget.used_calls, self.best_f)):
            traj.append((self.budget.used_calls, self.best_f))
        return OptimRun(
            best_x=self.best_x,
            best_objective=float(self.best_f),
            trajectory=traj,
            calls_used=self.budget.used_calls,
            evaluations=self.evaluations,
            status=status,
            algorithm=algorithm,
            seed=rng.seed if rng is not None else None,
            stream=rng.stream if rng is not None else None,
        )


def _clip(obj, x):
    return np.clip(x, obj.lower, obj.upper)


def nelder_mead(obj, start, budget: Budget, rng: RngStream | None = None, options: dict | None = None) -> OptimRun:
    """Bounded Nelder-Mead simplex search.

    Reflection, expansion, contraction and shrink coefficients are 1, 2,
    0.5 and 0.5; every trial point is clipped into the box. Stops when the
    simplex diameter falls below ``xtol`` (default 1e-8), after ``max_iter``
    iterations, or when the budget cannot cover the next call.

    Options
    -------
    initial_step : float
        Edge length of the initial simplex as a fraction of each axis range
        (default 0.05).
    xtol : float
    max_iter : int or None
    checkpoint_every : int or None
        Record ``(calls_used, best)`` every this many calls; by default
        a point is recorded at each improvement.
    """
    opts = {"initial_step": 0.05, "xtol": 1e-8, "max_iter": None, "checkpoint_every": None}
    opts.update(options or {})
    gen = rng.generator() if rng is not None else None
    tr = _Tracker(obj, budget, gen, opts["checkpoint_every"])

    rho, chi, psi, shrink = 1.0, 2.0, 0.5, 0.5
    x0 = _clip(obj, _as_vector(start))
    n = x0.size
    status = "max_iter"
    try:
        sim = [x0]
        span = obj.upper - obj.lower
        for i in range(n):
            v = x0.copy()
            step = opts["initial_step"] * span[i]
            v[i] = v[i] + step if v[i] + step <= obj.upper[i] else v[i] - step
            sim.append(v)
        sim = np.array(sim)
        fsim = np.array([tr.f(v) for v in sim])

        it = 0
        while opts["max_iter"] is None or it < opts["max_iter"]:
            it += 1
            order = np.argsort(fsim, kind="stable")
            sim, fsim = sim[order], fsim[order]
            if np.max(np.linalg.norm(sim[1:] - sim[0], axis=1)) < opts["xtol"]:
                status = "converged"
                break

            xbar = np.mean(sim[:-1], axis=0)
            xr = _clip(obj, (1 + rho) * xbar - rho * sim[-1])
            fr = tr.f(xr)
            do_shrink = False
            if fr < fsim[0]:
                xe = _clip(obj, (1 + rho * chi) * xbar - rho * chi * sim[-1])
                fe = tr.f(xe)
                if fe < fr:
                    sim[-1], fsim[-1] = xe, fe
                else:
                    sim[-1], fsim[-1] = xr, fr
            elif fr < fsim[-2]:
                sim[-1], fsim[-1] = xr, fr
            elif fr < fsim[-1]:
                xc = _clip(obj, (1 + psi * rho) * xbar - psi * rho * sim[-1])
                fc = tr.f(xc)
                if fc <= fr:
                    sim[-1], fsim[-1] = xc, fc
                else:
                    do_shrink = True
            else:
                xcc = _clip(obj, (1 - psi) * xbar + psi * sim[-1])
                fcc = tr.f(xcc)
                if fcc < fsim[-1]:
                    sim[-1], fsim[-1] = xcc, fcc
                else:
                    do_shrink = True
            if do_shrink:
                for j in range(1, n + 1):
                    sim[j] = _clip(obj, sim[0] + shrink * (sim[j] - sim[0]))
                    fsim[j] = tr.f(sim[j])
    except BudgetExhausted:
        status = "budget"
    return tr.result(status, "nelder-mead", rng)


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / np.dot(y, s)
        a = rho * np.dot(s, q)
        q -= a * y
        alphas.append((rho, a))
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def lbfgs(obj, start, budget: Budget, rng: RngStream | None = None, options: dict | None = None) -> OptimRun:
    """Limited-memory BFGS with Armijo backtracking and box projection.

    Options
    -------
    gradient : {"analytic", "forward"}
        ``analytic`` needs an objective with an exact gradient (the
        noiseless one); ``forward`` uses one-sided differences with step
        ``fd_step`` at a cost of ``dim`` extra calls per gradient.
    memory : int
        Number of stored curvature pairs (default 10).
    c1 : float
        Armijo constant (default 1e-4).
    gtol : float
        Stop when the projected gradient norm drops below this (default 1e-9).
    max_iter, max_backtracks, checkpoint_every
    """
    opts = {
        "gradient": "analytic",
        "fd_step": 1e-7,
        "memory": 10,
        "c1": 1e-4,
        "gtol": 1e-9,
        "max_iter": None,
        "max_backtracks": 40,
        "checkpoint_every": None,
    }
    opts.update(options or {})
    analytic = opts["gradient"] == "analytic"
    if opts["gradient"] not in ("analytic", "forward"):
        raise ValidationError(f"unknown gradient mode {opts['gradient']!r}")
    if analytic and not obj.has_gradient:
        raise ValidationError("analytic gradients are only available for the noiseless objective")

    gen = rng.generator() if rng is not None else None
    tr = _Tracker(obj, budget, gen, opts["checkpoint_every"])

    def fg(x):
        if analytic:
            return tr.fg(x)
        f = tr.f(x)
        return f, forward_difference_gradient(obj, x, f, budget, gen, opts["fd_step"])

    s_hist: deque = deque(maxlen=opts["memory"])
    y_hist: deque = deque(maxlen=opts["memory"])
    status = "max_iter"
    try:
        x = _clip(obj, _as_vector(start))
        f, g = fg(x)
        it = 0
        while opts["max_iter"] is None or it < opts["max_iter"]:
            it += 1
            pg = x - _clip(obj, x - g)
            if np.linalg.norm(pg) <= opts["gtol"]:
                status = "converged"
                break
            d = -_two_loop(g, list(s_hist), list(y_hist))
            if not np.dot(g, d) < 0:
                s_hist.clear()
                y_hist.clear()
                d = -g
            alpha = 1.0 if s_hist else min(1.0, 1.0 / np.linalg.norm(g))

            accepted = None
            for _ in range(opts["max_backtracks"]):
                x_new = _clip(obj, x + alpha * d)
                step = x_new - x
                if not np.any(step):
                    break
                if analytic:
                    f_new, g_new = tr.fg(x_new)
                else:
                    f_new, g_new = tr.f(x_new), None
                if f_new <= f + opts["c1"] * np.dot(g, step):
                    accepted = (x_new, f_new, g_new, step)
                    break
                alpha *= 0.5

            if accepted is None:
                if not s_hist:
                    status = "line_search"
                    break
                # restart from steepest descent
                s_hist.clear()
                y_hist.clear()
                continue

            x_new, f_new, g_new, step = accepted
            if g_new is None:
                g_new = forward_difference_gradient(obj, x_new, f_new, budget, gen, opts["fd_step"])
            y = g_new - g
            sy = np.dot(step, y)
            if sy > 1e-12 * np.linalg.norm(step) * np.linalg.norm(y):
                s_hist.append(step)
                y_hist.append(y)
            x, f, g = x_new, f_new, g_new
    except BudgetExhausted:
        status = "budget"
    return tr.result(status, "lbfgs", rng)


_OPTIMIZERS: dict[str, Callable] = {}


def register_optimizer(name: str):
    """Decorator adding an optimizer to the registry under ``name``."""

    def deco(fn):
        _OPTIMIZERS[name] = fn
        return fn

    return deco


register_optimizer("nelder-mead")(nelder_mead)
register_optimizer("lbfgs")(lbfgs)


def get_optimizer(name: str) -> Callable:
    try:
        return _OPTIMIZERS[name]
    except KeyError:
        raise ValidationError(
            f"unknown optimizer {name!r}; available: {sorted(_OPTIMIZERS)}"
        ) from None


def available_optimizers() -> list[str]:
    return sorted(_OPTIMIZERS)


def run_campaign_search(
    obj,
    n_controllers: int,
    budget_total: int,
    rng: RngStream,
    algorithm: str = "nelder-mead",
    options: dict | None = None,
    n_restarts: int | None = None,
    threads: int = 1,
) -> list[OptimRun]:
    """Multi-start search returning the best distinct local solutions.

    ``n_restarts`` (default ``n_controllers``) Latin hypercube starts each
    get an equal share of ``budget_total`` and their own random stream
    ``rng.substream("restart", i)``. Runs are ranked by final objective,
    ties by restart index; near-duplicate optima keep only the better run.
    The result is independent of ``threads``.
    """
    if n_controllers < 1:
        raise ValidationError("need at least one controller")
    n_restarts = n_controllers if n_restarts is None else n_restarts
    if n_restarts < n_controllers:
        raise ValidationError("n_restarts must be >= n_controllers")
    optimizer = get_optimizer(algorithm)
    per_run = budget_total // n_restarts
    starts = latin_hypercube_points(obj.lower, obj.upper, n_restarts, rng.substream("lhs"))

    def task(i):
        run = optimizer(obj, starts[i], Budget(per_run), rng.substream("restart", i), options)
        run.restart = i
        return run

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(task, range(n_restarts)))
    else:
        runs = [task(i) for i in range(n_restarts)]

    runs = [r for r in runs if r.best_x is not None]
    runs.sort(key=lambda r: (r.best_objective, r.restart))
    distinct: list[OptimRun] = []
    for r in runs:
        if any(np.allclose(r.best_x, d.best_x, rtol=0.0, atol=1e-9) for d in distinct):
            continue
        distinct.append(r)
        if len(distinct) == n_controllers:
            break
    if len(distinct) < n_controllers:
        log.warning("only %d of %d controllers found", len(distinct), n_controllers)
    return distinct
