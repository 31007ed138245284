"""Declarative campaign description, loaded from a YAML file.

Example::

    chain: {M: 5, J: 1.0, source: 1, target: middle}
    bounds: {delta_min: -10, delta_max: 10, t_min: 0, t_max: 70}
    algorithm: {name: nelder-mead, options: {}, n_restarts: null}
    objective: {kind: noiseless, sigma_train: 0.0, k: 100}
    sigma_sim_grid: [0.0, 0.01, 0.02, 0.05, 0.1]
    n_samples: 100
    L: 20
    p: 1
    budget: 100000
    seed: 7
    bootstrap: {resamples: 100, confidence: 0.95}
    alpha: 0.05
    tau_base: 0.0
    yield_thresholds: [0.95, 0.98]
    checkpoint_every: null

Every key is optional. The normalized form returned by
:meth:`CampaignConfig.to_dict` is what gets hashed and persisted, so two
files that differ only in layout, key order or defaults hash the same.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from ..errors import ValidationError
from ..optimizers import _KINDS, NOISELESS, available_optimizers
from ..spin_model import ChainSpec, ControlBounds

__all__ = ["CampaignConfig", "DEFAULT_SIGMA_GRID", "load_config", "config_hash"]

DEFAULT_SIGMA_GRID = tuple(round(0.01 * i, 2) for i in range(11))

_TOP_KEYS = {
    "chain", "bounds", "algorithm", "objective", "sigma_sim_grid", "n_samples",
    "L", "p", "budget", "seed", "bootstrap", "alpha", "tau_base",
    "yield_thresholds", "checkpoint_every",
}
_SECTION_KEYS = {
    "chain": {"M", "J", "source", "target"},
    "bounds": {"delta_min", "delta_max", "t_min", "t_max"},
    "algorithm": {"name", "options", "n_restarts"},
    "objective": {"kind", "sigma_train", "k"},
    "bootstrap": {"resamples", "confidence"},
}


def _int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ValidationError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {value}")
    return value


def _float(value, name):
    if isinstance(value, bool):
        raise ValidationError(f"{name} must be a number, got {value!r}")
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return out


@dataclass(frozen=True)
class CampaignConfig:
    chain: ChainSpec
    bounds: ControlBounds = field(default_factory=ControlBounds)
    algorithm: str = "nelder-mead"
    options: dict = field(default_factory=dict)
    n_restarts: int | None = None
    objective_kind: str = NOISELESS
    sigma_train: float = 0.0
    k: int = 100
    sigma_sim_grid: tuple = DEFAULT_SIGMA_GRID
    n_samples: int = 100
    L: int = 100
    p: float = 1.0
    budget: int = 1_000_000
    seed: int = 0
    bootstrap_resamples: int = 100
    confidence: float = 0.95
    alpha: float = 0.05
    tau_base: float = 0.0
    yield_thresholds: tuple = (0.95, 0.98)
    checkpoint_every: int | None = None

    def __post_init__(self):
        grid = tuple(_float(s, "sigma_sim_grid entry") for s in self.sigma_sim_grid)
        if not grid:
            raise ValidationError("sigma_sim_grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValidationError("sigma_sim_grid must be strictly ascending")
        if grid[0] < 0:
            raise ValidationError("noise levels must be >= 0")
        if self.tau_base not in grid:
            raise ValidationError(f"tau_base {self.tau_base} is not in sigma_sim_grid")
        if self.tau_base == 0.0 and grid[0] != 0.0:
            raise ValidationError("sigma_sim_grid must start at 0 when tau_base is 0")
        object.__setattr__(self, "sigma_sim_grid", grid)
        thresholds = tuple(_float(t, "yield threshold") for t in self.yield_thresholds)
        if any(not 0.0 <= t <= 1.0 for t in thresholds):
            raise ValidationError("yield thresholds must lie in [0, 1]")
        object.__setattr__(self, "yield_thresholds", thresholds)

        if self.algorithm not in available_optimizers():
            raise ValidationError(
                f"unknown algorithm {self.algorithm!r}; available: {available_optimizers()}"
            )
        if not isinstance(self.options, dict):
            raise ValidationError("algorithm options must be a mapping")
        if self.objective_kind not in _KINDS:
            raise ValidationError(f"unknown objective kind {self.objective_kind!r}")
        for name in ("n_samples", "L", "budget", "k", "bootstrap_resamples"):
            _int(getattr(self, name), name, 1)
        if self.n_restarts is not None and _int(self.n_restarts, "n_restarts", 1) < self.L:
            raise ValidationError("n_restarts must be >= L")
        if self.checkpoint_every is not None:
            _int(self.checkpoint_every, "checkpoint_every", 1)
        _int(self.seed, "seed", 0)
        if self.seed >= 1 << 64:
            raise ValidationError("seed must fit in 64 bits")
        if not self.p >= 1:
            raise ValidationError(f"RIM order p must be >= 1, got {self.p}")
        if not 0.0 < self.confidence < 1.0:
            raise ValidationError("bootstrap confidence must lie in (0, 1)")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must lie in [0, 1]")
        if self.sigma_train < 0:
            raise ValidationError("sigma_train must be >= 0")

    @property
    def per_run_budget(self) -> int:
        return self.budget // (self.n_restarts or self.L)

    @property
    def effective_checkpoint(self) -> int:
        """Trajectory checkpoint interval in calls (default: a tenth of each restart's share)."""
        if self.checkpoint_every is not None:
            return self.checkpoint_every
        return max(1, self.per_run_budget // 10)

    def with_overrides(self, **changes) -> "CampaignConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes) if changes else self

    @classmethod
    def from_dict(cls, data: dict | None) -> "CampaignConfig":
        data = dict(data or {})
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        sections = {}
        for name, allowed in _SECTION_KEYS.items():
            sec = data.get(name) or {}
            if not isinstance(sec, dict):
                raise ValidationError(f"config section {name!r} must be a mapping")
            bad = set(sec) - allowed
            if bad:
                raise ValidationError(f"unknown keys in {name!r}: {sorted(bad)}")
            sections[name] = sec

        ch = sections["chain"]
        chain = ChainSpec(
            M=_int(ch.get("M", 5), "chain.M"),
            source=ch.get("source", 1),
            target=ch.get("target", "middle"),
            J=_float(ch.get("J", 1.0), "chain.J"),
        )
        b = sections["bounds"]
        default = ControlBounds()
        bounds = ControlBounds(
            _float(b.get("delta_min", default.delta_min), "bounds.delta_min"),
            _float(b.get("delta_max", default.delta_max), "bounds.delta_max"),
            _float(b.get("t_min", default.t_min), "bounds.t_min"),
            _float(b.get("t_max", default.t_max), "bounds.t_max"),
        )
        alg = sections["algorithm"]
        obj = sections["objective"]
        boot = sections["bootstrap"]
        kwargs = dict(
            chain=chain,
            bounds=bounds,
            algorithm=str(alg.get("name", "nelder-mead")),
            options=dict(alg.get("options") or {}),
            n_restarts=alg.get("n_restarts"),
            objective_kind=str(obj.get("kind", NOISELESS)),
            sigma_train=_float(obj.get("sigma_train", 0.0), "objective.sigma_train"),
            k=_int(obj.get("k", 100), "objective.k"),
            bootstrap_resamples=_int(boot.get("resamples", 100), "bootstrap.resamples"),
            confidence=_float(boot.get("confidence", 0.95), "bootstrap.confidence"),
        )
        for key in ("n_samples", "L", "budget", "seed"):
            if key in data:
                kwargs[key] = _int(data[key], key)
        for key in ("p", "alpha", "tau_base"):
            if key in data:
                kwargs[key] = _float(data[key], key)
        if "sigma_sim_grid" in data:
            kwargs["sigma_sim_grid"] = tuple(data["sigma_sim_grid"] or ())
        if "yield_thresholds" in data:
            kwargs["yield_thresholds"] = tuple(data["yield_thresholds"] or ())
        if data.get("checkpoint_every") is not None:
            kwargs["checkpoint_every"] = _int(data["checkpoint_every"], "checkpoint_every")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        """Normalized nested mapping; the inverse of :meth:`from_dict`."""
        return {
            "chain": {
                "M": self.chain.M,
                "J": self.chain.J,
                "source": self.chain.source,
                "target": self.chain.target,
            },
            "bounds": {
                "delta_min": self.bounds.delta_min,
                "delta_max": self.bounds.delta_max,
                "t_min": self.bounds.t_min,
                "t_max": self.bounds.t_max,
            },
            "algorithm": {
                "name": self.algorithm,
                "options": dict(self.options),
                "n_restarts": self.n_restarts,
            },
            "objective": {
                "kind": self.objective_kind,
                "sigma_train": float(self.sigma_train),
                "k": self.k,
            },
            "sigma_sim_grid": list(self.sigma_sim_grid),
            "n_samples": self.n_samples,
            "L": self.L,
            "p": float(self.p),
            "budget": self.budget,
            "seed": self.seed,
            "bootstrap": {
                "resamples": self.bootstrap_resamples,
                "confidence": float(self.confidence),
            },
            "alpha": float(self.alpha),
            "tau_base": float(self.tau_base),
            "yield_thresholds": list(self.yield_thresholds),
            "checkpoint_every": self.checkpoint_every,
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def config_hash(config: CampaignConfig) -> str:
    """SHA-256 of the canonical JSON form of the normalized config."""
    text = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def load_config(path) -> CampaignConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: not valid YAML: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be a mapping")
    return CampaignConfig.from_dict(data)
