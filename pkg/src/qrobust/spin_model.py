"""XX spin chains restricted to the single-excitation subspace.

In the basis ``|1>, ..., |M>`` (excitation on spin ``l``) the Hamiltonian
is tridiagonal: uniform coupling ``J`` on the first off-diagonals and the
control biases on the diagonal. A controller is the bias vector together
with the readout time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .quantum_core import HermitianOperator, transfer_fidelities

__all__ = [
    "ChainSpec",
    "Controller",
    "ControlBounds",
    "resolve_target",
    "hamiltonian_matrix",
    "build_hamiltonian",
    "controller_fidelity",
    "controller_to_record",
    "controller_from_record",
]


def resolve_target(target, M: int) -> int:
    """Map the keywords ``middle``/``end`` to 1-based spin indices."""
    if isinstance(target, str):
        key = target.strip().lower()
        if key == "middle":
            return math.ceil(M / 2)
        if key == "end":
            return M
        try:
            return int(key)
        except ValueError:
            raise ValidationError(f"unknown target {target!r}") from None
    return int(target)


@dataclass(frozen=True)
class ChainSpec:
    """Chain length ``M``, coupling ``J`` and the transfer ``|source> -> |target>``."""

    M: int
    source: int = 1
    target: int = 2
    J: float = 1.0

    def __post_init__(self):
        if not isinstance(self.M, (int, np.integer)) or self.M < 2:
            raise ValidationError(f"chain length must be an integer >= 2, got {self.M!r}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "source", resolve_target(self.source, self.M))
        object.__setattr__(self, "target", resolve_target(self.target, self.M))
        object.__setattr__(self, "J", float(self.J))
        for name in ("source", "target"):
            idx = getattr(self, name)
            if not 1 <= idx <= self.M:
                raise ValidationError(f"{name} index {idx} outside 1..{self.M}")
        if self.source == self.target:
            raise ValidationError("source and target spins must differ")
        if not math.isfinite(self.J):
            raise ValidationError("coupling must be finite")


@dataclass(frozen=True)
class ControlBounds:
    """Box constraints on biases and readout time."""

    delta_min: float = -10.0
    delta_max: float = 10.0
    t_min: float = 0.0
    t_max: float = 70.0

    def __post_init__(self):
        if not self.delta_min < self.delta_max:
            raise ValidationError("delta_min must be below delta_max")
        if not 0 <= self.t_min < self.t_max:
            raise ValidationError("time bounds must satisfy 0 <= t_min < t_max")

    def lower(self, M: int) -> np.ndarray:
        return np.array([self.delta_min] * M + [self.t_min], dtype=float)

    def upper(self, M: int) -> np.ndarray:
        return np.array([self.delta_max] * M + [self.t_max], dtype=float)

    def clip(self, x: np.ndarray) -> np.ndarray:
        M = len(x) - 1
        return np.clip(x, self.lower(M), self.upper(M))

    def contains(self, ctrl: "Controller") -> bool:
        x = ctrl.as_vector()
        M = len(x) - 1
        return bool(np.all(x >= self.lower(M)) and np.all(x <= self.upper(M)))


@dataclass(frozen=True, eq=False)
class Controller:
    """Static controller: per-site biases plus readout time."""

    biases: np.ndarray
    time: float

    def __post_init__(self):
        b = np.array(self.biases, dtype=float).reshape(-1)
        if b.size < 2 or not np.all(np.isfinite(b)):
            raise ValidationError("biases must be a finite vector of length >= 2")
        t = float(self.time)
        if not math.isfinite(t) or t < 0:
            raise ValidationError(f"readout time must be finite and >= 0, got {t}")
        b.setflags(write=False)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "time", t)

    @property
    def M(self) -> int:
        return self.biases.size

    def as_vector(self) -> np.ndarray:
        return np.append(self.biases, self.time)

    @classmethod
    def from_vector(cls, x) -> "Controller":
        x = np.asarray(x, dtype=float)
        return cls(x[:-1], x[-1])

    def __eq__(self, other):
        if not isinstance(other, Controller):
            return NotImplemented
        return self.time == other.time and np.array_equal(self.biases, other.biases)

    def __hash__(self):
        return hash((self.biases.tobytes(), self.time))

    def __repr__(self):
        return f"Controller(biases={self.biases.tolist()}, time={self.time!r})"


def hamiltonian_matrix(M: int, J: float, biases) -> np.ndarray:
    """Raw tridiagonal matrix ``J (|l><l+1| + h.c.) + diag(biases)``."""
    h = np.diag(np.asarray(biases, dtype=float))
    idx = np.arange(M - 1)
    h[idx, idx + 1] = J
    h[idx + 1, idx] = J
    return h


def _check_lengths(spec: ChainSpec, ctrl: Controller):
    if ctrl.M != spec.M:
        raise ValidationError(f"controller has {ctrl.M} biases, chain has {spec.M} spins")


def build_hamiltonian(spec: ChainSpec, ctrl: Controller) -> HermitianOperator:
    _check_lengths(spec, ctrl)
    return HermitianOperator(hamiltonian_matrix(spec.M, spec.J, ctrl.biases))


def controller_fidelity(spec: ChainSpec, ctrl: Controller) -> float:
    """Noise-free transfer fidelity of ``ctrl`` on ``spec``."""
    h = build_hamiltonian(spec, ctrl)
    return float(transfer_fidelities(h.matrix[None], ctrl.time, spec.source, spec.target)[0])


def controller_to_record(spec: ChainSpec, ctrl: Controller) -> dict:
    """JSON-ready record ``{M, J, source, target, biases, time}``."""
    _check_lengths(spec, ctrl)
    return {
        "M": spec.M,
        "J": spec.J,
        "source": spec.source,
        "target": spec.target,
        "biases": [float(x) for x in ctrl.biases],
        "time": ctrl.time,
    }


def controller_from_record(record: dict) -> tuple[ChainSpec, Controller]:
    try:
        spec = ChainSpec(
            M=int(record["M"]),
            J=float(record.get("J", 1.0)),
            source=record["source"],
            target=record["target"],
        )
        ctrl = Controller(record["biases"], record["time"])
    except KeyError as exc:
        raise ValidationError(f"controller record missing field {exc}") from None
    _check_lengths(spec, ctrl)
    return spec, ctrl
