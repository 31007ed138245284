"""Unstructured Hamiltonian noise for XX chains.

Every nonzero entry of the chain Hamiltonian is scaled by ``1 + gamma`` with
an independent ``gamma ~ N(0, sigma^2)``: one strength per coupling (applied
to both mirror entries so the result stays Hermitian) and one per bias.
Sites with zero bias therefore receive no diagonal noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .quantum_core import HermitianOperator, transfer_fidelities
from .rim_stats import FidelitySampleSet
from .rng import RngStream
from .spin_model import ChainSpec, Controller, controller_fidelity

__all__ = [
    "NoiseModel",
    "NoiseDraw",
    "RngStream",
    "noise_block",
    "sample_noise",
    "perturbed_hamiltonian",
    "perturbed_hamiltonians",
    "sample_fidelities",
]


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0

    def __post_init__(self):
        sigma = float(self.sigma)
        if not np.isfinite(sigma) or sigma < 0:
            raise ValidationError(f"noise level must be finite and >= 0, got {self.sigma}")
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True, eq=False)
class NoiseDraw:
    """Relative strengths for the ``M - 1`` couplings and ``M`` biases."""

    gamma_J: np.ndarray
    gamma_C: np.ndarray

    def __post_init__(self):
        gj = np.array(self.gamma_J, dtype=float).reshape(-1)
        gc = np.array(self.gamma_C, dtype=float).reshape(-1)
        if gc.size != gj.size + 1:
            raise ValidationError("need one coupling strength fewer than control strengths")
        gj.setflags(write=False)
        gc.setflags(write=False)
        object.__setattr__(self, "gamma_J", gj)
        object.__setattr__(self, "gamma_C", gc)

    @classmethod
    def zero(cls, M: int) -> "NoiseDraw":
        return cls(np.zeros(M - 1), np.zeros(M))


def noise_block(gen: np.random.Generator, M: int, n: int, sigma: float):
    """Draw ``n`` independent strength vectors from ``gen``.

    Returns ``(gamma_J, gamma_C)`` with shapes ``(n, M-1)`` and ``(n, M)``.
    Row ``i`` of a block is the same whatever ``n`` is, so a single draw and
    the first row of a batch coincide.
    """
    z = gen.standard_normal((n, 2 * M - 1)) * sigma
    return z[:, : M - 1], z[:, M - 1:]


def sample_noise(model: NoiseModel, spec: ChainSpec, rng: RngStream) -> NoiseDraw:
    if model.sigma == 0.0:
        return NoiseDraw.zero(spec.M)
    gj, gc = noise_block(rng.generator(), spec.M, 1, model.sigma)
    return NoiseDraw(gj[0], gc[0])


def perturbed_hamiltonians(spec: ChainSpec, ctrl: Controller, gamma_J, gamma_C) -> np.ndarray:
    """Stack of perturbed Hamiltonians, one per row of the strength arrays."""
    M = spec.M
    gj = np.atleast_2d(np.asarray(gamma_J, dtype=float))
    gc = np.atleast_2d(np.asarray(gamma_C, dtype=float))
    if gj.shape[1] != M - 1 or gc.shape[1] != M or gj.shape[0] != gc.shape[0]:
        raise ValidationError(
            f"noise shapes {gj.shape}, {gc.shape} do not match a chain of {M} spins"
        )
    if ctrl.M != M:
        raise ValidationError(f"controller has {ctrl.M} biases, chain has {M} spins")
    h = np.zeros((gj.shape[0], M, M))
    idx = np.arange(M)
    off = np.arange(M - 1)
    h[:, idx, idx] = ctrl.biases * (1.0 + gc)
    coupling = spec.J * (1.0 + gj)
    h[:, off, off + 1] = coupling
    h[:, off + 1, off] = coupling
    return h


def perturbed_hamiltonian(spec: ChainSpec, ctrl: Controller, draw: NoiseDraw) -> HermitianOperator:
    if draw.gamma_C.size != spec.M:
        raise ValidationError(f"noise draw is for {draw.gamma_C.size} spins, chain has {spec.M}")
    h = perturbed_hamiltonians(spec, ctrl, draw.gamma_J, draw.gamma_C)[0]
    return HermitianOperator(h)


def sample_fidelities(
    spec: ChainSpec,
    ctrl: Controller,
    model: NoiseModel,
    n: int,
    rng: RngStream,
    controller_id: int | None = None,
) -> FidelitySampleSet:
    """``n`` fidelities, each under its own perturbation drawn from ``rng``.

    With ``sigma = 0`` the distribution is a point mass and every sample is
    the noise-free fidelity.
    """
    if n < 1:
        raise ValidationError(f"need at least one sample, got {n}")
    if model.sigma == 0.0:
        f = np.full(n, controller_fidelity(spec, ctrl))
    else:
        gj, gc = noise_block(rng.generator(), spec.M, n, model.sigma)
        h = perturbed_hamiltonians(spec, ctrl, gj, gc)
        f = transfer_fidelities(h, ctrl.time, spec.source, spec.target)
    return FidelitySampleSet(f, sigma=model.sigma, seed=rng.seed, controller_id=controller_id)
