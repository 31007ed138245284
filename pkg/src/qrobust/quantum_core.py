"""Dense linear algebra for small Hermitian systems.

Units are dimensionless with hbar = 1, so the propagator of a
time-independent Hamiltonian ``H`` is ``exp(-i H t)``. The exponential is
always formed from the eigendecomposition, which keeps the propagator
unitary to machine precision and lets one decomposition serve many times.

Basis indices in the public API are 1-based (``|1>, ..., |dim>``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NumericalError, ValidationError

HERMITIAN_ATOL = 1e-12
NORM_ATOL = 1e-12
# below this eigenvalue gap the divided difference switches to its limit
DEGENERACY_TOL = 1e-9

__all__ = [
    "HermitianOperator",
    "EigenSystem",
    "as_operator",
    "basis_state",
    "eig_hermitian",
    "propagator",
    "propagate",
    "transfer_fidelity",
    "transfer_fidelities",
    "fidelity_gradient",
]


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Immutable dense Hermitian matrix.

    Real input is kept real (a real symmetric matrix is Hermitian), which
    lets LAPACK use the cheaper symmetric solver.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix)
        if not (np.issubdtype(m.dtype, np.floating) or np.issubdtype(m.dtype, np.complexfloating)
                or np.issubdtype(m.dtype, np.integer)):
            raise ValidationError(f"unsupported dtype {m.dtype}")
        m = m.astype(np.complex128 if np.iscomplexobj(m) else np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"operator must be square, got shape {m.shape}")
        if m.shape[0] < 2:
            raise ValidationError("operator dimension must be at least 2")
        if not np.all(np.isfinite(m)):
            raise ValidationError("operator has non-finite entries")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_ATOL:
            raise ValidationError("operator is not Hermitian within 1e-12")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim})"


class EigenSystem(NamedTuple):
    """Eigenvalues (ascending) and orthonormal eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_operator(H) -> HermitianOperator:
    if isinstance(H, HermitianOperator):
        return H
    return HermitianOperator(np.asarray(H))


def basis_state(dim: int, index: int) -> np.ndarray:
    """Return the ket ``|index>`` (1-based) of a ``dim``-level system."""
    _check_index(index, dim)
    psi = np.zeros(dim, dtype=np.complex128)
    psi[index - 1] = 1.0
    return psi


def _check_index(index, dim):
    if not isinstance(index, (int, np.integer)) or not 1 <= index <= dim:
        raise ValidationError(f"basis index {index!r} outside 1..{dim}")


def _eigh(h):
    try:
        return np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc


def eig_hermitian(H) -> EigenSystem:
    """Eigendecomposition ``H = V diag(w) V^dagger`` with ``w`` ascending."""
    op = as_operator(H)
    w, v = _eigh(op.matrix)
    return EigenSystem(w, v)


def propagator(H, t: float) -> np.ndarray:
    """Return ``U = exp(-i H t)``."""
    if t < 0:
        raise ValidationError(f"time must be non-negative, got {t}")
    w, v = eig_hermitian(H)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def propagate(H, t: float, psi0) -> np.ndarray:
    """Evolve ``psi0`` for time ``t`` under ``H``."""
    op = as_operator(H)
    if t < 0:
        raise ValidationError(f"time must be non-negative, got {t}")
    psi = np.asarray(psi0, dtype=np.complex128)
    if psi.shape != (op.dim,):
        raise ValidationError(f"state has shape {psi.shape}, expected ({op.dim},)")
    if abs(np.linalg.norm(psi) - 1.0) > NORM_ATOL:
        raise ValidationError("state vector is not normalized")
    w, v = _eigh(op.matrix)
    return v @ (np.exp(-1j * w * t) * (v.conj().T @ psi))


def _amplitudes(w, v, t, a0, b0):
    # <b|U(t)|a> for a batch of eigensystems; a0, b0 are 0-based
    phases = np.exp(-1j * w * t)
    return np.sum(v[..., b0, :] * phases * v[..., a0, :].conj(), axis=-1)


def _fidelities_from_eig(w, v, t, a0, b0):
    amp = _amplitudes(w, v, t, a0, b0)
    return np.clip(amp.real ** 2 + amp.imag ** 2, 0.0, 1.0)


def transfer_fidelities(hamiltonians: np.ndarray, t: float, a: int, b: int) -> np.ndarray:
    """Fidelities ``|<b|exp(-iHt)|a>|^2`` for a stack of Hamiltonians.

    ``hamiltonians`` has shape ``(..., dim, dim)`` and is assumed Hermitian;
    no validation is done here, this is the hot path used by samplers and
    objectives. ``a`` and ``b`` are 1-based.
    """
    h = np.asarray(hamiltonians)
    w, v = _eigh(h)
    return _fidelities_from_eig(w, v, t, a - 1, b - 1)


def transfer_fidelity(H, t: float, a: int, b: int) -> float:
    """State-transfer fidelity ``|<b|U(t)|a>|^2`` clamped to [0, 1]."""
    op = as_operator(H)
    _check_index(a, op.dim)
    _check_index(b, op.dim)
    return float(transfer_fidelities(op.matrix[None], t, a, b)[0])


def _fidelity_and_gradient(h, t, a0, b0):
    """Fidelity, d/d(diagonal), d/dt for one Hamiltonian ``h``."""
    w, v = _eigh(h[None])
    fid = float(_fidelities_from_eig(w, v, t, a0, b0)[0])
    w, v = w[0], v[0]
    e = np.exp(-1j * w * t)
    amp = np.sum(v[b0] * e * v[a0].conj())

    damp_dt = np.sum(-1j * w * v[b0] * e * v[a0].conj())

    gap = w[:, None] - w[None, :]
    degenerate = np.abs(gap) < DEGENERACY_TOL
    safe_gap = np.where(degenerate, 1.0, gap)
    divdiff = np.where(
        degenerate,
        (-1j * t * e)[:, None] * np.ones_like(gap),
        (e[:, None] - e[None, :]) / safe_gap,
    )
    left = v[b0][None, :] * v.conj()     # [l, i] = V_bi conj(V_li)
    right = v * v[a0].conj()[None, :]    # [l, j] = V_lj conj(V_aj)
    damp_dd = np.einsum("li,ij,lj->l", left, divdiff, right)

    grad_d = 2.0 * np.real(np.conj(amp) * damp_dd)
    grad_t = 2.0 * float(np.real(np.conj(amp) * damp_dt))
    return fid, grad_d, grad_t


def fidelity_gradient(H_base, delta, t: float, a: int, b: int):
    """Exact gradient of the transfer fidelity of ``H_base + diag(delta)``.

    Returns
    -------
    grad_delta : ndarray, shape (dim,)
        Partial derivatives with respect to each diagonal bias.
    grad_t : float
        Partial derivative with respect to the readout time.
    """
    op = as_operator(H_base)
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (op.dim,):
        raise ValidationError(f"bias vector has shape {delta.shape}, expected ({op.dim},)")
    _check_index(a, op.dim)
    _check_index(b, op.dim)
    h = op.matrix + np.diag(delta)
    _, grad_d, grad_t = _fidelity_and_gradient(h, t, a - 1, b - 1)
    return grad_d, grad_t
