"""Truncated single-mode Fock space: operators, spectral helpers, Wigner functions.

Operators that are diagonal in the Fock basis are kept as 1-D arrays of their
diagonal and applied elementwise; everything else is a dense square array.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg


@dataclass(frozen=True)
class ModeSpace:
    """Fock space truncated to ``|0>, ..., |dim-1>``.

    Parameters
    ----------
    dim : int
        Number of Fock levels kept.
    tail_tol : float
        Largest probability a state may carry beyond the cutoff before
        constructors refuse it.
    """

    dim: int
    tail_tol: float = 1e-12

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"dim must be an integer >= 2, got {self.dim!r}")
        if not 0.0 <= self.tail_tol < 1.0:
            raise ValueError(f"tail_tol must lie in [0, 1), got {self.tail_tol!r}")

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.dim)

    def basis(self, n: int) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[n] = 1.0
        return v

    def coherent(self, alpha: complex) -> np.ndarray:
        """Coherent state amplitudes, not renormalized after truncation."""
        return coherent_amplitudes(alpha, self.dim)


class ModeOps(NamedTuple):
    annihilation: np.ndarray
    creation: np.ndarray
    number: np.ndarray  # diagonal

    def rotation(self, theta: float) -> np.ndarray:
        """Diagonal of ``exp(i theta n)``."""
        return rotation_diag(len(self.number), theta)


def build_mode_ops(space: ModeSpace) -> ModeOps:
    a = annihilation(space.dim)
    return ModeOps(a, a.conj().T, np.arange(space.dim, dtype=float))


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def rotation_diag(dim: int, theta: float) -> np.ndarray:
    return np.exp(1j * theta * np.arange(dim))


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    n = np.arange(dim)
    r = abs(alpha)
    if r == 0:
        out = np.zeros(dim, dtype=complex)
        out[0] = 1.0
        return out
    from scipy.special import gammaln

    log_mag = -0.5 * r * r + n * np.log(r) - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * np.exp(1j * np.angle(alpha) * n)


def as_operator(op: np.ndarray) -> np.ndarray:
    """Dense matrix of an operator given either densely or by its diagonal."""
    op = np.asarray(op)
    return np.diag(op) if op.ndim == 1 else op


def apply_op(op: np.ndarray, state: np.ndarray) -> np.ndarray:
    """Apply an operator (diagonal or dense) to a vector or density matrix."""
    op = np.asarray(op)
    state = np.asarray(state)
    if state.ndim == 1:
        return op * state if op.ndim == 1 else op @ state
    if op.ndim == 1:
        return op[:, None] * state * op.conj()[None, :]
    return op @ state @ op.conj().T


def ket2dm(v: np.ndarray) -> np.ndarray:
    return np.outer(v, v.conj())


def tail_probability(amplitudes: np.ndarray, dim: int) -> float:
    """Probability weight of ``amplitudes`` at Fock levels >= ``dim``."""
    a = np.asarray(amplitudes)
    return float(np.sum(np.abs(a[dim:]) ** 2))


def psd_sqrt_pinv(op: np.ndarray, null_tol: float = 1e-12,
                  herm_tol: float = 1e-10) -> np.ndarray:
    """Inverse square root of a PSD operator on its support.

    Eigenvalues below ``null_tol * lambda_max`` are treated as null space and
    map to zero, so ``M @ op @ M`` is the projector onto the support of
    ``op``.
    """
    op = as_operator(op)
    scale = max(float(np.max(np.abs(op))), 1.0)
    asym = float(np.max(np.abs(op - op.conj().T))) if op.size else 0.0
    if asym > herm_tol * scale:
        raise ValueError(f"operator is not Hermitian: max asymmetry {asym:.3e}")
    w, v = linalg.eigh(0.5 * (op + op.conj().T))
    lam_max = float(w.max()) if w.size else 0.0
    if lam_max <= 0:
        return np.zeros_like(op)
    if w.min() < -herm_tol * max(lam_max, 1.0):
        raise ValueError(f"operator is not positive semidefinite: min eigenvalue {w.min():.3e}")
    keep = w > null_tol * lam_max
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return (v * inv) @ v.conj().T


def support_projector(op: np.ndarray, null_tol: float = 1e-12) -> np.ndarray:
    op = as_operator(op)
    w, v = linalg.eigh(0.5 * (op + op.conj().T))
    keep = w > null_tol * max(float(w.max()), 0.0)
    return v[:, keep] @ v[:, keep].conj().T


class WignerGrid(NamedTuple):
    values: np.ndarray
    tail: float
    warning: str | None


def wigner_grid(state: np.ndarray, alphas: np.ndarray,
                space: ModeSpace | None = None) -> WignerGrid:
    """Wigner function ``W(alpha)`` on an array of complex points.

    Normalized so that the integral over ``d Re(alpha) d Im(alpha)`` is one;
    vacuum peaks at ``2/pi``.

    ``state`` is a vector or a density matrix. When ``space`` is given and
    the state's trace falls short of one by more than ``space.tail_tol``, a
    warning is issued and recorded on the result.
    """
    state = np.asarray(state)
    rho = ket2dm(state) if state.ndim == 1 else state
    dim = rho.shape[0]
    tail = max(0.0, 1.0 - float(np.real(np.trace(rho))))
    msg = None
    if space is not None and tail > space.tail_tol:
        msg = f"state trace deficit {tail:.3e} exceeds tail_tol {space.tail_tol:.1e}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    alphas = np.asarray(alphas, dtype=complex)
    A = alphas
    # Laguerre-type recursion over matrix elements <m|W|n>.
    w_list = [np.exp(-2.0 * np.abs(A) ** 2) / np.pi]
    W = np.real(rho[0, 0]) * np.real(w_list[0])
    for n in range(1, dim):
        w_list.append(2.0 * A * w_list[n - 1] / np.sqrt(n))
        W = W + 2.0 * np.real(rho[0, n] * w_list[n])
    for m in range(1, dim):
        temp = w_list[m].copy()
        w_list[m] = (2.0 * np.conj(A) * temp - np.sqrt(m) * w_list[m - 1]) / np.sqrt(m)
        W = W + np.real(rho[m, m] * w_list[m])
        for n in range(m + 1, dim):
            temp2 = (2.0 * A * w_list[n - 1] - np.sqrt(m) * temp) / np.sqrt(n)
            temp = w_list[n].copy()
            w_list[n] = temp2
            W = W + 2.0 * np.real(rho[m, n] * w_list[n])
    return WignerGrid(2.0 * W, tail, msg)
