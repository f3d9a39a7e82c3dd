"""Loss and dephasing as Kraus families, plus a dense Lindblad reference."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import linalg, special, stats

from .fock import ModeSpace, annihilation


class NoiseParams(NamedTuple):
    """Dimensionless loss strength ``kappa t`` and dephasing strength ``kappa_phi t``."""

    kappa_t: float = 0.0
    kappa_phi_t: float = 0.0

    def validate(self) -> "NoiseParams":
        for name, v in zip(self._fields, self):
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
        return self


class ChannelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """Ordered Kraus operators on one mode.

    ``labels[i]`` is ``(k, l)``: the loss count and the dephasing index of
    ``ops[i]``. ``completeness_defect`` is ``||sum K^dag K - I||`` on the
    subspace the channel was built for.
    """

    ops: tuple[np.ndarray, ...]
    labels: tuple[tuple[int, int], ...]
    completeness_defect: float
    space: ModeSpace

    @property
    def dim(self) -> int:
        return self.space.dim

    def __len__(self):
        return len(self.ops)

    def completeness(self) -> np.ndarray:
        return sum(K.conj().T @ K for K in self.ops)

    def superoperator(self) -> np.ndarray:
        """Matrix acting on row-major ``vec(rho)``."""
        d = self.dim
        flat = np.stack(self.ops).reshape(len(self.ops), d * d)
        # sum_K K[i,j] conj(K[a,b]) arranged as [(i,a), (j,b)]
        S = flat.T @ flat.conj()
        return S.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)


def loss_kraus_ops(dim: int, kappa_t: float, k_max: int) -> list[np.ndarray]:
    """``A_k = (1-e^{-kt})^{k/2}/sqrt(k!) e^{-kt n/2} a^k`` for ``k <= k_max``."""
    n = np.arange(dim)
    damp = np.exp(-0.5 * kappa_t * n)
    p = -math.expm1(-kappa_t)
    ops = []
    for k in range(k_max + 1):
        # a^k |m> = sqrt(m!/(m-k)!) |m-k>
        m = np.arange(k, dim)
        amp = np.exp(0.5 * (special.gammaln(m + 1) - special.gammaln(m - k + 1)))
        if k > 0:
            amp = amp * math.exp(0.5 * k * math.log(p) - 0.5 * special.gammaln(k + 1))
        A = np.zeros((dim, dim), dtype=complex)
        A[m - k, m] = damp[m - k] * amp
        ops.append(A)
    return ops


def dephasing_kraus_diagonals(dim: int, kappa_phi_t: float, l_max: int) -> list[np.ndarray]:
    """Diagonals of ``B_l = (kpt)^{l/2}/sqrt(l!) e^{-kpt n^2/2} n^l``."""
    n = np.arange(dim, dtype=float)
    base = np.exp(-0.5 * kappa_phi_t * n**2)
    if kappa_phi_t == 0:
        return [base.astype(complex)]
    out = [base.astype(complex)]
    log_n = np.log(n[1:])
    for ell in range(1, l_max + 1):
        b = np.zeros(dim)
        b[1:] = np.exp(0.5 * ell * math.log(kappa_phi_t) - 0.5 * special.gammaln(ell + 1)
                       - 0.5 * kappa_phi_t * n[1:] ** 2 + ell * log_n)
        out.append(b.astype(complex))
    return out


def compressed_dephasing_diagonals(dim: int, kappa_phi_t: float,
                                   tol: float = 1e-13) -> list[np.ndarray]:
    """Minimal diagonal Kraus set for pure dephasing on ``dim`` levels.

    Dephasing multiplies ``rho_mn`` by ``exp(-kpt (m-n)^2 / 2)``; the
    eigenvectors of that PSD kernel give the Kraus diagonals. Eigenvalues
    below ``tol`` times the largest are dropped.
    """
    if kappa_phi_t == 0:
        return [np.ones(dim, dtype=complex)]
    n = np.arange(dim)
    G = np.exp(-0.5 * kappa_phi_t * (n[:, None] - n[None, :]) ** 2)
    w, v = linalg.eigh(G)
    keep = w > tol * w.max()
    return [np.sqrt(w[i]) * v[:, i].astype(complex) for i in np.nonzero(keep)[0][::-1]]


def _loss_defect(n_max: int, kappa_t: float, k_max: int) -> float:
    if kappa_t == 0:
        return 0.0
    p = -math.expm1(-kappa_t)
    n = np.arange(n_max + 1)
    return float(np.max(stats.binom.sf(k_max, n, p)))


def _dephasing_defect(n_max: int, kappa_phi_t: float, l_max: int) -> float:
    if kappa_phi_t == 0:
        return 0.0
    n = np.arange(n_max + 1)
    return float(np.max(stats.poisson.sf(l_max, kappa_phi_t * n**2)))


def loss_dephasing_kraus(space: ModeSpace | int, params: NoiseParams,
                         k_max: int | str = "auto", l_max: int | str = "auto", *,
                         reach: int | None = None, defect_tol: float = 1e-10,
                         compress: bool = False) -> KrausChannel:
    """Kraus form of simultaneous loss and dephasing, ``{B_l A_k}``.

    Parameters
    ----------
    space : ModeSpace or int
    params : NoiseParams
    k_max, l_max : int or "auto"
        Loss and dephasing cutoffs. ``"auto"`` grows each cutoff until the
        completeness defect on Fock levels ``<= reach`` is below
        ``defect_tol``.
    reach : int, optional
        Highest Fock level the channel must be complete on (default: all).
    compress : bool
        Replace the ``B_l`` series by the minimal diagonal Kraus set of the
        same dephasing channel. Labels then carry the eigen-index in place
        of ``l``.
    """
    space = space if isinstance(space, ModeSpace) else ModeSpace(int(space))
    params = NoiseParams(*params).validate()
    dim = space.dim
    reach = dim - 1 if reach is None else min(reach, dim - 1)
    kt, kpt = params

    if k_max == "auto":
        k_max = 0
        while _loss_defect(reach, kt, k_max) > 0.5 * defect_tol:
            k_max += 1
            if k_max > dim - 1:
                raise ChannelError(f"loss cutoff exceeds dim; defect {_loss_defect(reach, kt, dim - 1):.2e}")
    k_max = min(int(k_max), dim - 1)
    if compress:
        diags = compressed_dephasing_diagonals(dim, kpt)
        l_defect = 0.0
    else:
        if l_max == "auto":
            l_max = 0
            while _dephasing_defect(reach, kpt, l_max) > 0.5 * defect_tol:
                l_max += 1
                if l_max > 20 * dim * dim:
                    raise ChannelError("dephasing cutoff search diverged")
        diags = dephasing_kraus_diagonals(dim, kpt, int(l_max)) if kpt > 0 else [np.ones(dim, complex)]
        l_defect = _dephasing_defect(reach, kpt, int(l_max) if kpt > 0 else 0)

    A = loss_kraus_ops(dim, kt, k_max) if kt > 0 else [np.eye(dim, dtype=complex)]
    ops, labels = [], []
    for k, Ak in enumerate(A):
        for ell, b in enumerate(diags):
            ops.append(b[:, None] * Ak)
            labels.append((k, ell))
    total = sum(K.conj().T @ K for K in ops)
    sub = slice(0, reach + 1)
    defect = float(np.linalg.norm(total[sub, sub] - np.eye(reach + 1), 2))
    defect = max(defect, _loss_defect(reach, kt, k_max) if kt > 0 else 0.0, l_defect)
    return KrausChannel(tuple(ops), tuple(labels), defect, space)


def identity_channel(space: ModeSpace | int) -> KrausChannel:
    space = space if isinstance(space, ModeSpace) else ModeSpace(int(space))
    return KrausChannel((np.eye(space.dim, dtype=complex),), ((0, 0),), 0.0, space)


def kraus_channel(ops: Sequence[np.ndarray], space: ModeSpace | None = None) -> KrausChannel:
    """Wrap arbitrary Kraus operators (e.g. a deterministic error)."""
    ops = tuple(np.asarray(K, dtype=complex) for K in ops)
    dim = ops[0].shape[1]
    space = space or ModeSpace(dim)
    defect = float(np.linalg.norm(sum(K.conj().T @ K for K in ops) - np.eye(dim), 2))
    return KrausChannel(ops, tuple((i, 0) for i in range(len(ops))), defect, space)


def apply_channel(channel: KrausChannel, state: np.ndarray) -> np.ndarray:
    """``sum_K K rho K^dag`` for a density matrix or a pure vector."""
    state = np.asarray(state)
    if state.shape[0] != channel.dim:
        raise ChannelError(f"state dimension {state.shape[0]} != channel dimension {channel.dim}")
    rho = np.outer(state, state.conj()) if state.ndim == 1 else state
    return sum(K @ rho @ K.conj().T for K in channel.ops)


def kraus_branches(channel: KrausChannel, psi: np.ndarray) -> list[np.ndarray]:
    """Unnormalized pure branches ``K|psi>`` of a pure input."""
    psi = np.asarray(psi)
    if psi.shape[0] != channel.dim:
        raise ChannelError(f"state dimension {psi.shape[0]} != channel dimension {channel.dim}")
    return [K @ psi for K in channel.ops]


def dissipator(L: np.ndarray) -> np.ndarray:
    """Superoperator of ``D[L]`` on row-major ``vec(rho)``."""
    d = L.shape[0]
    I = np.eye(d)
    LdL = L.conj().T @ L
    return np.kron(L, L.conj()) - 0.5 * np.kron(LdL, I) - 0.5 * np.kron(I, LdL.T)


def lindblad_oracle(space: ModeSpace | int, params: NoiseParams, t: float = 1.0) -> np.ndarray:
    """Dense ``exp(t (k D[a] + kp D[n]))`` with ``params`` as rates times ``t=1``.

    Only for small spaces; used to check the Kraus construction.
    """
    dim = space.dim if isinstance(space, ModeSpace) else int(space)
    if dim > 40:
        raise ChannelError(f"dense Liouvillian limited to dim <= 40, got {dim}")
    a = annihilation(dim)
    n = np.diag(np.arange(dim, dtype=complex))
    kt, kpt = NoiseParams(*params).validate()
    L = kt * dissipator(a) + kpt * dissipator(n)
    return linalg.expm(t * L)
