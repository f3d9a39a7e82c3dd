"""Phase-estimation POVMs, the Pretty Good Measurement and logical decoders.

Two representations are used. ``DensePovm`` stores full matrices and
factorizes each element as ``V V^dag`` for contractions. ``PhasePovm``
stores only the reference phases ``gamma_n`` and the bin edges; its element
``M_j[m, n] = gamma_m conj(gamma_n) w_j(m - n)`` depends on ``m - n`` alone,
so expectation values reduce to lag correlations computed by FFT.

Outcome indices run over the labelled elements first; the completion
element, when present, is the last outcome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import fft as sp_fft
from scipy import linalg, special

from .channels import KrausChannel, apply_channel
from .codes import RotationCode
from .fock import ModeSpace, ket2dm, psd_sqrt_pinv


class PovmError(ValueError):
    pass


def _hermitian_factor(M: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """``V`` with ``V @ V^dag = M`` for a PSD matrix, dropping tiny modes."""
    w, v = linalg.eigh(0.5 * (M + M.conj().T))
    top = max(float(w.max()), 0.0) if w.size else 0.0
    keep = w > tol * max(top, 1.0)
    return v[:, keep] * np.sqrt(w[keep])


class Povm:
    """Common interface. Subclasses provide ``element(j)`` and ``labels``."""

    labels: tuple
    kind: str

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def n_outcomes(self) -> int:
        return len(self.labels) + (self.completion is not None)

    @property
    def completion(self) -> np.ndarray | None:
        return None

    def element(self, j: int) -> np.ndarray:
        raise NotImplementedError

    def elements(self) -> list[np.ndarray]:
        out = [self.element(j) for j in range(len(self.labels))]
        if self.completion is not None:
            out.append(self.completion)
        return out

    def completeness_defect(self) -> float:
        total = sum(self.elements())
        return float(np.linalg.norm(total - np.eye(self.dim), 2))

    def probabilities(self, state: np.ndarray) -> np.ndarray:
        """Outcome probabilities for a vector or density matrix."""
        state = np.asarray(state)
        if state.shape[0] != self.dim:
            raise PovmError(f"state dimension {state.shape[0]} != POVM dimension {self.dim}")
        rho = ket2dm(state) if state.ndim == 1 else state
        return np.array([np.real(np.vdot(E.conj().T, rho)) for E in self.elements()])
        # vdot(E^dag, rho) = tr(E rho)

    def batch_expectations(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        """``sum_b <U_b|M_j|V_b>`` for every outcome ``j``; ``U, V`` are ``(batch, dim)``."""
        G = np.asarray(U).conj().T @ np.asarray(V)
        return np.array([np.sum(E * G) for E in self.elements()])


@dataclass(frozen=True, eq=False)
class DensePovm(Povm):
    """POVM with explicitly stored elements."""

    element_ops: tuple[np.ndarray, ...]
    labels: tuple
    completion_op: np.ndarray | None = None
    kind: str = "dense"

    @property
    def dim(self) -> int:
        return self.element_ops[0].shape[0]

    @property
    def completion(self):
        return self.completion_op

    def element(self, j: int) -> np.ndarray:
        return self.element_ops[j]

    def factors(self) -> list[np.ndarray]:
        """``V_j`` with ``M_j = V_j V_j^dag`` for every outcome."""
        cached = self.__dict__.get("_factors")
        if cached is None:
            cached = [_hermitian_factor(E) for E in self.elements()]
            object.__setattr__(self, "_factors", cached)
        return cached


def lag_weights(edges: np.ndarray, lags: np.ndarray) -> np.ndarray:
    """``w_j(d) = (1/2pi) int_{edges[j]}^{edges[j+1]} e^{i d theta} d theta``.

    Returns an array of shape ``(len(edges) - 1, len(lags))``.
    """
    lo = edges[:-1, None]
    hi = edges[1:, None]
    d = np.asarray(lags)[None, :]
    out = np.empty((len(edges) - 1, d.shape[1]), dtype=complex)
    zero = d[0] == 0
    dd = np.where(zero, 1, d)
    out[:] = (np.exp(1j * dd * hi) - np.exp(1j * dd * lo)) / (2j * np.pi * dd)
    out[:, zero] = (hi - lo) / (2 * np.pi)
    return out


@dataclass(frozen=True, eq=False)
class PhasePovm(Povm):
    """Binned canonical phase measurement.

    Parameters
    ----------
    gamma : complex array of unit modulus
        Reference phases ``gamma_n``.
    edges : array
        ``J + 1`` increasing bin edges spanning exactly ``2 pi``.
    """

    gamma: np.ndarray
    edges: np.ndarray
    kind: str = "canonical_phase"

    @property
    def dim(self) -> int:
        return len(self.gamma)

    @property
    def labels(self) -> tuple:
        return tuple(0.5 * (self.edges[:-1] + self.edges[1:]))

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    def fft_length(self) -> int:
        return sp_fft.next_fast_len(2 * self.dim - 1)

    def element(self, j: int) -> np.ndarray:
        n = np.arange(self.dim)
        w = lag_weights(self.edges[j:j + 2], (n[:, None] - n[None, :]).ravel())[0]
        return np.outer(self.gamma, self.gamma.conj()) * w.reshape(self.dim, self.dim)

    def correlation_weights(self) -> np.ndarray:
        """``W[j, m]`` such that ``<u|M_j|v> = sum_m W[j, m] ifft(conj(A) B)[m]``.

        ``A, B`` are length-``fft_length`` FFTs of ``conj(gamma) u`` and
        ``conj(gamma) v``; index ``m`` holds lag ``d = -m mod L``.
        """
        cached = self.__dict__.get("_corr_w")
        if cached is None:
            L = self.fft_length()
            m = np.arange(L)
            d = -m
            d = np.where(d < -(L // 2), d + L, d)  # map to the symmetric lag window
            cached = lag_weights(self.edges, d)
            object.__setattr__(self, "_corr_w", cached)
        return cached

    def transform(self, x: np.ndarray, axis: int = -1) -> np.ndarray:
        """FFT of ``conj(gamma) x`` along ``axis`` (the measured rail)."""
        shape = [1] * x.ndim
        shape[axis] = self.dim
        return sp_fft.fft(x * self.gamma.conj().reshape(shape), n=self.fft_length(), axis=axis)

    def batch_expectations(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        A = self.transform(np.atleast_2d(U))
        B = self.transform(np.atleast_2d(V))
        C = sp_fft.ifft(np.sum(A.conj() * B, axis=0))
        return self.correlation_weights() @ C

    def probabilities(self, state: np.ndarray) -> np.ndarray:
        state = np.asarray(state)
        if state.shape[0] != self.dim:
            raise PovmError(f"state dimension {state.shape[0]} != POVM dimension {self.dim}")
        if state.ndim == 1:
            return np.real(self.batch_expectations(state[None, :], state[None, :]))
        w, v = linalg.eigh(0.5 * (state + state.conj().T))
        keep = w > 0
        X = (v[:, keep] * np.sqrt(w[keep])).T
        return np.real(self.batch_expectations(X, X))


def phase_edges(J: int, theta0: float) -> np.ndarray:
    return theta0 + 2 * np.pi * np.arange(J + 1) / J


def default_bins(N: int) -> int:
    return max(64, 16 * N)


def reference_phases(dim: int, reference: RotationCode | None) -> np.ndarray:
    """``gamma_n``: phase of the reference code's amplitudes, 1 off its support."""
    gamma = np.ones(dim, dtype=complex)
    if reference is None:
        return gamma
    amp = reference.plus()
    m = min(dim, len(amp))
    mag = np.abs(amp[:m])
    on = mag > 0
    gamma[:m][on] = amp[:m][on] / mag[on]
    return gamma


def canonical_phase_povm(space: ModeSpace | int, reference: RotationCode | None = None,
                         bins: int | None = None, theta0: float | None = None) -> PhasePovm:
    """Canonical phase measurement discretized into ``bins`` equal windows.

    Defaults: ``bins = max(64, 16 N)`` and ``theta0 = -pi/(2N)`` so no bin
    edge sits on a phase-grid angle ``m pi / N``. ``N`` is the reference
    code's order, or 1 without a reference.
    """
    dim = space.dim if isinstance(space, ModeSpace) else int(space)
    N = reference.N if reference is not None else 1
    J = default_bins(N) if bins is None else int(bins)
    if J < 2:
        raise PovmError(f"need at least 2 phase bins, got {J}")
    t0 = -np.pi / (2 * N) if theta0 is None else float(theta0)
    return PhasePovm(reference_phases(dim, reference), phase_edges(J, t0))


def radial_moments(orders: np.ndarray, nodes: int = 200) -> np.ndarray:
    """``2 int_0^inf e^{-r^2} r^{p+1} dr`` for each ``p`` by Gauss-Legendre.

    Radius mapped by ``r = tan(x pi / 2)``, ``x`` in ``[0, 1)``. Exact value is
    ``Gamma(p/2 + 1)``.
    """
    x, wx = np.polynomial.legendre.leggauss(nodes)
    x = 0.5 * (x + 1)
    wx = 0.5 * wx
    r = np.tan(0.5 * np.pi * x)
    jac = 0.5 * np.pi / np.cos(0.5 * np.pi * x) ** 2
    p = np.asarray(orders, dtype=float)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_integrand = -r**2 + (p + 1) * np.log(r)
    integrand = np.where(r > 0, np.exp(log_integrand), 0.0)
    return 2 * integrand @ (wx * jac)


def heterodyne_povm(space: ModeSpace | int, radial_nodes: int = 200,
                    angular_bins: int = 64, theta0: float = 0.0) -> DensePovm:
    """Heterodyne measurement coarse-grained into angular wedges.

    Wedge ``j`` integrates ``|alpha><alpha| d^2 alpha / pi`` over all radii
    and ``arg(alpha)`` in bin ``j``. The radial integral is done by
    quadrature; whatever it misses is put in the completion element.
    """
    dim = space.dim if isinstance(space, ModeSpace) else int(space)
    if radial_nodes < 16 or angular_bins < 16:
        raise PovmError("heterodyne_povm needs at least 16 radial nodes and 16 angular bins")
    n = np.arange(dim)
    mom = radial_moments(np.arange(2 * dim - 1), radial_nodes)
    log_fact = 0.5 * special.gammaln(n + 1)
    R = mom[n[:, None] + n[None, :]] * np.exp(-log_fact[:, None] - log_fact[None, :])
    edges = phase_edges(angular_bins, theta0)
    W = lag_weights(edges, (n[:, None] - n[None, :]).ravel()).reshape(angular_bins, dim, dim)
    elems = tuple(R * W[j] for j in range(angular_bins))
    completion = np.eye(dim) - sum(elems)
    labels = tuple(0.5 * (edges[:-1] + edges[1:]))
    return DensePovm(elems, labels, completion, kind="heterodyne")


def pretty_good_povm(candidates: Sequence[np.ndarray], channel: KrausChannel | None = None,
                     null_tol: float = 1e-12) -> DensePovm:
    """Pretty Good Measurement for ``candidates`` sent through ``channel``.

    ``M_i = s N(|i><i|) s`` with ``s = sigma^{-1/2}`` on the support of
    ``sigma = N(sum_i |i><i|)``; the completion is ``I - P_sigma``.
    """
    rhos = []
    for c in candidates:
        c = np.asarray(c)
        if abs(np.linalg.norm(c) - 1) > 1e-10:
            raise PovmError(f"candidate not normalized: norm {np.linalg.norm(c):.12f}")
        rhos.append(apply_channel(channel, c) if channel is not None else ket2dm(c))
    return pgm_from_states(rhos, null_tol)


def pgm_from_states(rhos: Sequence[np.ndarray], null_tol: float = 1e-12) -> DensePovm:
    """Pretty Good Measurement discriminating the (already noisy) states ``rhos``."""
    sigma = sum(rhos)
    try:
        s = psd_sqrt_pinv(sigma, null_tol=null_tol)
    except ValueError as exc:
        raise PovmError(f"PGM average state is not PSD: {exc}") from exc
    elems = tuple(s @ r @ s for r in rhos)
    elems = tuple(0.5 * (E + E.conj().T) for E in elems)
    completion = np.eye(len(sigma)) - s @ sigma @ s
    completion = 0.5 * (completion + completion.conj().T)
    return DensePovm(elems, tuple(range(len(elems))), completion, kind="pretty_good")


def pgm_from_branches(groups: Sequence[np.ndarray], null_tol: float = 1e-12) -> DensePovm:
    """PGM for states given as sums of pure branches, ``rho_i = sum_b |v_ib><v_ib|``.

    ``groups[i]`` has shape ``(branches, dim)``. Working with the SVD of the
    stacked branches ``B = U S W^dag`` gives ``sigma^{-1/2} B = U W^dag``
    directly, so the elements sum to the support projector to machine
    precision even when ``sigma`` is badly conditioned.
    """
    groups = [np.atleast_2d(np.asarray(g, dtype=complex)) for g in groups]
    B = np.concatenate(groups, axis=0).T  # (dim, total branches)
    U, sv, Wh = linalg.svd(B, full_matrices=False)
    keep = sv**2 > null_tol * sv[0] ** 2 if sv.size and sv[0] > 0 else np.zeros(sv.shape, bool)
    A = U[:, keep] @ Wh[keep]
    elems, start = [], 0
    for g in groups:
        Ai = A[:, start:start + len(g)]
        elems.append(Ai @ Ai.conj().T)
        start += len(g)
    Uk = U[:, keep]
    completion = np.eye(B.shape[0]) - Uk @ Uk.conj().T
    return DensePovm(tuple(elems), tuple(range(len(elems))), completion, kind="pretty_good")


def _basis_pair(code: RotationCode, basis: str) -> tuple[np.ndarray, np.ndarray]:
    if basis in ("pm", "+-", "±", "x"):
        return code.plus(), code.minus()
    if basis in ("01", "bit", "z"):
        return code.zero(), code.one()
    raise PovmError(f"unknown basis {basis!r}; use 'pm' or 'bit'")


def ideal_logical_povm(code: RotationCode, basis: str = "pm") -> DensePovm:
    """Projective logical measurement ``{|+><+|, |-><-|, I - P_code}``."""
    u, v = _basis_pair(code, basis)
    P = [ket2dm(u), ket2dm(v)]
    labels = ("+", "-") if basis in ("pm", "+-", "±", "x") else (0, 1)
    return DensePovm(tuple(P), labels, np.eye(code.space.dim) - P[0] - P[1], kind="ideal")


def sector_logical_povm(code: RotationCode, basis: str = "pm") -> DensePovm:
    """Ideal logical measurement extended to every loss residue.

    For each ``r`` in ``0..N-1`` the damaged codewords ``a^r |0_N>`` and
    ``a^r |1_N>`` are normalized; the resulting logical pair is measured
    projectively. Labels are ``(r, outcome)``. With ``r = 0`` alone this is
    ``ideal_logical_povm``.
    """
    N, dim = code.N, code.space.dim
    n = np.arange(dim)
    elems, labels = [], []
    for r in range(min(N, dim)):
        # a^r |n> = sqrt(n!/(n-r)!) |n-r>
        def lower(v, r=r):
            out = np.zeros(dim, dtype=complex)
            m = n[r:]
            out[: dim - r] = v[r:] * np.exp(0.5 * (special.gammaln(m + 1) - special.gammaln(m - r + 1)))
            return out
        z, o = lower(code.zero()), lower(code.one())
        if np.linalg.norm(z) < 1e-12 or np.linalg.norm(o) < 1e-12:
            continue
        z, o = z / np.linalg.norm(z), o / np.linalg.norm(o)
        if basis in ("pm", "+-", "±", "x"):
            pair, tags = [(z + o) / math.sqrt(2), (z - o) / math.sqrt(2)], ("+", "-")
        else:
            pair, tags = [z, o], (0, 1)
        for v, t in zip(pair, tags):
            elems.append(ket2dm(v))
            labels.append((r, t))
    completion = np.eye(dim) - sum(elems)
    return DensePovm(tuple(elems), tuple(labels), completion, kind="sector_ideal")


@dataclass(frozen=True)
class PhaseDecoderConfig:
    """Rounding decoder for a phase outcome.

    ``convention`` is ``"pm"`` (declare ``"+"``/``"-"``) or ``"bit"``
    (declare 0/1 with ``+`` mapped to 0).
    """

    N: int
    bias: float = 0.0
    convention: str = "pm"

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if abs(self.bias) >= np.pi / self.N:
            raise ValueError(f"|bias| must be < pi/N = {np.pi / self.N:.6g}, got {self.bias}")
        if self.convention not in ("pm", "bit"):
            raise ValueError(f"convention must be 'pm' or 'bit', got {self.convention!r}")


def phase_decode(theta: float, config: PhaseDecoderConfig):
    """Round ``theta`` to the nearest ``m pi / N`` and report the parity of ``m``.

    Exact midpoints (within 1e-12) go to the even neighbour.
    """
    x = (theta - config.bias) * config.N / np.pi
    lo = math.floor(x)
    frac = x - lo
    if abs(frac - 0.5) < 1e-12:
        m = lo if lo % 2 == 0 else lo + 1
    else:
        m = lo + (frac > 0.5)
    odd = m % 2 == 1
    if config.convention == "bit":
        return int(odd)
    return "-" if odd else "+"
