"""Error-correction channels for rotation codes with noise-free ancillae.

Two circuits are simulated. ``knill`` teleports the data twice: the data rail
is coupled to a mid rail ``|+_M>`` by a CROT, the mid rail to a fresh output
rail ``|+_L>``, and both the data and mid rails are measured in the
conjugate basis. ``hybrid`` first couples the data to a top rail ``|0_M>``
(number syndrome mod ``N``) and then teleports the data into ``|+_L>``.

The logical channel is reconstructed by tomography: the four logical basis
operators ``|a><b|`` are encoded, sent through the noise Kraus operators and
the circuit, and for every joint outcome ``x`` the conditional Choi matrix
``J_x[(a,o),(b,o')] = <o| E_x(|a><b|) |o'>`` is accumulated from pure Kraus
branches. Two-mode density matrices are never formed: each branch is a
``(dim_A, dim_B)`` array and the binned phase POVMs are contracted through
FFT lag correlations.
"""

from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import fft as sp_fft
from scipy import linalg

from . import __version__
from .channels import KrausChannel, NoiseParams, loss_dephasing_kraus
from .codes import RotationCode, standard_code
from .fock import psd_sqrt_pinv
from .gates import LOGICAL, crot, gate_diagonal
from .measurements import (DensePovm, PhasePovm, Povm, canonical_phase_povm, default_bins,
                           pgm_from_branches, phase_edges, reference_phases,
                           sector_logical_povm)

SCHEMES = ("phase", "pretty_good", "ideal")
FLAVORS = ("knill", "hybrid")
DECODERS = ("max_likelihood",)
DEFAULT_MID_ALPHA = 5.0

PAULI_LABELS = ("I", "Z", "X", "XZ")
PAULIS = (LOGICAL["I"], LOGICAL["Z"], LOGICAL["X"], LOGICAL["X"] @ LOGICAL["Z"])

_PHI = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex)  # sum_a |a>|a>


class EcError(ValueError):
    pass


def default_mid_code(alpha: float = DEFAULT_MID_ALPHA) -> RotationCode:
    """M = 1 cat code used for the noise-free mid (or top) ancilla rail."""
    return standard_code("cat", 1, alpha=alpha)


def default_out_code() -> RotationCode:
    return standard_code("trivial", 1)


@dataclass(frozen=True, eq=False)
class EcConfig:
    """One error-correction experiment.

    Parameters
    ----------
    data_code : RotationCode
        Order-``N`` code carrying the data.
    noise : NoiseParams
        Loss and dephasing applied to the data rail before correction.
    scheme : {"phase", "pretty_good", "ideal"}
        Data-rail measurement: binned canonical phase, the Pretty Good
        Measurement adapted to ``noise``, or the ideal logical measurement
        extended to every loss residue. The ancilla rail is always measured
        with the binned canonical phase POVM.
    flavor : {"knill", "hybrid"}
    decoder : {"max_likelihood"}
    mid_ancilla_code : RotationCode, optional
        Order-``M`` ancilla code (default: M = 1 cat, ``alpha = 5``).
    out_code : RotationCode, optional
        Order-``L`` output code (default: the trivial encoding).
    data_bins, mid_bins : int, optional
        Phase-bin counts; defaults are rounded up to multiples of ``2N``
        and ``2NM`` respectively.
    channel : KrausChannel, optional
        Replaces the loss/dephasing channel built from ``noise`` (used to
        inject deterministic errors). ``trace_preserving`` states whether the
        channel is expected to be trace preserving on the code.
    """

    data_code: RotationCode
    noise: NoiseParams = NoiseParams(0.0, 0.0)
    scheme: str = "pretty_good"
    flavor: str = "knill"
    decoder: str = "max_likelihood"
    mid_ancilla_code: RotationCode | None = None
    out_code: RotationCode | None = None
    data_bins: int | None = None
    mid_bins: int | None = None
    channel: KrausChannel | None = None
    trace_preserving: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise EcError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.flavor not in FLAVORS:
            raise EcError(f"unknown flavor {self.flavor!r}; choose from {FLAVORS}")
        if self.decoder not in DECODERS:
            raise EcError(f"unknown decoder {self.decoder!r}; choose from {DECODERS}")
        object.__setattr__(self, "noise", NoiseParams(*self.noise).validate())
        if self.mid_ancilla_code is None:
            object.__setattr__(self, "mid_ancilla_code", default_mid_code())
        if self.out_code is None:
            object.__setattr__(self, "out_code", default_out_code())
        if self.channel is not None and self.channel.dim != self.data_code.dim:
            raise EcError(f"channel dimension {self.channel.dim} != data code dimension {self.data_code.dim}")
        for name in ("data_bins", "mid_bins"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 2):
                raise EcError(f"{name} must be an integer >= 2, got {v!r}")

    @property
    def N(self) -> int:
        return self.data_code.N

    @property
    def M(self) -> int:
        return self.mid_ancilla_code.N

    @property
    def L(self) -> int:
        return self.out_code.N

    def resolved_data_bins(self) -> int:
        if self.data_bins is not None:
            return int(self.data_bins)
        step = 2 * self.N
        return step * math.ceil(default_bins(self.N) / step)

    def resolved_mid_bins(self) -> int:
        if self.mid_bins is not None:
            return int(self.mid_bins)
        step = 2 * self.N * self.M
        return step * math.ceil(64 / step)

    def echo(self) -> dict:
        """Plain-data summary of the configuration."""
        return {
            "flavor": self.flavor, "scheme": self.scheme, "decoder": self.decoder,
            "data": (self.data_code.family, self.N, self.data_code.params, self.data_code.dim),
            "mid": (self.mid_ancilla_code.family, self.M, self.mid_ancilla_code.params),
            "out": (self.out_code.family, self.L, self.out_code.params),
            "kappa_t": self.noise.kappa_t, "kappa_phi_t": self.noise.kappa_phi_t,
            "data_bins": self.resolved_data_bins(), "mid_bins": self.resolved_mid_bins(),
            "custom_channel": self.channel is not None,
        }

    def cache_key(self) -> str:
        h = hashlib.sha256()
        h.update(f"rotcodes {__version__}\n".encode())
        for k, v in sorted(self.echo().items()):
            h.update(f"{k}={v!r}\n".encode())
        for code in (self.data_code, self.mid_ancilla_code, self.out_code):
            h.update(code.to_record().encode())
        if self.channel is not None:
            for K in self.channel.ops:
                h.update(np.ascontiguousarray(K).tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class LogicalChannelReport:
    """Corrected logical channel and how it was obtained.

    ``logical_process`` is the Choi matrix ``sum_ab |a><b| x E(|a><b|)``
    (trace 2 for a trace-preserving channel), indexed ``(in, out)``.
    ``outcome_stats`` holds, per joint outcome, the probability averaged
    over the logical inputs, the decoded correction index and the normalized
    decoder weights.
    """

    logical_process: np.ndarray
    avg_gate_fidelity: float
    ent_fidelity: float
    outcome_stats: dict
    config: dict
    cache_key: str
    leakage: float = 0.0
    flags: tuple = ()
    history: tuple = ()

    @property
    def infidelity(self) -> float:
        return 1.0 - self.avg_gate_fidelity


# --------------------------------------------------------------------------
# fidelity and Choi helpers

def ent_fidelity(choi: np.ndarray) -> float:
    return float(np.real(_PHI.conj() @ choi @ _PHI)) / 4.0


def avg_from_ent(f_ent: float, d: int = 2) -> float:
    return (d * f_ent + 1.0) / (d + 1.0)


def apply_choi(choi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``E(rho) = tr_in[(rho^T x I) J]`` for a qubit Choi matrix."""
    J = np.asarray(choi).reshape(2, 2, 2, 2)
    return np.einsum("ab,aobp->op", np.asarray(rho), J)


def conjugate_output(choi: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Choi matrix of ``U^dag E(.) U``."""
    W = np.kron(np.eye(2), U.conj().T)
    return W @ choi @ W.conj().T


def choi_checks(choi: np.ndarray) -> tuple[float, float]:
    """Smallest Choi eigenvalue and ``||tr_out J - I||``."""
    w = linalg.eigvalsh(0.5 * (choi + choi.conj().T))
    tr_out = np.einsum("aobo->ab", choi.reshape(2, 2, 2, 2))
    return float(w.min()), float(np.max(np.abs(tr_out - np.eye(2))))


def trivial_baseline(noise: NoiseParams) -> float:
    """Average gate infidelity of the bare ``{|0>, |1>}`` qubit under the noise.

    Loss damps the excited population by ``1 - gamma``, ``gamma = 1 - e^{-kt}``;
    the coherence decays by ``sqrt(1 - gamma) e^{-kpt/2}``. For small ``kt``
    with no dephasing the infidelity is ``kt/3``.
    """
    kt, kpt = NoiseParams(*noise).validate()
    keep = math.exp(-kt)
    f_ent = (1.0 + keep + 2.0 * math.sqrt(keep) * math.exp(-0.5 * kpt)) / 4.0
    return 1.0 - avg_from_ent(f_ent)


def ml_decode(weights: np.ndarray) -> np.ndarray:
    """Most likely correction per outcome.

    ``weights`` has shape ``(..., n_candidates)``; for Paulis the candidate
    order is ``I, Z, X, XZ``. Ties go to the lower index, and an outcome with
    all-zero weight (unreachable) decodes to index 0.
    """
    w = np.asarray(weights, dtype=float)
    if w.size and w.min() < -1e-12:
        raise EcError(f"negative decoder weight {w.min():.3e}")
    return np.argmax(w, axis=-1)


# --------------------------------------------------------------------------
# joint-outcome contraction

def _chunks(n: int, size: int) -> Iterable[slice]:
    for i in range(0, n, size):
        yield slice(i, min(n, i + size))


def joint_outcome_weights(branches: Callable[[slice], np.ndarray], n_branches: int,
                          rail_a: Povm, rail_b: PhasePovm, chunk: int = 8) -> np.ndarray:
    """``T[xa, xb, p, q] = sum_n <Psi_q^n| M_xa x M_xb |Psi_p^n>``.

    ``branches(s)`` returns the pure branches for branch indices in slice
    ``s`` as an array of shape ``(b, P, dim_a, dim_b)``. ``rail_b`` must be
    a phase POVM; ``rail_a`` may be a phase POVM or a dense POVM.
    """
    gb = rail_b.gamma.conj()
    Lb = rail_b.fft_length()
    Wb = rail_b.correlation_weights()
    if isinstance(rail_a, PhasePovm):
        ga = rail_a.gamma.conj()
        La = rail_a.fft_length()
        Wa = rail_a.correlation_weights()
        acc = None
        for s in _chunks(n_branches, chunk):
            psi = branches(s) * ga[:, None] * gb[None, :]
            F = sp_fft.fft2(psi, s=(La, Lb), axes=(-2, -1))
            P = F.shape[1]
            F = F.reshape(F.shape[0], P, -1)
            # S[p, q] = sum_b conj(F_q) F_p
            S = np.einsum("bqx,bpx->pqx", F.conj(), F)
            acc = S if acc is None else acc + S
        P = acc.shape[0]
        C = sp_fft.ifft2(acc.reshape(P, P, La, Lb), axes=(-2, -1))
        T = np.einsum("im,pqmn,jn->ijpq", Wa, C, Wb, optimize=True)
        return T
    if not isinstance(rail_a, DensePovm):
        raise EcError(f"unsupported POVM type {type(rail_a).__name__}")
    factors = rail_a.factors()
    V = np.concatenate(factors, axis=1)
    owner = np.repeat(np.arange(len(factors)), [f.shape[1] for f in factors])
    ind = np.zeros((len(factors), V.shape[1]))
    ind[owner, np.arange(V.shape[1])] = 1.0
    Vh = V.conj().T
    acc = None
    for s in _chunks(n_branches, chunk):
        psi = branches(s) * gb[None, :]
        G = sp_fft.fft(psi, n=Lb, axis=-1)  # (b, P, dim_a, Lb)
        Y = np.einsum("ri,bpim->bprm", Vh, G, optimize=True)
        S = np.einsum("bqrm,bprm->pqrm", Y.conj(), Y)
        acc = S if acc is None else acc + S
    P = acc.shape[0]
    Sj = np.einsum("jr,pqrm->jpqm", ind, acc)
    C = sp_fft.ifft(Sj, axis=-1)
    return np.einsum("jpqm,km->jkpq", C, Wb)


# --------------------------------------------------------------------------
# circuit assembly

_PGM_CACHE: "OrderedDict[str, DensePovm]" = OrderedDict()
_PGM_CACHE_SIZE = 16


def _pgm_for(code: RotationCode, channel: KrausChannel) -> DensePovm:
    h = hashlib.sha256(code.to_record().encode())
    for K in channel.ops:
        h.update(np.ascontiguousarray(K).tobytes())
    key = h.hexdigest()
    if key in _PGM_CACHE:
        _PGM_CACHE.move_to_end(key)
        return _PGM_CACHE[key]
    u = minimal_branches(channel, np.stack([code.plus(), code.minus()]))
    P = pgm_from_branches([u[:, i] for i in range(2)])
    _PGM_CACHE[key] = P
    while len(_PGM_CACHE) > _PGM_CACHE_SIZE:
        _PGM_CACHE.popitem(last=False)
    return P


def noise_channel(config: EcConfig) -> KrausChannel:
    if config.channel is not None:
        return config.channel
    return loss_dephasing_kraus(config.data_code.space, config.noise, compress=True)


def data_povm(config: EcConfig, channel: KrausChannel) -> Povm:
    code = config.data_code
    if config.scheme == "phase":
        return canonical_phase_povm(code.space, code, bins=config.resolved_data_bins())
    if config.scheme == "pretty_good":
        return _pgm_for(code, channel)
    return sector_logical_povm(code, "pm")


def ancilla_povm(config: EcConfig) -> PhasePovm:
    code = config.mid_ancilla_code
    if config.flavor == "knill":
        theta0 = -np.pi / (2 * config.M)
    else:
        theta0 = -np.pi / (2 * config.N * config.M)
    return PhasePovm(reference_phases(code.dim, code),
                     phase_edges(config.resolved_mid_bins(), theta0))


def _output_projections(phase: np.ndarray, out_code: RotationCode) -> np.ndarray:
    """``D_o[n] = sum_l conj(o_l) plus_l e^{i phase[n, l]}`` for ``o = 0, 1``."""
    basis = out_code.basis_matrix()  # (dim_L, 2)
    coeffs = basis.conj() * out_code.plus()[:, None]
    return (phase @ coeffs).T  # (2, dim)


def _logical_rotation(out_code: RotationCode, theta: float) -> np.ndarray:
    """Logical matrix of ``exp(i theta n)`` on the output code, if it preserves it."""
    S = out_code.basis_matrix()
    RS = np.exp(1j * theta * np.arange(out_code.dim))[:, None] * S
    U = S.conj().T @ RS
    if np.max(np.abs(S @ U - RS)) > 1e-12:
        raise EcError("hybrid correction needs an output code on which rotations by "
                      f"pi/(NL) act logically; {out_code.family} L={out_code.N} does not")
    return U


def _candidates(config: EcConfig) -> tuple[list[np.ndarray], list[str]]:
    if config.flavor == "knill":
        return list(PAULIS), list(PAULI_LABELS)
    H, X, Z = LOGICAL["H"], LOGICAL["X"], LOGICAL["Z"]
    mats, labels = [], []
    for r in range(config.N):
        R = _logical_rotation(config.out_code, np.pi * r / (config.N * config.L))
        for c, (C, cname) in enumerate(((H, "H"), (X @ H, "XH"))):
            for z in (0, 1):
                mats.append(R @ np.linalg.matrix_power(Z, z) @ C)
                labels.append(f"R{r}" + ("Z" if z else "") + cname)
    return mats, labels


def minimal_branches(channel: KrausChannel, inputs: np.ndarray, rel_tol: float = 1e-15) -> np.ndarray:
    """Fewest pure branches reproducing the noisy inputs and their coherences.

    Stacks ``K_n |i>`` over inputs ``i`` into vectors on ``(input, mode)`` and
    keeps the singular directions of that stack: the operator
    ``sum_n (K_n|i>)(K_n|j>)^dag`` is reproduced for every ``i, j`` with at
    most ``n_in * dim`` branches instead of one per Kraus operator.
    Singular values with ``s^2 < rel_tol * s_max^2`` are dropped.
    Returns shape ``(branches, n_in, dim)``.
    """
    U = np.stack([inputs @ K.T for K in channel.ops])  # (k, n_in, dim)
    flat = U.reshape(len(U), -1)
    if flat.shape[0] <= flat.shape[1]:
        return U
    _, sv, Vh = linalg.svd(flat, full_matrices=False)
    keep = sv**2 > rel_tol * sv[0] ** 2
    return (sv[keep, None] * Vh[keep]).reshape(-1, *U.shape[1:])


def _branch_builder(config: EcConfig, u_all: np.ndarray):
    """Callable giving branches ``(b, P, dim_a, dim_b)`` with ``p = in * 2 + out``."""
    data, anc, out = config.data_code, config.mid_ancilla_code, config.out_code
    N, M, L = config.N, config.M, config.L
    n_in = u_all.shape[1]
    if config.flavor == "knill":
        C = gate_diagonal(crot(N, M), data.dim, anc.dim)  # (data, mid)
        D = _output_projections(gate_diagonal(crot(M, L), anc.dim, out.dim), out)
        side = anc.plus()[None, :] * D  # (2, mid)

        def build(s: slice) -> np.ndarray:
            u = u_all[s]  # (b, n_in, data)
            psi = u[:, :, None, :, None] * side[None, None, :, None, :] * C
            return psi.reshape(u.shape[0], n_in * 2, data.dim, anc.dim)
        return build

    C = gate_diagonal(crot(N, M), data.dim, anc.dim)  # (data, top)
    D = _output_projections(gate_diagonal(crot(N, L), data.dim, out.dim), out)  # (2, data)
    top = anc.zero()

    def build(s: slice) -> np.ndarray:
        u = u_all[s]
        psi = (u[:, :, None, :] * D[None, None, :, :])[..., None] * (C * top[None, :])
        return psi.reshape(u.shape[0], n_in * 2, data.dim, anc.dim)
    return build


def conditional_outputs(config: EcConfig, inputs: np.ndarray | None = None,
                        channel: KrausChannel | None = None,
                        rail_a: Povm | None = None) -> np.ndarray:
    """Unnormalized logical output blocks for every joint outcome.

    Returns ``T[xa, xb, (i, o), (j, o')]`` where ``i, j`` index the rows of
    ``inputs`` (default: the logical basis ``|0_N>, |1_N>``), so that for
    the default inputs ``T[x]`` is the conditional Choi matrix. Axis ``xa``
    runs over data-rail outcomes and ``xb`` over ancilla-rail bins.
    """
    channel = noise_channel(config) if channel is None else channel
    if inputs is None:
        inputs = config.data_code.basis_matrix().T
    inputs = np.atleast_2d(np.asarray(inputs, dtype=complex))
    rail_a = data_povm(config, channel) if rail_a is None else rail_a
    defect = rail_a.completeness_defect()
    rail_b = ancilla_povm(config)
    defect = max(defect, rail_b.completeness_defect())
    if defect > 1e-6:
        raise EcError(f"POVM completeness defect {defect:.2e} exceeds 1e-6")
    u_all = minimal_branches(channel, inputs)
    return joint_outcome_weights(_branch_builder(config, u_all), len(u_all), rail_a, rail_b)


def _decode_and_assemble(T: np.ndarray, mats: Sequence[np.ndarray]):
    X = T.reshape(-1, 4, 4)
    phis = np.stack([np.kron(np.eye(2), U) @ _PHI for U in mats])  # (c, 4)
    weights = np.real(np.einsum("ci,xij,cj->xc", phis.conj(), X, phis))
    # round-off can push exact zeros slightly negative
    weights = np.where((weights < 0) & (weights > -1e-12), 0.0, weights)
    choice = ml_decode(weights)
    J = np.zeros((4, 4), dtype=complex)
    for c, U in enumerate(mats):
        sel = choice == c
        if np.any(sel):
            J += conjugate_output(X[sel].sum(axis=0), U)
    return J, weights, choice


def _finish(config_echo: dict, key: str, J: np.ndarray, stats: dict,
            check_tp: bool, flags: tuple = (), history: tuple = ()) -> LogicalChannelReport:
    J = 0.5 * (J + J.conj().T)
    lam_min, tp_dev = choi_checks(J)
    if lam_min < -1e-8:
        raise EcError(f"assembled logical process is not completely positive (eigenvalue {lam_min:.2e})")
    tr_out = np.real(np.diag(np.einsum("aobo->ab", J.reshape(2, 2, 2, 2))))
    leakage = float(max(0.0, 1.0 - tr_out.min()))
    if check_tp and tp_dev > 1e-8:
        raise EcError(f"assembled logical process is not trace preserving (deviation {tp_dev:.2e})")
    f_ent = ent_fidelity(J)
    return LogicalChannelReport(J, avg_from_ent(f_ent), f_ent, stats, config_echo, key,
                                leakage, flags, history)


def _ec_channel(config: EcConfig) -> LogicalChannelReport:
    channel = noise_channel(config)
    T = conditional_outputs(config, channel=channel)
    mats, labels = _candidates(config)
    J, weights, choice = _decode_and_assemble(T, mats)
    total = weights.sum(axis=1)
    posteriors = np.divide(weights, total[:, None], out=np.zeros_like(weights),
                           where=total[:, None] > 0)
    probs = np.real(np.einsum("xii->x", T.reshape(-1, 4, 4))) / 2.0
    stats = {"shape": T.shape[:2], "probabilities": probs.reshape(T.shape[:2]),
             "decoded": choice.reshape(T.shape[:2]), "posteriors": posteriors,
             "candidates": tuple(labels)}
    flags = () if config.trace_preserving else ("non_trace_preserving_input",)
    return _finish(config.echo(), config.cache_key(), J, stats, config.trace_preserving, flags)


def telecorrect_channel(config: EcConfig) -> LogicalChannelReport:
    """Logical channel of noise followed by Knill (teleportation) error correction.

    The most likely logical Pauli ``I, Z, X, XZ`` for every joint outcome is
    found from the diagonal weights ``c_ii(x)`` and undone explicitly.
    """
    if config.flavor != "knill":
        config = _replace(config, flavor="knill")
    return _ec_channel(config)


def hybrid_ec_channel(config: EcConfig) -> LogicalChannelReport:
    """Logical channel of noise followed by hybrid Steane/Knill error correction.

    The top rail ``|0_M>`` picks up a rotation ``pi k / NM`` revealing the
    number shift ``k`` mod ``N``; the data is then teleported into the output
    rail, which carries the leftover rotation ``pi k / NL`` and a Clifford
    ``H`` or ``XH``. Decoding picks the most likely combination
    ``R(pi r / NL) Z^z C`` with ``r < N`` and undoes it.
    """
    if config.flavor != "hybrid":
        config = _replace(config, flavor="hybrid")
    return _ec_channel(config)


def run_ec(config: EcConfig) -> LogicalChannelReport:
    return telecorrect_channel(config) if config.flavor == "knill" else hybrid_ec_channel(config)


def _replace(config: EcConfig, **changes) -> EcConfig:
    kw = {f: getattr(config, f) for f in config.__dataclass_fields__}
    kw.update(changes)
    return EcConfig(**kw)


def logical_output(config: EcConfig, report: LogicalChannelReport,
                   bloch: tuple[complex, complex]) -> np.ndarray:
    """Corrected logical output for one specific input, simulated directly.

    The decoder choices recorded in ``report`` are reused; the result should
    match ``apply_choi(report.logical_process, rho_in)``.
    """
    psi = config.data_code.logical_state(*bloch)
    T = conditional_outputs(config, inputs=psi[None, :])  # (xa, xb, 2, 2)
    X = T.reshape(-1, 2, 2)
    mats, _ = _candidates(config)
    choice = np.asarray(report.outcome_stats["decoded"]).ravel()
    rho = np.zeros((2, 2), dtype=complex)
    for c, U in enumerate(mats):
        sel = choice == c
        if np.any(sel):
            rho += U.conj().T @ X[sel].sum(axis=0) @ U
    return rho


# --------------------------------------------------------------------------
# single-error injection

def injected_error_channel(code: RotationCode, op: np.ndarray) -> KrausChannel:
    """A single Kraus operator ``op`` scaled to unit mean norm on the code.

    ``op`` is normalized so that ``tr(S^dag op^dag op S) / 2 = 1``. The result is
    trace preserving on the code only when both codewords have equal
    ``<op^dag op>`` (e.g. loss on binomial codes); for cat codes the
    mismatch is exponentially small in ``alpha^2``.
    """
    S = code.basis_matrix()
    scale = math.sqrt(float(np.real(np.trace(S.conj().T @ op.conj().T @ op @ S))) / 2.0)
    if scale == 0:
        raise EcError("injected operator annihilates the code space")
    K = np.asarray(op, dtype=complex) / scale
    G = S.conj().T @ K.conj().T @ K @ S
    return KrausChannel((K,), ((0, 0),), float(np.linalg.norm(G - np.eye(2), 2)), code.space)


# --------------------------------------------------------------------------
# optimal recovery

def _partial_trace_out(X: np.ndarray, d: int) -> np.ndarray:
    return np.einsum("aiaj->ij", X.reshape(2, d, 2, d))


def _fill_null(X: np.ndarray, d: int) -> np.ndarray:
    """Add ``|0><0| x (I - tr_out X)`` so that the recovery is trace preserving."""
    Q = np.eye(d) - _partial_trace_out(X, d)
    Q = 0.5 * (Q + Q.conj().T)
    out = X.copy()
    out[:d, :d] += Q
    return out


def optimal_recovery(code: RotationCode, noise: NoiseParams, *, channel: KrausChannel | None = None,
                     max_iter: int = 500, tol: float = 1e-10, null_tol: float = 1e-10
                     ) -> LogicalChannelReport:
    """Channel-adapted recovery by monotone iterative ascent.

    The recovery Choi matrix ``X`` (indexed ``(out, in)``, ``tr_out X = I``)
    maximizes ``F_ent = tr(X B) / 4`` with ``B = sum_k vec(E_k^dag) vec(E_k^dag)^dag``,
    ``E_k = A_k S``. Iteration starts from the transpose (Petz) recovery.
    Each step tries the fixed-point update
    ``X <- (I x rho^{-1/2}) X B X (I x rho^{-1/2})``, ``rho = tr_out(X B X)``,
    and keeps it if the fidelity does not drop. Otherwise it takes a
    linearized step: with the recovery written as an isometry ``W`` (stacked
    Kraus operators), ``W`` is replaced by the polar factor of the gradient
    ``B W``. The objective is convex in ``W``, so this step never lowers the
    fidelity. Iteration stops when the gain drops below ``tol`` or after
    ``max_iter`` steps. The result is flagged ``lower_bound_on_optimal``
    since ascent is not a certificate of optimality.
    """
    noise = NoiseParams(*noise).validate()
    if channel is None:
        channel = loss_dephasing_kraus(code.space, noise, compress=True)
    if code.dim > 64:
        raise EcError(f"optimal recovery limited to dim <= 64, got {code.dim}")
    d = code.dim
    S = code.basis_matrix()
    E = np.stack([K @ S for K in channel.ops])  # (k, d, 2)
    ev = E.conj().transpose(0, 2, 1).reshape(len(E), 2 * d)  # vec(E_k^dag), (o, i) order
    B = ev.T @ ev.conj()

    sigma = np.einsum("kia,kja->ij", E, E.conj())
    s = psd_sqrt_pinv(sigma)
    R = E.conj().transpose(0, 2, 1) @ s  # (k, 2, d)
    rv = R.reshape(len(R), 2 * d)
    X = _fill_null(rv.T @ rv.conj(), d)

    def fid(X):
        return float(np.real(np.sum(X * B.T))) / 4.0

    def kraus_rows(X):
        # rows vec(R_j), padded to 2d operators so W is (4d, d)
        w, v = linalg.eigh(0.5 * (X + X.conj().T))
        rows = (v * np.sqrt(np.clip(w, 0, None))).T
        return rows[::-1]

    def polar_step(X):
        G = (kraus_rows(X) @ B.T).reshape(2 * d, 2, d).reshape(4 * d, d)
        U, _, Vh = linalg.svd(G, full_matrices=False)
        W = (U @ Vh).reshape(2 * d, 2 * d)
        return W.T @ W.conj()

    history = [fid(X)]
    steps = []
    converged = False
    for _ in range(max_iter):
        Y = X @ B @ X
        Y = 0.5 * (Y + Y.conj().T)
        s = psd_sqrt_pinv(_partial_trace_out(Y, d), null_tol=null_tol, herm_tol=1e-8)
        Is = np.kron(np.eye(2), s)
        cand = Is @ Y @ Is
        # s is large on weakly populated directions; drop the round-off skew part
        cand = _fill_null(0.5 * (cand + cand.conj().T), d)
        kind = "fixed_point"
        if fid(cand) < history[-1]:
            cand, kind = polar_step(X), "polar"
        dev = float(np.max(np.abs(_partial_trace_out(cand, d) - np.eye(d))))
        if dev > 1e-9:
            raise EcError(f"recovery iterate not trace preserving (deviation {dev:.2e})")
        f = fid(cand)
        if f < history[-1]:
            # neither update improves beyond round-off: X is a fixed point
            history.append(history[-1])
            steps.append("stationary")
            converged = True
            break
        X = cand
        history.append(f)
        steps.append(kind)
        if f - history[-2] < tol:
            converged = True
            break
    best_X = X

    w, v = linalg.eigh(0.5 * (best_X + best_X.conj().T))
    keep = w > 1e-14 * max(w.max(), 1.0)
    Rk = (v[:, keep] * np.sqrt(w[keep])).T.reshape(-1, 2, d)
    composite = np.einsum("roi,kia->rkoa", Rk, E).reshape(-1, 2, 2)
    # J[(a,o),(b,o')] = sum K[o,a] conj(K[o',b])
    J = np.einsum("koa,kpb->aobp", composite, composite.conj()).reshape(4, 4)
    flags = ("lower_bound_on_optimal",) + (() if converged else ("not_converged",))
    echo = {"flavor": "optimal", "data": (code.family, code.N, code.params, code.dim),
            "kappa_t": noise.kappa_t, "kappa_phi_t": noise.kappa_phi_t}
    h = hashlib.sha256(f"optimal {__version__}\n{echo!r}\n{code.to_record()}".encode())
    stats = {"iterations": len(history) - 1, "steps": tuple(steps)}
    return _finish(echo, h.hexdigest(), J, stats, True, flags, tuple(history))


# --------------------------------------------------------------------------
# grids and break-even

def nbar_grid(family: str, N: int, nbar_max: float, *, alpha_step: float = 0.25,
              nbar_min: float = 0.0) -> list[RotationCode]:
    """Codes of ``family`` along its discrete parameter grid with ``nbar <= nbar_max``.

    Binomial codes step ``K``, Pegg-Barnett codes step ``s`` over multiples of
    ``N``, cat codes step ``alpha`` by ``alpha_step``.
    """
    out: list[RotationCode] = []
    if family == "binomial":
        K = 1
        while N * K / 2 <= nbar_max + 1e-12:
            out.append(standard_code("binomial", N, K=K))
            K += 1
    elif family == "pegg_barnett":
        q = 2
        while True:
            c = standard_code("pegg_barnett", N, s=q * N)
            if c.nbar > nbar_max + 1e-12:
                break
            out.append(c)
            q += 1
    elif family == "cat":
        k = 1
        while True:
            a = k * alpha_step
            c = standard_code("cat", N, alpha=a)
            if c.nbar > nbar_max + 1e-12 and a * a > nbar_max:
                break
            if c.nbar <= nbar_max + 1e-12:
                out.append(c)
            k += 1
    else:
        raise EcError(f"no parameter grid for family {family!r}")
    return [c for c in out if c.nbar >= nbar_min]


def best_infidelity(codes: Sequence[RotationCode], noise: NoiseParams, scheme: str = "pretty_good",
                    flavor: str = "knill", **config_kw) -> tuple[float, RotationCode]:
    """Smallest infidelity over ``codes`` and the code achieving it."""
    best = (math.inf, None)
    for code in codes:
        r = run_ec(EcConfig(code, noise, scheme, flavor, **config_kw))
        if r.infidelity < best[0]:
            best = (r.infidelity, code)
    return best


def break_even_threshold(family: str, N: int, scheme: str = "pretty_good", *,
                         bounds: tuple[float, float] = (3e-3, 0.15), nbar_max: float | None = None,
                         rel_tol: float = 0.05, dephasing_ratio: float = 1.0,
                         flavor: str = "knill", evaluate: Callable[[float], float] | None = None
                         ) -> float:
    """Noise strength ``kt`` at which corrected and bare infidelities cross.

    With ``kpt = dephasing_ratio * kt``, bisects (geometrically) on
    ``min_nbar infidelity(kt) - trivial_baseline(kt)`` where the minimum runs
    over the family's parameter grid up to ``nbar_max`` and is re-taken at
    every ``kt``. ``nbar_max`` defaults to ``6 N``: larger N needs larger
    codes before loss errors become distinguishable. Returns the geometric
    midpoint of a bracket whose ratio is below ``1 + rel_tol``.
    """
    lo, hi = map(float, bounds)
    if not 0 < lo < hi:
        raise EcError(f"invalid bounds {bounds!r}")
    if evaluate is None:
        codes = nbar_grid(family, N, 6.0 * N if nbar_max is None else nbar_max)

        def evaluate(kt):
            noise = NoiseParams(kt, dephasing_ratio * kt)
            return best_infidelity(codes, noise, scheme, flavor)[0]

    def gap(kt):
        return evaluate(kt) - trivial_baseline(NoiseParams(kt, dephasing_ratio * kt))

    g_lo, g_hi = gap(lo), gap(hi)
    if not (g_lo < 0 < g_hi):
        raise EcError(f"no break-even crossing in [{lo}, {hi}]: gaps {g_lo:.3e}, {g_hi:.3e}")
    while hi / lo > 1 + rel_tol:
        mid = math.sqrt(lo * hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)
