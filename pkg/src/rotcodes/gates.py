"""Diagonal gate set, number-shift/rotation errors, and teleported gates.

Every gate here is diagonal in the (one- or two-mode) Fock basis and is
applied as an elementwise phase mask. Two-mode states are amplitude arrays
of shape ``(dim_a, dim_b)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from .codes import RotationCode, logical_state, rotation_projector
from .fock import ModeSpace, ket2dm
from .measurements import (DensePovm, Povm, PhaseDecoderConfig,
                           canonical_phase_povm, ideal_logical_povm, phase_decode)

SINGLE_MODE = ("Z", "S", "T", "rotation")
TWO_MODE = ("crot", "controlled_R")


class GateError(ValueError):
    pass


@dataclass(frozen=True)
class GateSpec:
    """A diagonal gate.

    ``kind`` is one of ``Z`` (``e^{i pi n/N}``), ``S`` (``e^{i pi n^2/2N^2}``),
    ``T`` (``e^{i pi n^4/4N^4}``), ``rotation`` (``e^{i theta n}``),
    ``crot`` (``e^{i pi n x n / NM}``) or ``controlled_R``
    (``e^{i 2 pi n x n / NM}``).
    """

    kind: str
    N: int = 1
    M: int = 1
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in SINGLE_MODE + TWO_MODE:
            raise GateError(f"unknown gate kind {self.kind!r}")
        if self.N < 1 or self.M < 1:
            raise GateError("gate orders must be >= 1")

    @property
    def two_mode(self) -> bool:
        return self.kind in TWO_MODE

    def rational_phase(self) -> tuple[tuple[int, ...], int] | None:
        """``(coeffs, D)`` with phase ``pi * sum_p coeffs[p] x^p / D``; ``None`` for ``rotation``.

        For two-mode gates ``x = n * m``.
        """
        N, M = self.N, self.M
        if self.kind == "Z":
            return (0, 1), N
        if self.kind == "S":
            return (0, 0, 1), 2 * N * N
        if self.kind == "T":
            return (0, 0, 0, 0, 1), 4 * N**4
        if self.kind == "crot":
            return (0, 1), N * M
        if self.kind == "controlled_R":
            return (0, 2), N * M
        return None

    def phase_exponent(self, n: np.ndarray, m: np.ndarray | None = None) -> np.ndarray:
        """Real ``phi`` in ``[0, 2 pi)`` with gate ``= exp(i phi)`` on Fock labels.

        Rational phases are reduced modulo ``2 pi`` in integer arithmetic
        first, so large Fock labels lose no precision.
        """
        n = np.asarray(n, dtype=np.int64)
        if self.kind == "rotation":
            return self.theta * n.astype(float)
        x = np.multiply.outer(n, np.asarray(m, dtype=np.int64)) if self.two_mode else n
        coeffs, D = self.rational_phase()
        return rational_angle(coeffs, D, x)


def rational_angle(coeffs, D: int, x: np.ndarray) -> np.ndarray:
    """``pi * P(x) / D`` reduced to ``[0, 2 pi)`` with exact integer arithmetic."""
    x = np.asarray(x, dtype=np.int64) % (2 * D)
    num = np.zeros_like(x)
    for c in reversed(coeffs):  # Horner, reduced at every step
        num = (num * x + int(c)) % (2 * D)
    return np.pi * num.astype(float) / D


def gate_diagonal(spec: GateSpec, dim: int, dim_b: int | None = None) -> np.ndarray:
    """Phase mask: a length-``dim`` vector, or ``(dim, dim_b)`` for two-mode gates."""
    n = np.arange(dim)
    if spec.two_mode:
        if dim_b is None:
            raise GateError(f"{spec.kind} needs both mode dimensions")
        return np.exp(1j * spec.phase_exponent(n, np.arange(dim_b)))
    return np.exp(1j * spec.phase_exponent(n))


def crot(N: int, M: int) -> GateSpec:
    return GateSpec("crot", N, M)


def apply_gate(spec: GateSpec, state: np.ndarray) -> np.ndarray:
    """Apply a diagonal gate.

    Single-mode gates accept a vector or a density matrix; two-mode gates
    accept a ``(dim_a, dim_b)`` amplitude array.
    """
    state = np.asarray(state)
    if spec.two_mode:
        if state.ndim != 2:
            raise GateError(f"{spec.kind} acts on a (dim_a, dim_b) amplitude array, got shape {state.shape}")
        return gate_diagonal(spec, *state.shape) * state
    g = gate_diagonal(spec, state.shape[0])
    if state.ndim == 1:
        return g * state
    if state.shape[0] != state.shape[1]:
        raise GateError(f"density matrix must be square, got {state.shape}")
    return g[:, None] * state * g.conj()[None, :]


@dataclass(frozen=True)
class ErrorOp:
    """``E_k(theta)``: ``e^{i theta n} a^{|k|}`` for ``k < 0``, ``(a^dag)^k e^{i theta n}`` otherwise."""

    k: int
    theta: float = 0.0


def _shift_coefficients(k: int, dim: int) -> np.ndarray:
    """``c_m`` with ``a^{|k|}|m> = c_m |m-|k|>`` (k<0) or ``(a^dag)^k |m> = c_m |m+k>``."""
    m = np.arange(dim)
    j = abs(k)
    c = np.zeros(dim)
    if k < 0:
        ok = m >= j
        c[ok] = np.exp(0.5 * (special.gammaln(m[ok] + 1) - special.gammaln(m[ok] - j + 1)))
    else:
        ok = m + j < dim
        c[ok] = np.exp(0.5 * (special.gammaln(m[ok] + j + 1) - special.gammaln(m[ok] + 1)))
    return c


def error_op(spec: ErrorOp, space: ModeSpace | int) -> np.ndarray:
    """Dense matrix of ``E_k(theta)`` on a truncated mode."""
    dim = space.dim if isinstance(space, ModeSpace) else int(space)
    if abs(spec.k) >= dim:
        raise GateError(f"|k| = {abs(spec.k)} not realizable at dim {dim}")
    c = _shift_coefficients(spec.k, dim)
    rot = np.exp(1j * spec.theta * np.arange(dim))
    E = np.zeros((dim, dim), dtype=complex)
    m = np.nonzero(c)[0]
    E[m + spec.k, m] = c[m]
    if spec.k < 0:
        return rot[:, None] * E
    return E * rot[None, :]


def apply_error(spec: ErrorOp, state: np.ndarray, axis: int = 0) -> np.ndarray:
    """Apply ``E_k(theta)`` along ``axis`` of an amplitude array without a dense matrix."""
    x = np.moveaxis(np.asarray(state, dtype=complex), axis, 0)
    dim = x.shape[0]
    c = _shift_coefficients(spec.k, dim)
    rot = np.exp(1j * spec.theta * np.arange(dim)).reshape((dim,) + (1,) * (x.ndim - 1))
    c = c.reshape(rot.shape)
    out = np.zeros_like(x)
    k = spec.k
    if k < 0:
        j = -k
        out[: dim - j] = (c * x)[j:]
        out = rot * out
    else:
        out[k:] = (c * rot * x)[: dim - k]
    return np.moveaxis(out, 0, axis)


class PropagatedError(NamedTuple):
    """``G E_k(theta) = E' G`` with ``E' = exp(i pi P(n) / D) E_k(theta) R_partner``.

    ``poly`` holds integer coefficients of ``P`` (constant first). The
    ``P(n)`` factor acts on the output side of ``E_k`` for ``k < 0`` and on
    the input side for ``k >= 0``. Its constant term is a global phase, the
    linear term a rotation, and cubic/quadratic terms the nonlinear rotation
    error. ``partner`` is ``(num, den)``: a rotation ``pi num / den`` on the
    other mode of a two-mode gate. ``const_phase`` carries the float phase
    of an arbitrary-angle ``rotation`` gate.
    """

    k: int
    theta: float
    poly: tuple[int, ...] = (0,)
    denom: int = 1
    partner: tuple[int, int] = (0, 1)
    const_phase: float = 0.0

    @property
    def phase(self) -> complex:
        return np.exp(1j * (np.pi * self.poly[0] / self.denom + self.const_phase))

    @property
    def theta_out(self) -> float:
        """Rotation angle of the propagated ``E_k``."""
        lin = self.poly[1] if len(self.poly) > 1 else 0
        return self.theta + np.pi * lin / self.denom

    @property
    def nonlinear(self) -> tuple[float, float]:
        """Coefficients ``(c3, c2)`` of the nonlinear phase ``exp(i(c3 n^3 + c2 n^2))``."""
        p = tuple(self.poly) + (0,) * (4 - len(self.poly))
        return np.pi * p[3] / self.denom, np.pi * p[2] / self.denom

    @property
    def partner_theta(self) -> float:
        return np.pi * self.partner[0] / self.partner[1]


def propagated_error(gate: GateSpec, error: ErrorOp) -> PropagatedError:
    """Exact error after commuting ``E_k(theta)`` (on the first mode) through ``gate``.

    Pure rotations commute with every gate. A shift by ``k`` through
    ``e^{i phi(n)}`` picks up ``phi(n) - phi(n + |k|)`` on the output side
    (``k < 0``) or ``phi(n + k) - phi(n)`` on the input side (``k >= 0``);
    expanding the polynomial gives the phase, rotation and nonlinear terms.
    For ``|k| = 1`` the ``T`` case reduces to
    ``F = exp(i k pi (4 n^3 + 6 n^2) / 4N^4)`` with rotation ``k pi / N^4``.
    """
    k, th = error.k, error.theta
    s = 1 if k >= 0 else -1
    N, M = gate.N, gate.M
    if gate.kind == "Z":
        return PropagatedError(k, th, (k,), N)
    if gate.kind == "rotation":
        return PropagatedError(k, th, const_phase=gate.theta * k)
    if gate.kind == "S":
        return PropagatedError(k, th, (s * k * k, 2 * k), 2 * N * N)
    if gate.kind == "T":
        return PropagatedError(k, th, (s * k**4, 4 * k**3, 6 * s * k * k, 4 * k), 4 * N**4)
    if gate.kind == "crot":
        return PropagatedError(k, th, partner=(k, N * M))
    if gate.kind == "controlled_R":
        return PropagatedError(k, th, partner=(2 * k, N * M))
    raise GateError(f"unsupported gate kind {gate.kind!r}")


def _apply_propagated(p: PropagatedError, x: np.ndarray, include_nonlinear: bool) -> np.ndarray:
    dim = x.shape[0]
    n = np.arange(dim)
    poly = list(p.poly) + [0] * (4 - len(p.poly))
    if not include_nonlinear:
        poly[2] = poly[3] = 0
    F = np.exp(1j * (rational_angle(poly, p.denom, n) + p.const_phase))
    F = F.reshape((dim,) + (1,) * (x.ndim - 1))
    if p.k >= 0:
        x = F * x
    x = apply_error(ErrorOp(p.k, p.theta), x, axis=0)
    if p.k < 0:
        x = F * x
    if x.ndim == 2 and p.partner[0]:
        x = x * np.exp(1j * rational_angle((0,) + (p.partner[0],), p.partner[1], np.arange(x.shape[1])))[None, :]
    return x


def propagation_residual(gate: GateSpec, error: ErrorOp, dim: int = 48, dim_b: int | None = None,
                         include_nonlinear: bool = True) -> float:
    """Operator norm of ``G E - E' G`` below the truncation light cone.

    Both sides map each Fock state ``|m(, n)>`` to a multiple of
    ``|m + k(, n)>``, so the difference is a monomial matrix whose operator
    norm is its largest entry. Rows and columns within ``|k|`` of the
    cutoff are excluded.
    """
    if abs(error.k) >= dim:
        raise GateError(f"|k| = {abs(error.k)} not realizable at dim {dim}")
    p = propagated_error(gate, error)
    shape = (dim, dim_b or dim) if gate.two_mode else (dim,)
    ones = np.ones(shape, dtype=complex)  # every basis state at once; shifts are injective
    lhs = apply_gate(gate, apply_error(error, ones, axis=0))
    rhs = _apply_propagated(p, apply_gate(gate, ones), include_nonlinear)
    j = abs(error.k)
    keep = dim - j
    # light cone: output rows m + k and input rows m must both stay below dim - |k|
    lo = max(0, error.k)
    hi = keep + min(0, error.k)
    diff = (lhs - rhs)[lo:hi]
    return float(np.max(np.abs(diff))) if diff.size else 0.0


# --- teleported gates -------------------------------------------------------

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.diag([1, -1]).astype(complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_S = np.diag([1, 1j])
_T = np.diag([1, np.exp(1j * np.pi / 4)])
LOGICAL = {"I": np.eye(2, dtype=complex), "X": _X, "Z": _Z, "H": _H, "S": _S, "T": _T}


def _ancilla_bloch(kind: str) -> tuple[complex, complex]:
    if kind == "H":
        return (1 / math.sqrt(2), 1 / math.sqrt(2))
    if kind == "T":
        return (1 / math.sqrt(2), np.exp(1j * np.pi / 4) / math.sqrt(2))
    if kind == "S":
        return (1 / math.sqrt(2), 1j / math.sqrt(2))
    raise GateError(f"teleport kind must be H, T or S, got {kind!r}")


def _frame(kind: str, bits: tuple[int, ...]) -> tuple[np.ndarray, str]:
    """Logical map ``U`` (output = ``U psi``) for the recorded outcome bits."""
    if kind == "H":
        (i,) = bits
        return np.linalg.matrix_power(_X, i) @ _H, "X" * i + "H"
    # H-prefixed circuits: last bit is the CROT-teleport outcome
    pre = np.eye(2, dtype=complex)
    label = ""
    if len(bits) == 2:
        # teleported H stage left X^{i1} H psi; the second stage's own H gives Z^{i1}
        pre = np.linalg.matrix_power(_Z, bits[0])
        label = "Z" * bits[0]
    i = bits[-1]
    U = LOGICAL[kind] @ np.linalg.matrix_power(_X, i) @ pre
    return U, kind + "X" * i + label


def _correction(kind: str, U: np.ndarray) -> tuple[np.ndarray, str]:
    """Logical correction ``C`` with ``C U`` equal to the target gate up to phase."""
    target = _H if kind == "H" else LOGICAL[kind]
    C = target @ np.linalg.inv(U)
    for name, P in (("I", np.eye(2)), ("X", _X), ("Z", _Z), ("XZ", _X @ _Z),
                    ("XS^dag", _X @ _S.conj().T), ("XZS^dag", _X @ _Z @ _S.conj().T),
                    ("S^dag", _S.conj().T), ("ZS^dag", _Z @ _S.conj().T)):
        ov = np.trace(P.conj().T @ C) / 2
        if abs(abs(ov) - 1) < 1e-12:
            return C, name
    return C, "U"


class TeleportResult(NamedTuple):
    """Outcome-resolved output of a teleported gate.

    ``states[i]`` is the normalized density matrix on the output mode for
    outcome record ``outcomes[i]``; ``frames[i]`` is the logical map the
    circuit applied to the input (output ``= frames[i] psi``) and
    ``corrections[i]`` the correction that turns it into the target gate.
    Corrections are reported, never applied.
    """

    outcomes: tuple
    probabilities: np.ndarray
    states: tuple
    frames: tuple
    corrections: tuple
    correction_labels: tuple


def _measure_and_decode(measurement, code: RotationCode):
    """POVM on the measured rail plus a map from outcome index to bit."""
    if measurement in (None, "ideal"):
        P = ideal_logical_povm(code, "pm")
        return P, lambda j: {0: 0, 1: 1}.get(j)
    if measurement in ("phase", "canonical"):
        P = canonical_phase_povm(code.space, code)
        cfg = PhaseDecoderConfig(code.N, convention="bit")
        labels = P.labels
        return P, lambda j: phase_decode(labels[j] % (2 * np.pi), cfg)
    if isinstance(measurement, Povm):
        return measurement, lambda j: {0: 0, 1: 1}.get(j)
    raise GateError(f"unknown measurement {measurement!r}")


def _one_bit_teleport(psi: np.ndarray, data_code: RotationCode, ancilla: np.ndarray,
                      out_code: RotationCode, measurement) -> dict[int, np.ndarray]:
    """CROT then X-basis measurement of the data rail; returns unnormalized output states per bit.

    ``psi`` and ``ancilla`` are vectors; output states are density matrices.
    """
    P, decode = _measure_and_decode(measurement, data_code)
    phi = apply_gate(crot(data_code.N, out_code.N), np.multiply.outer(psi, ancilla))
    out: dict[int, np.ndarray] = {}
    if isinstance(P, DensePovm):
        Es = P.elements()
        for j, E in enumerate(Es):
            bit = decode(j) if j < len(P.labels) else None
            if bit is None:
                continue
            rho = phi.T @ E.T @ phi.conj()  # tr_data[(E x I)|phi><phi|]
            out[bit] = out.get(bit, 0) + rho
    else:
        for j in range(P.n_bins):
            bit = decode(j)
            rho = phi.T @ P.element(j).T @ phi.conj()
            out[bit] = out.get(bit, 0) + rho
    return out


def teleport_gate(kind: str, psi: np.ndarray, data_code: RotationCode, ancilla_code: RotationCode,
                  measurement="ideal", h_mode: str = "teleport", min_probability: float = 1e-14
                  ) -> TeleportResult:
    """Gate teleportation of ``H``, ``T`` or ``S`` from ``data_code`` into ``ancilla_code``.

    ``H`` uses an ancilla ``|+_M>``. ``T`` and ``S`` first apply a logical
    ``H`` to the input, then teleport with ``|T_M>`` or ``|+i_M>``. With
    ``h_mode="teleport"`` that ``H`` is itself a one-bit teleportation into
    ``ancilla_code`` (two outcome bits recorded); ``h_mode="oracle"``
    applies the exact logical Hadamard instead.

    ``measurement`` is ``"ideal"``, ``"phase"`` (binned canonical phase with
    rounding decoder) or a two-outcome ``Povm`` on the data code space.
    """
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise GateError("teleport_gate takes a pure input vector")
    plus_anc = ancilla_code.plus()
    if kind == "H":
        stages = {(): (psi, data_code)}
    else:
        if h_mode == "oracle":
            basis = data_code.basis_matrix()
            coeffs = basis.conj().T @ psi
            stages = {(): (basis @ (_H @ coeffs), data_code)}
        elif h_mode == "teleport":
            first = _one_bit_teleport(psi, data_code, plus_anc, ancilla_code, measurement)
            stages = {}
            for bit, rho in first.items():
                p = float(np.real(np.trace(rho)))
                if p < min_probability:
                    continue
                w, v = np.linalg.eigh(rho / p)
                # ideal measurement leaves a pure state; otherwise carry the mixture
                stages[(bit,)] = ([(float(wi), v[:, i]) for i, wi in enumerate(w) if wi > 1e-15],
                                  ancilla_code, p)
        else:
            raise GateError(f"h_mode must be 'teleport' or 'oracle', got {h_mode!r}")

    anc = logical_state(ancilla_code, _ancilla_bloch(kind))
    outcomes, probs, states, frames, corrs, labels = [], [], [], [], [], []
    for prefix, stage in stages.items():
        if len(stage) == 2:
            mixture, in_code, p0 = [(1.0, stage[0])], stage[1], 1.0
        else:
            mixture, in_code, p0 = stage
        acc: dict[int, np.ndarray] = {}
        for w, vec in mixture:
            for bit, rho in _one_bit_teleport(vec, in_code, anc, ancilla_code, measurement).items():
                acc[bit] = acc.get(bit, 0) + w * rho
        for bit in sorted(acc):
            rho = acc[bit]
            p = p0 * float(np.real(np.trace(rho)))
            if p < min_probability:
                continue
            rec = prefix + (bit,)
            U, frame_label = _frame(kind, rec)
            C, c_label = _correction(kind, U)
            outcomes.append(rec)
            probs.append(p)
            states.append(rho / np.real(np.trace(rho)))
            frames.append(U)
            corrs.append(C)
            labels.append(c_label)
    if not outcomes:
        raise GateError("all teleportation outcomes below min_probability")
    return TeleportResult(tuple(outcomes), np.array(probs), tuple(states), tuple(frames),
                          tuple(corrs), tuple(labels))


def logical_fidelity(code: RotationCode, rho: np.ndarray, target: np.ndarray) -> float:
    """``<target| rho |target>`` for a logical 2-vector encoded in ``code``."""
    v = code.basis_matrix() @ np.asarray(target, dtype=complex)
    return float(np.real(v.conj() @ rho @ v))


# --- modular number measurement ---------------------------------------------

class ModularResult(NamedTuple):
    """Distribution over ``l = n mod N`` and the normalized data states for each ``l``."""

    probabilities: np.ndarray
    states: tuple


def modular_number_measure(psi: np.ndarray, N: int, ancilla_code: RotationCode | None = None,
                           measurement="ideal", bins: int | None = None) -> ModularResult:
    """Non-destructive measurement of ``n mod N``.

    ``measurement="ideal"`` projects with ``Pi^l_N``. ``"phase"`` runs the
    controlled-``R_N`` gate ``e^{i 2 pi n x n / NM}`` against ``|+_M>``, measures
    the ancilla phase in bins, and decodes ``l = round(theta N M / 2 pi) mod N``.
    Conditional data states are density matrices.
    """
    psi = np.asarray(psi, dtype=complex)
    dim = psi.shape[0]
    probs = np.zeros(N)
    states: list = [None] * N
    if measurement == "ideal":
        for ell in range(N):
            v = rotation_projector(dim, N, ell) * psi
            p = float(np.vdot(v, v).real)
            probs[ell] = p
            states[ell] = ket2dm(v) / p if p > 0 else None
        return ModularResult(probs, tuple(states))
    if measurement != "phase" or ancilla_code is None:
        raise GateError("phase modular measurement needs an ancilla code")
    M = ancilla_code.N
    anc = ancilla_code.plus()
    if bins is None:
        # odd multiple of NM: decision boundaries fall on bin edges, grid angles mid-bin
        bins = N * M * (2 * max(1, math.ceil(32 / (N * M))) + 1)
    P = canonical_phase_povm(ancilla_code.space, ancilla_code, bins=bins, theta0=-np.pi / (N * M))
    phi = apply_gate(GateSpec("controlled_R", N, M), np.multiply.outer(psi, anc))
    acc = [np.zeros((dim, dim), dtype=complex) for _ in range(N)]
    for j, theta in enumerate(P.labels):
        ell = int(round(theta * N * M / (2 * np.pi))) % N
        acc[ell] += phi @ P.element(j).T @ phi.conj().T  # tr_anc[(I x M_j)|phi><phi|]
    for ell in range(N):
        p = float(np.real(np.trace(acc[ell])))
        probs[ell] = p
        states[ell] = acc[ell] / p if p > 1e-300 else None
    return ModularResult(probs, tuple(states))


def controlled_rotation_with_ancilla_loss(state: np.ndarray, N: int, M: int, tau: float) -> np.ndarray:
    """``C(1 - tau) a_anc C(tau)``: one ancilla loss at fraction ``tau`` of the controlled-``R_N`` gate.

    ``C(t) = exp(i t 2 pi n x n / NM)`` acting on a ``(data, ancilla)`` array.
    This equals a data rotation by ``tau 2 pi / NM`` after the full gate
    applied to the state with the loss moved before the gate.
    """
    g = 2 * np.pi / (N * M)
    d1, d2 = state.shape
    nn = np.multiply.outer(np.arange(d1), np.arange(d2)).astype(float)
    x = np.exp(1j * tau * g * nn) * state
    x = apply_error(ErrorOp(-1), x, axis=1)
    return np.exp(1j * (1 - tau) * g * nn) * x
