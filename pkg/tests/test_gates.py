import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rotcodes.codes import standard_code
from rotcodes.fock import coherent_amplitudes, ket2dm, rotation_diag
from rotcodes.gates import (LOGICAL, ErrorOp, GateError, GateSpec, apply_error, apply_gate,
                            controlled_rotation_with_ancilla_loss, crot, error_op, gate_diagonal,
                            logical_fidelity, modular_number_measure, propagated_error,
                            propagation_residual, teleport_gate)


@pytest.mark.parametrize("kind", ["Z", "S", "T"])
@pytest.mark.parametrize("N", [1, 2, 3, 4])
@pytest.mark.parametrize("k", range(-3, 4))
@pytest.mark.parametrize("theta", [0.0, 0.3])
def test_single_mode_propagation(kind, N, k, theta):
    assert propagation_residual(GateSpec(kind, N), ErrorOp(k, theta), dim=48) <= 1e-12


@pytest.mark.parametrize("kind", ["crot", "controlled_R"])
@pytest.mark.parametrize("N", [1, 2, 3, 4])
@pytest.mark.parametrize("M", [1, 2, 3, 4])
@pytest.mark.parametrize("k", [-3, -1, 0, 2])
def test_two_mode_propagation(kind, N, M, k):
    assert propagation_residual(GateSpec(kind, N, M), ErrorOp(k, 0.3), dim=48) <= 1e-12


def test_t_gate_needs_nonlinear_term():
    g, e = GateSpec("T", 2), ErrorOp(-1, 0.0)
    assert propagation_residual(g, e, dim=32) <= 1e-12
    assert propagation_residual(g, e, dim=32, include_nonlinear=False) >= 0.1


def test_propagated_error_parameters():
    N = 3
    p = propagated_error(GateSpec("Z", N), ErrorOp(-1, 0.2))
    assert abs(p.phase - np.exp(-1j * np.pi / N)) < 1e-15
    s = propagated_error(GateSpec("S", N), ErrorOp(-1, 0.0))
    assert abs(s.theta_out + np.pi / N**2) < 1e-15
    c = propagated_error(crot(2, 3), ErrorOp(-1))
    assert abs(c.partner_theta + np.pi / 6) < 1e-15


def test_gates_on_codewords():
    code = standard_code("cat", 2, alpha=2.0)
    assert np.allclose(apply_gate(GateSpec("S", 2), code.one()), 1j * code.one(), atol=1e-14)
    assert np.allclose(apply_gate(GateSpec("T", 2), code.zero()), code.zero(), atol=1e-14)
    t1 = apply_gate(GateSpec("T", 2), code.one())
    assert np.allclose(t1, np.exp(1j * np.pi / 4) * code.one(), atol=1e-14)
    state = np.multiply.outer(code.one(), code.one())
    assert np.allclose(apply_gate(crot(2, 2), state), -state, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["Z", "S", "T", "crot", "controlled_R", "rotation"]),
       st.integers(1, 6), st.integers(1, 6), st.floats(-7, 7))
def test_gates_unitary_diagonal(kind, N, M, theta):
    g = gate_diagonal(GateSpec(kind, N, M, theta), 40, 30)
    assert np.max(np.abs(np.abs(g) - 1)) < 1e-14


@pytest.mark.parametrize("N,M", [(1, 3), (2, 4), (3, 2)])
def test_crot_swap_symmetry(N, M):
    assert np.allclose(gate_diagonal(crot(N, M), 20, 25), gate_diagonal(crot(M, N), 25, 20).T)


def test_error_op_examples():
    assert np.allclose(error_op(ErrorOp(0, 0.4), 6), np.diag(rotation_diag(6, 0.4)))
    E = error_op(ErrorOp(-1), 6)
    v = np.eye(6)[4]
    assert np.allclose(E @ v, 2 * np.eye(6)[3])
    E = error_op(ErrorOp(2, 0.1), 6)
    assert np.allclose(E @ np.eye(6)[0], math.sqrt(2) * np.eye(6)[2])
    with pytest.raises(GateError):
        error_op(ErrorOp(6), 6)


@pytest.mark.parametrize("k", [-2, -1, 0, 1, 3])
def test_apply_error_matches_dense(k):
    rng = np.random.default_rng(k + 10)
    x = rng.normal(size=(12, 5)) + 1j * rng.normal(size=(12, 5))
    dense = error_op(ErrorOp(k, 0.7), 12) @ x
    assert np.allclose(apply_error(ErrorOp(k, 0.7), x, axis=0), dense)
    assert np.allclose(apply_error(ErrorOp(k, 0.7), x.T, axis=1), dense.T)


def test_gate_errors():
    with pytest.raises(GateError):
        GateSpec("Q")
    with pytest.raises(GateError):
        apply_gate(crot(1, 1), np.ones(4))
    with pytest.raises(GateError):
        gate_diagonal(crot(1, 1), 4)


def _bloch_states():
    s = 1 / math.sqrt(2)
    return [(1, 0), (0, 1), (s, s), (s, 1j * s), (math.cos(0.3), np.exp(0.7j) * math.sin(0.3))]


@pytest.mark.parametrize("bloch", _bloch_states())
def test_teleport_h_ideal(bloch):
    data = standard_code("binomial", 2, K=2)
    anc = standard_code("cat", 3, alpha=3.0)
    psi = data.logical_state(*bloch)
    res = teleport_gate("H", psi, data, anc)
    assert abs(res.probabilities.sum() - 1) < 1e-10
    for rho, U, C in zip(res.states, res.frames, res.corrections):
        target = U @ np.array(bloch)
        assert abs(logical_fidelity(anc, rho, target) - 1) < 1e-10
        assert np.allclose(C @ U, LOGICAL["H"] * (np.trace(C @ U @ LOGICAL["H"].conj().T) / 2))


@pytest.mark.parametrize("kind", ["T", "S"])
@pytest.mark.parametrize("h_mode", ["oracle", "teleport"])
def test_teleport_t_s_ideal(kind, h_mode):
    data = standard_code("cat", 2, alpha=3.0)
    anc = standard_code("cat", 2, alpha=3.5)
    s = 1 / math.sqrt(2)
    res = teleport_gate(kind, data.logical_state(s, s), data, anc, h_mode=h_mode)
    assert abs(res.probabilities.sum() - 1) < 1e-9
    for rho, U, C in zip(res.states, res.frames, res.corrections):
        assert abs(logical_fidelity(anc, rho, U @ np.array([s, s])) - 1) < 1e-9
        G = C @ U
        target = LOGICAL[kind]
        ov = abs(np.trace(target.conj().T @ G)) / 2
        assert abs(ov - 1) < 1e-12


def test_teleport_linear_in_logical_content():
    # ideal teleportation acts linearly on the four logical basis operators
    data = standard_code("binomial", 2, K=3)
    anc = standard_code("cat", 1, alpha=3.0)
    b0 = teleport_gate("H", data.zero(), data, anc)
    b1 = teleport_gate("H", data.one(), data, anc)
    s = 1 / math.sqrt(2)
    bp = teleport_gate("H", data.logical_state(s, s), data, anc)
    bi = teleport_gate("H", data.logical_state(s, 1j * s), data, anc)
    c0, c1 = math.cos(0.3), np.exp(0.7j) * math.sin(0.3)
    bg = teleport_gate("H", data.logical_state(c0, c1), data, anc)
    for j in range(2):
        r00, r11 = b0.probabilities[j] * b0.states[j], b1.probabilities[j] * b1.states[j]
        rp, ri = bp.probabilities[j] * bp.states[j], bi.probabilities[j] * bi.states[j]
        half = 0.5 * (r00 + r11)
        r01 = (rp - half) + 1j * (ri - half)  # image of |0><1|
        pred = abs(c0) ** 2 * r00 + abs(c1) ** 2 * r11 + c0 * np.conj(c1) * r01 \
            + np.conj(c0) * c1 * r01.conj().T
        assert np.max(np.abs(pred - bg.probabilities[j] * bg.states[j])) < 1e-10


def test_teleport_h_phase_measurement():
    data = standard_code("cat", 2, alpha=4.0)
    anc = standard_code("cat", 2, alpha=4.0)
    bloch = (math.cos(0.4), np.exp(0.3j) * math.sin(0.4))
    res = teleport_gate("H", data.logical_state(*bloch), data, anc, measurement="phase")
    F = sum(p * logical_fidelity(anc, rho, U @ np.array(bloch))
            for p, rho, U in zip(res.probabilities, res.states, res.frames))
    assert F >= 0.99


def test_modular_measure_fock_inputs():
    for n in range(9):
        psi = np.eye(16)[n]
        res = modular_number_measure(psi, 3)
        assert res.probabilities[n % 3] == 1


def test_modular_measure_phase_model():
    anc = standard_code("cat", 1, alpha=4.0)
    for n in (0, 4, 5):
        psi = np.eye(12)[n].astype(complex)
        res = modular_number_measure(psi, 3, anc, measurement="phase")
        assert res.probabilities[n % 3] > 0.99


def test_modular_measure_prepares_codeword():
    N, alpha = 2, 2.5
    code = standard_code("cat", N, alpha=alpha)
    theta = coherent_amplitudes(alpha, code.dim)
    res = modular_number_measure(theta, 2 * N)
    assert abs(logical_fidelity(code, res.states[0], np.array([1, 0])) - 1) < 1e-12


def test_ancilla_loss_mid_gate_rotates_data():
    N, M, tau = 2, 3, 0.37
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10, 12)) + 1j * rng.normal(size=(10, 12))
    lhs = controlled_rotation_with_ancilla_loss(x, N, M, tau)
    full = apply_gate(GateSpec("controlled_R", N, M), apply_error(ErrorOp(-1), x, axis=1))
    rhs = rotation_diag(10, tau * 2 * np.pi / (N * M))[:, None] * full
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_logical_fidelity_pure():
    code = standard_code("binomial", 2, K=2)
    assert abs(logical_fidelity(code, ket2dm(code.plus()), np.array([1, 1]) / math.sqrt(2)) - 1) < 1e-14
