import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rotcodes.codes import standard_code
from rotcodes.fock import (ModeSpace, apply_op, as_operator, build_mode_ops, coherent_amplitudes,
                           psd_sqrt_pinv, rotation_diag, support_projector, tail_probability,
                           wigner_grid)


def test_mode_space_validation():
    with pytest.raises(ValueError):
        ModeSpace(1)
    with pytest.raises(ValueError):
        ModeSpace(4, tail_tol=1.0)
    assert ModeSpace(5).basis(2)[2] == 1


def test_mode_ops_structure():
    ops = build_mode_ops(ModeSpace(6))
    assert np.allclose(np.diag(ops.annihilation, 1), np.sqrt(np.arange(1, 6)))
    assert np.allclose(ops.creation, ops.annihilation.conj().T)
    assert np.array_equal(ops.number, np.arange(6))
    v = ModeSpace(3).basis(1)
    assert np.allclose(build_mode_ops(ModeSpace(3)).annihilation @ v, [1, 0, 0])


def test_commutator_fails_only_at_cutoff():
    dim = 10
    a = build_mode_ops(ModeSpace(dim)).annihilation
    comm = a @ a.conj().T - a.conj().T @ a
    assert np.allclose(comm[:-1, :-1], np.eye(dim - 1), atol=1e-12)
    assert abs(comm[-1, -1] - (1 - dim)) < 1e-12


def test_rotation_grid_states():
    N = 3
    ops = build_mode_ops(ModeSpace(20))
    R = ops.rotation(2 * np.pi / N)
    Z = ops.rotation(np.pi / N)
    for k in range(6):
        n = k * N
        assert abs(R[n] - 1) < 1e-12
        assert abs(Z[n] - (-1) ** k) < 1e-12


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_rotation_composition(t1, t2):
    d = 30
    assert np.max(np.abs(rotation_diag(d, t1) * rotation_diag(d, t2) - rotation_diag(d, t1 + t2))) < 1e-12


def test_coherent_amplitudes_normalized():
    c = coherent_amplitudes(2.0 * np.exp(0.4j), 80)
    assert abs(np.linalg.norm(c) - 1) < 1e-12
    assert tail_probability(c, 80) == 0.0
    assert tail_probability(c, 3) > 0


def test_apply_op_forms_agree():
    rng = np.random.default_rng(1)
    diag = np.exp(1j * rng.normal(size=5))
    v = rng.normal(size=5) + 1j * rng.normal(size=5)
    rho = np.outer(v, v.conj())
    assert np.allclose(apply_op(diag, v), as_operator(diag) @ v)
    assert np.allclose(apply_op(diag, rho), as_operator(diag) @ rho @ as_operator(diag).conj().T)


def test_psd_sqrt_pinv_examples():
    assert np.allclose(psd_sqrt_pinv(np.eye(3)), np.eye(3))
    assert np.allclose(psd_sqrt_pinv(np.diag([4.0, 0.0])), np.diag([0.5, 0.0]))
    with pytest.raises(ValueError, match="asymmetry"):
        psd_sqrt_pinv(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_psd_sqrt_pinv_damaged_cat_projector():
    from rotcodes.channels import NoiseParams, apply_channel, loss_dephasing_kraus

    code = standard_code("cat", 2, alpha=2.0)
    ch = loss_dephasing_kraus(code.space, NoiseParams(0.05, 0.0))
    sigma = apply_channel(ch, code.code_projector())
    M = psd_sqrt_pinv(sigma)
    P = support_projector(sigma)
    assert np.linalg.norm(M @ sigma @ M - P, 2) <= 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 64), st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_psd_sqrt_pinv_property(dim, rank, seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(dim, min(rank, dim))) + 1j * rng.normal(size=(dim, min(rank, dim)))
    A = G @ G.conj().T
    M = psd_sqrt_pinv(A)
    assert np.linalg.norm(M @ M @ A - support_projector(A), 2) < 1e-8


def test_wigner_vacuum_and_normalization():
    vac = ModeSpace(10).basis(0)
    xs = np.linspace(-5, 5, 201)
    X, Y = np.meshgrid(xs, xs)
    W = wigner_grid(vac, X + 1j * Y).values
    assert abs(W.max() - 2 / np.pi) < 1e-12
    assert W[100, 100] == W.max()
    dx = xs[1] - xs[0]
    assert abs(W.sum() * dx * dx - 1) < 1e-6


@pytest.mark.parametrize("N", [2, 3, 4])
def test_wigner_rotation_symmetry(N):
    code = standard_code("cat", N, alpha=2.5)
    pts = np.array([0.3 + 0.2j, 1.7 - 0.4j, -2.1 + 1.1j, 0.05j])
    W = wigner_grid(code.plus(), pts).values
    Wr = wigner_grid(code.plus(), pts * np.exp(2j * np.pi / N)).values
    assert np.max(np.abs(W - Wr)) < 1e-10


def test_wigner_cat_has_negative_regions():
    code = standard_code("cat", 4, alpha=4.0)
    r = np.linspace(0, 5, 60)
    phi = np.linspace(0, 2 * np.pi, 120)
    pts = (r[:, None] * np.exp(1j * phi[None, :])).ravel()
    assert wigner_grid(code.plus(), pts).values.min() < -1e-3


def test_wigner_tail_warning():
    space = ModeSpace(4)
    psi = coherent_amplitudes(2.0, 4)
    with pytest.warns(RuntimeWarning):
        out = wigner_grid(psi, np.array([0j]), space)
    assert out.warning is not None
    assert abs(out.tail - tail_probability(coherent_amplitudes(2.0, 200), 4)) < 1e-12
