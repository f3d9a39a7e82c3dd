import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from rotcodes.codes import (CodeError, Primitive, RotationCode, breed, code_for_nbar,
                            code_from_primitive, dual_primitive, logical_state, rotation_projector,
                            standard_code)
from rotcodes.fock import coherent_amplitudes, rotation_diag
from rotcodes.gates import GateSpec, apply_gate


def _embed(v, dim):
    out = np.zeros(dim, dtype=complex)
    out[: min(dim, len(v))] = v[:dim]
    return out


@pytest.mark.parametrize("N", [1, 2, 3, 4, 5])
def test_k1_binomial_pegg_barnett_zero_n_coincide(N):
    zn = standard_code("zero_n", N)
    b1 = standard_code("binomial", N, K=1, dim=zn.dim)
    pb = standard_code("pegg_barnett", N, s=N + 1, dim=zn.dim)
    for c in (b1, pb):
        assert np.max(np.abs(c.plus() - zn.plus())) <= 1e-12
        assert np.max(np.abs(c.minus() - zn.minus())) <= 1e-12


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_zero_n_diagnostics_exact(N):
    d = standard_code("zero_n", N).diagnostics
    assert d.mean_modular_phase == 0.5
    assert d.delta_canonical == 3.0
    assert d.nbar == N / 2


@pytest.mark.parametrize("N,K", [(1, 1), (2, 5), (3, 13), (4, 7), (3, 40)])
def test_binomial_nbar_closed_form(N, K):
    assert abs(standard_code("binomial", N, K=K).nbar - N * K / 2) <= 1e-12


def test_binomial_n3_k13_nbar():
    assert abs(standard_code("binomial", 3, K=13).nbar - 19.5) <= 1e-12


def test_pegg_barnett_mean_modular_phase():
    # closed form 1 - 1/ceil(s/N), exact when ceil(s/N) is even
    for N, s in [(2, 8), (3, 12), (4, 24)]:
        c = standard_code("pegg_barnett", N, s=s)
        assert abs(c.diagnostics.mean_modular_phase - (1 - 1 / math.ceil(s / N))) < 1e-12
    assert abs(standard_code("pegg_barnett", 2, s=8).diagnostics.mean_modular_phase - 0.75) < 1e-12


def _monotone_tail(values, skip=3):
    v = np.asarray(values)[skip - 1:]
    return np.all(np.diff(v) <= 1e-12)


def test_delta_decreases_binomial():
    d = [standard_code("binomial", 3, K=K).diagnostics.delta_canonical for K in range(2, 41)]
    assert _monotone_tail(d)
    assert d[-1] < 0.03


def test_delta_decreases_pegg_barnett():
    d = [standard_code("pegg_barnett", 3, s=3 * q).diagnostics.delta_canonical for q in range(2, 41)]
    assert _monotone_tail(d)
    assert d[-1] < 0.06


def test_cat_against_high_cutoff_oracle():
    N, alpha = 2, 2.0
    code = standard_code("cat", N, alpha=alpha)
    n = np.arange(400)
    c = np.exp(-alpha**2 / 2 + n * math.log(alpha) - 0.5 * special.gammaln(n + 1))
    grid = c[::N]
    even = grid[0::2] / np.linalg.norm(grid[0::2])
    odd = grid[1::2] / np.linalg.norm(grid[1::2])
    k = len(code.f)
    assert np.max(np.abs(code.f[0::2] - even[: len(code.f[0::2])])) < 1e-12
    assert np.max(np.abs(code.f[1::2] - odd[: len(code.f[1::2])])) < 1e-12
    assert k * N >= code.dim - 2 * N


@pytest.mark.parametrize("N,alpha", [(1, 1.3), (2, 2.0), (3, 3.1)])
def test_primitive_coherent_equals_cat(N, alpha):
    cat = standard_code("cat", N, alpha=alpha)
    prim = code_from_primitive(coherent_amplitudes(alpha, cat.dim + 200), N, dim=cat.dim)
    assert np.max(np.abs(prim.plus() - cat.plus())) < 1e-12


def test_primitive_examples():
    N = 4
    theta = np.zeros(10)
    theta[0] = theta[4] = 1 / math.sqrt(2)
    c = code_from_primitive(theta, N)
    assert np.allclose(c.zero()[:5], [1, 0, 0, 0, 0])
    assert abs(c.one()[4] - 1) < 1e-15
    small = code_from_primitive(coherent_amplitudes(1e-4, 60), 1, dim=2)
    assert np.allclose(small.basis_matrix(), np.eye(2))
    # |2> is |1 * N> for N = 2, so it is the even (|2kN>) sector that is empty
    with pytest.raises(CodeError, match="even"):
        code_from_primitive(np.array([0, 0, 1.0, 0, 0]), 2)


@pytest.mark.parametrize("family,kw", [("cat", {"alpha": 2.3}), ("binomial", {"K": 4}),
                                       ("pegg_barnett", {"s": 9}), ("squeezed_cat", {"alpha": 2.0, "r": 0.3})])
@pytest.mark.parametrize("N", [1, 2, 3])
def test_code_invariants(family, kw, N):
    code = standard_code(family, N, **kw)
    zero, one = code.zero(), code.one()
    assert np.vdot(zero, one) == 0
    assert abs(np.linalg.norm(zero) - 1) < 1e-12 and abs(np.linalg.norm(one) - 1) < 1e-12
    Z = apply_gate(GateSpec("Z", N), zero)
    assert np.max(np.abs(Z - zero)) < 1e-12
    assert np.max(np.abs(rotation_diag(code.dim, math.pi / N) * one + one)) < 1e-12
    d = code.diagnostics
    assert d.nbar >= N / 2 - 1e-12
    assert d.delta_canonical >= 0
    assert abs(d.mean_modular_phase) <= 1
    assert d.delta_heterodyne >= d.delta_canonical
    assert code.dim % (2 * N) == 0


def test_parameter_validation():
    with pytest.raises(CodeError):
        standard_code("cat", 2, alpha=0)
    with pytest.raises(CodeError):
        standard_code("binomial", 2, K=0)
    with pytest.raises(CodeError):
        standard_code("pegg_barnett", 3, s=3)
    with pytest.raises(CodeError):
        standard_code("cat", 2, alpha=5.0, dim=8)
    with pytest.raises(CodeError):
        standard_code("nope", 2)


def test_logical_state_examples():
    code = standard_code("zero_n", 3)
    psi = logical_state(code, (1 / math.sqrt(2), 1 / math.sqrt(2)))
    assert np.allclose(psi[[0, 3]], [1 / math.sqrt(2)] * 2)
    cat = standard_code("cat", 2, alpha=2.0)
    z = logical_state(cat, (1, 0))
    n = np.arange(cat.dim)
    assert np.all(z[n % 4 != 0] == 0)
    t = cat.logical_state(1 / math.sqrt(2), np.exp(1j * np.pi / 4) / math.sqrt(2))
    assert abs(np.vdot(cat.one(), t) - np.exp(1j * np.pi / 4) / math.sqrt(2)) < 1e-12
    with pytest.raises(CodeError):
        logical_state(cat, (1, 1))


@pytest.mark.parametrize("N,alpha", [(2, 1.5), (3, 2.0), (2, 5.0)])
def test_dual_primitive_reconstructs_plus(N, alpha):
    code = standard_code("cat", N, alpha=alpha)
    theta = coherent_amplitudes(alpha, code.dim)
    dual = dual_primitive(theta, N)
    plus = sum(rotation_diag(code.dim, 2 * np.pi * m / N) * dual.state for m in range(N))
    plus /= np.linalg.norm(plus)
    assert abs(abs(np.vdot(plus, code.plus())) - 1) < 1e-10
    if alpha == 5.0:
        assert abs(abs(np.vdot(dual.state, theta / np.linalg.norm(theta))) - 1) < 1e-10


def test_dual_primitive_zero_n_minus():
    N = 2
    theta = np.zeros(8, dtype=complex)
    theta[0] = theta[N] = 1 / math.sqrt(2)
    dual = dual_primitive(theta, N)
    minus = sum(rotation_diag(8, np.pi * (2 * m + 1) / N) * dual.state for m in range(N))
    minus /= np.linalg.norm(minus)
    target = np.zeros(8)
    target[0], target[N] = 1 / math.sqrt(2), -1 / math.sqrt(2)
    assert abs(abs(np.vdot(minus, target)) - 1) < 1e-12


def test_rotation_projector():
    P0, P1 = rotation_projector(10, 2, 0), rotation_projector(10, 2, 1)
    assert np.array_equal(P0 - P1, (-1.0) ** np.arange(10))
    assert np.array_equal(sum(rotation_projector(12, 4, l) for l in range(4)), np.ones(12))
    code = standard_code("cat", 2, alpha=2.0)
    theta = coherent_amplitudes(2.0, code.dim)
    v = rotation_projector(code.dim, 4, 0) * theta
    assert abs(abs(np.vdot(v / np.linalg.norm(v), code.zero())) - 1) < 1e-12
    with pytest.raises(ValueError):
        rotation_projector(10, 4, 4)


def test_breed_cat():
    a1 = standard_code("cat", 1, alpha=3.0)
    a2 = standard_code("cat", 2, alpha=3.0)
    dim = max(a1.dim, a2.dim)
    anc = standard_code("cat", 1, alpha=4.0)
    res = breed(_embed(a1.zero(), dim), 1, anc)
    target = _embed(a2.zero(), dim)
    assert abs(np.vdot(target, res.state)) ** 2 >= 1 - 1e-10
    z2 = np.exp(1j * np.pi * np.arange(dim) / 2)
    p_expected = 0.5 * (1 + np.real(np.vdot(_embed(a1.zero(), dim), z2 * _embed(a1.zero(), dim))))
    assert abs(res.probability - p_expected) < 1e-8


def test_breed_invariant_input():
    anc = standard_code("cat", 1, alpha=4.0)
    v = np.zeros(16, dtype=complex)
    v[0] = 1
    res = breed(v, 2, anc)
    assert abs(res.probability - 1) < 1e-10
    assert np.allclose(res.state, v, atol=1e-8)


def test_record_roundtrip():
    code = standard_code("binomial", 3, K=5)
    back = RotationCode.from_record(code.to_record())
    assert np.array_equal(back.f, code.f)
    assert back.params == code.params and back.dim == code.dim and back.family == "binomial"


def test_code_for_nbar_ties_round_down():
    assert code_for_nbar("binomial", 2, 3.0).param_dict["K"] == 3
    # K = 2 nbar/N = 2.5 lies between 2 and 3: tie goes down
    assert code_for_nbar("binomial", 2, 2.5).param_dict["K"] == 2
    c = code_for_nbar("cat", 2, 6.0)
    assert abs(c.nbar - 6.0) < 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.floats(0.5, 4.0))
def test_cat_property_orthonormal(N, alpha):
    code = standard_code("cat", N, alpha=alpha)
    S = code.basis_matrix()
    assert np.max(np.abs(S.conj().T @ S - np.eye(2))) < 1e-12


def test_primitive_support_check():
    with pytest.raises(CodeError, match="even"):
        Primitive(np.array([0, 0, 0, 1.0])).check_support(3)
