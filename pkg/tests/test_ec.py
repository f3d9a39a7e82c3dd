import math

import numpy as np
import pytest
from scipy import optimize

from rotcodes.channels import NoiseParams, loss_dephasing_kraus
from rotcodes.codes import standard_code
from rotcodes.ec import (EcConfig, EcError, apply_choi, avg_from_ent, break_even_threshold,
                         choi_checks, conditional_outputs, injected_error_channel, logical_output,
                         minimal_branches, ml_decode, nbar_grid, optimal_recovery, run_ec,
                         trivial_baseline)
from rotcodes.fock import annihilation


def test_ml_decode_rules():
    w = np.array([[0.1, 0.3, 0.3, 0.0], [0.0, 0.0, 0.0, 0.0], [0.5, 0.1, 0.1, 0.2]])
    assert list(ml_decode(w)) == [1, 0, 0]
    with pytest.raises(EcError):
        ml_decode(np.array([0.1, -0.2]))


def test_trivial_baseline():
    assert trivial_baseline(NoiseParams(0, 0)) == 0
    kt = 1e-4
    assert abs(trivial_baseline(NoiseParams(kt, 0)) - kt / 3) < kt**2
    # pure dephasing on the bare qubit: (1 - e^{-kpt/2}) / 3
    assert abs(trivial_baseline(NoiseParams(0, 0.2)) - (1 - math.exp(-0.1)) / 3) < 1e-15


def test_fidelity_conversion():
    assert avg_from_ent(1.0) == 1.0
    assert abs(avg_from_ent(0.25) - 0.5) < 1e-15


CODES = [("cat", 2, {"alpha": 3.0}), ("cat", 3, {"alpha": 3.0}),
         ("binomial", 2, {"K": 4}), ("binomial", 3, {"K": 4})]


@pytest.mark.parametrize("family,N,kw", CODES)
@pytest.mark.parametrize("flavor", ["knill", "hybrid"])
@pytest.mark.parametrize("scheme", ["ideal", "pretty_good"])
def test_noiseless_ec_is_perfect(family, N, kw, flavor, scheme):
    r = run_ec(EcConfig(standard_code(family, N, **kw), NoiseParams(0, 0), scheme, flavor))
    assert r.infidelity <= 1e-10
    assert r.leakage <= 1e-9


@pytest.mark.parametrize("family,N,kw", [("cat", 2, {"alpha": 4.0}), ("cat", 3, {"alpha": 5.5}),
                                         ("binomial", 2, {"K": 4}), ("binomial", 3, {"K": 4})])
@pytest.mark.parametrize("flavor", ["knill", "hybrid"])
def test_single_injected_loss_corrected(family, N, kw, flavor):
    code = standard_code(family, N, **kw)
    ch = injected_error_channel(code, annihilation(code.dim))
    r = run_ec(EcConfig(code, NoiseParams(0, 0), "ideal", flavor, channel=ch, trace_preserving=False))
    assert r.infidelity <= 1e-9


@pytest.mark.parametrize("flavor", ["knill", "hybrid"])
@pytest.mark.parametrize("scheme", ["phase", "pretty_good", "ideal"])
def test_logical_channel_cptp_and_linear(flavor, scheme):
    code = standard_code("binomial", 2, K=3)
    cfg = EcConfig(code, NoiseParams(0.02, 0.01), scheme, flavor)
    r = run_ec(cfg)
    lam, tp = choi_checks(r.logical_process)
    assert lam >= -1e-10 and tp <= 1e-9
    assert r.leakage <= 1e-9
    s = 1 / math.sqrt(2)
    for bloch in [(1, 0), (s, 1j * s), (math.cos(0.4), np.exp(1.1j) * math.sin(0.4))]:
        v = np.array(bloch, dtype=complex)
        direct = logical_output(cfg, r, bloch)
        assert np.max(np.abs(direct - apply_choi(r.logical_process, np.outer(v, v.conj())))) <= 1e-9


def test_conditional_blocks_sum_to_noisy_choi():
    code = standard_code("cat", 2, alpha=2.5)
    cfg = EcConfig(code, NoiseParams(0.03, 0.0), "phase")
    T = conditional_outputs(cfg)
    J = T.reshape(-1, 4, 4).sum(axis=0)
    # without correction the outcomes average to a trace-2 Choi matrix
    assert abs(np.trace(J).real - 2) < 1e-9
    lam, _ = choi_checks(0.5 * (J + J.conj().T))
    assert lam >= -1e-10


def test_hybrid_close_to_knill():
    for K in (2, 4, 6):
        code = standard_code("binomial", 3, K=K)
        noise = NoiseParams(1e-3, 1e-3)
        a = run_ec(EcConfig(code, noise, "pretty_good", "knill")).infidelity
        b = run_ec(EcConfig(code, noise, "pretty_good", "hybrid")).infidelity
        assert abs(a - b) <= 2e-3


def test_pretty_good_not_worse_than_phase():
    code = standard_code("cat", 3, alpha=3.0)
    noise = NoiseParams(1e-3, 1e-3)
    pg = run_ec(EcConfig(code, noise, "pretty_good")).infidelity
    ph = run_ec(EcConfig(code, noise, "phase")).infidelity
    assert pg <= ph + 1e-9


def test_minimal_branches_reproduce_coherences():
    code = standard_code("cat", 2, alpha=2.0)
    ch = loss_dephasing_kraus(code.space, NoiseParams(0.05, 0.05))
    inputs = code.basis_matrix().T
    u = minimal_branches(ch, inputs)
    assert len(u) <= 2 * code.dim
    for i in range(2):
        for j in range(2):
            full = sum(np.outer(K @ inputs[i], (K @ inputs[j]).conj()) for K in ch.ops)
            red = np.einsum("bx,by->xy", u[:, i], u[:, j].conj())
            assert np.max(np.abs(full - red)) < 1e-12


def test_config_validation_and_cache_key():
    code = standard_code("binomial", 2, K=2)
    for bad in ({"scheme": "x"}, {"flavor": "steane"}, {"decoder": "min"}, {"data_bins": 1}):
        with pytest.raises(EcError):
            EcConfig(code, **bad)
    with pytest.raises(ValueError):
        EcConfig(code, NoiseParams(-1, 0))
    a = EcConfig(code, NoiseParams(1e-3, 0))
    b = EcConfig(standard_code("binomial", 2, K=2), NoiseParams(1e-3, 0))
    assert a.cache_key() == b.cache_key()
    assert a.cache_key() != EcConfig(code, NoiseParams(2e-3, 0)).cache_key()
    assert a.resolved_mid_bins() % (2 * a.N * a.M) == 0


def test_hybrid_rejects_output_without_logical_rotation():
    code = standard_code("cat", 2, alpha=3.0)
    out = standard_code("cat", 1, alpha=3.0)
    with pytest.raises(EcError):
        run_ec(EcConfig(code, NoiseParams(0, 0), "ideal", "hybrid", out_code=out))


def test_optimal_recovery_noiseless_one_step():
    r = optimal_recovery(standard_code("binomial", 2, K=2), NoiseParams(0, 0))
    assert abs(r.history[1] - 1) < 1e-12
    assert r.infidelity < 1e-12


@pytest.mark.parametrize("family,kw,kt", [("binomial", {"K": 2}, 1e-2), ("cat", {"alpha": 2.0}, 3e-2)])
def test_optimal_recovery_monotone(family, kw, kt):
    code = standard_code(family, 2, **kw)
    r = optimal_recovery(code, NoiseParams(kt, kt))
    assert np.all(np.diff(r.history) >= -1e-12)
    assert "lower_bound_on_optimal" in r.flags
    lam, tp = choi_checks(r.logical_process)
    assert lam >= -1e-10 and tp <= 1e-9


def test_optimal_recovery_dimension_limit():
    with pytest.raises(EcError):
        optimal_recovery(standard_code("binomial", 3, K=20), NoiseParams(1e-3, 0))


def test_nbar_grid():
    g = nbar_grid("binomial", 3, 9.0)
    assert [c.param_dict["K"] for c in g] == [1, 2, 3, 4, 5, 6]
    pb = nbar_grid("pegg_barnett", 2, 5.0)
    assert all(c.param_dict["s"] % 2 == 0 for c in pb)
    cats = nbar_grid("cat", 2, 4.0, alpha_step=0.5)
    assert all(c.nbar <= 4.0 + 1e-12 for c in cats) and len(cats) >= 3
    with pytest.raises(EcError):
        nbar_grid("zero_n", 2, 3.0)


def test_break_even_bisection_and_errors():
    # a synthetic corrected curve kt^2 crosses kt/3 (for small kt) near 1/3
    be = break_even_threshold("binomial", 2, bounds=(0.01, 1.0), rel_tol=0.01,
                              dephasing_ratio=0.0, evaluate=lambda kt: kt**2)
    exact = optimize.brentq(lambda kt: kt**2 - trivial_baseline(NoiseParams(kt, 0)), 0.01, 1.0)
    assert abs(be / exact - 1) < 0.01
    with pytest.raises(EcError):
        break_even_threshold("binomial", 2, bounds=(0.1, 0.1), evaluate=lambda kt: 0.0)
    with pytest.raises(EcError):
        break_even_threshold("binomial", 2, bounds=(0.01, 0.1), evaluate=lambda kt: 1.0)
