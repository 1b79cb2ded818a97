import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import SIGMA2, correlated_config
from risuplink.channel import PhaseShifts, table_config
from risuplink.estimation import ModelError
from risuplink.optimizer import align_phases, cancel_phases
from risuplink.rate_analytic import (
    ScalingLaw,
    asymptotic_limit,
    f_k,
    f_phase_sum,
    f_values,
    rate_correlated,
    rate_independent,
    rate_rayleigh_risbs,
    scaled_power,
    single_user_snr_coeffs,
)

FROZEN = oracles.load()


def _rel(a, b):
    return np.max(np.abs(np.asarray(a) - np.asarray(b)) / np.abs(np.asarray(b)))


def test_single_element_unit_modulus():
    cfg = table_config(M=4, N=1, K=2)
    for seed in range(5):
        assert abs(f_k(PhaseShifts.random(1, seed), cfg, 0)) == pytest.approx(1.0, abs=1e-12)


def test_aligned_phases_give_full_sum():
    cfg = table_config(M=4, N=16, K=3)
    for k in range(3):
        ph = align_phases(cfg, k, offset=0.7)
        assert f_k(ph, cfg, k) == pytest.approx(16 * np.exp(0.7j), abs=1e-9)


def test_phase_sum_matches_inner_product():
    cfg = table_config(M=4, N=16, K=4)
    ph = PhaseShifts(FROZEN["phase_sum_theta"])
    frozen = oracles.as_complex(FROZEN["phase_sum_f"])
    for k in range(4):
        assert f_phase_sum(ph, cfg, k) == pytest.approx(f_k(ph, cfg, k), abs=1e-10)
        assert f_k(ph, cfg, k) == pytest.approx(frozen[k], abs=1e-10)


@given(st.integers(0, 10_000), st.floats(-10, 10))
@settings(max_examples=30, deadline=None)
def test_f_bounded_and_shift_invariant(seed, shift):
    cfg = table_config(M=4, N=16, K=4)
    ph = PhaseShifts.random(16, seed)
    f = np.abs(f_values(cfg, ph))
    assert np.all(f <= 16 + 1e-9)
    np.testing.assert_allclose(np.abs(f_values(cfg, PhaseShifts(ph.theta + shift))), f, rtol=1e-10, atol=1e-12)


def _assert_structure(b):
    np.testing.assert_array_equal(b.signal, b.noise**2)
    assert np.all(b.leak >= 0) and np.all(b.noise >= 0) and np.all(b.interference >= 0)
    np.testing.assert_array_equal(np.diag(b.interference), 0.0)
    np.testing.assert_allclose(b.rate, b.prelog * np.log2(1 + b.sinr), rtol=1e-15)
    if b.emi is not None:
        assert np.all(b.emi >= 0)


@given(st.floats(0, 10), st.floats(0, 30), st.integers(0, 999), st.booleans())
@settings(max_examples=40, deadline=None)
def test_independent_structure(delta, eps, seed, perfect):
    cfg = table_config(M=8, N=16, K=4, delta=delta, epsilon=eps)
    _assert_structure(rate_independent(cfg, PhaseShifts.random(16, seed), perfect_csi=perfect))


@given(st.floats(0, 10), st.floats(0, 90), st.sampled_from([0.5, 0.25, 0.125]), st.integers(0, 999))
@settings(max_examples=25, deadline=None)
def test_correlated_structure(delta, rho, spacing, seed):
    cfg = correlated_config(M=6, N=9, K=3, rho_db=rho, d_ris=spacing, delta=delta)
    _assert_structure(rate_correlated(cfg, PhaseShifts.random(9, seed)))


def test_phase_free_cases():
    for kw in (dict(delta=0.0), dict(epsilon=0.0)):
        cfg = table_config(M=8, N=16, K=4, **kw)
        rates = np.array([rate_independent(cfg, PhaseShifts.random(16, s)).rate for s in range(10)])
        spread = np.max(np.abs(rates - rates[0]) / rates[0])
        assert spread < 1e-12


def test_user_permutation_invariance():
    cfg = table_config(M=8, N=16, K=4)
    ph = PhaseShifts.random(16, 1)
    perm = [2, 0, 3, 1]
    pc = table_config(
        M=8,
        N=16,
        K=4,
        alpha=tuple(cfg.alpha[i] for i in perm),
        gamma=tuple(cfg.gamma[i] for i in perm),
        epsilon=tuple(cfg.epsilon[i] for i in perm),
        angle_users=tuple(cfg.angle_users[i] for i in perm),
    )
    np.testing.assert_allclose(rate_independent(pc, ph).rate, rate_independent(cfg, ph).rate[perm], rtol=1e-12)


def test_closed_form_near_frozen_monte_carlo():
    ph = PhaseShifts(FROZEN["mc_theta"])
    b = rate_independent(table_config(M=16, N=16, K=4), ph)
    assert _rel(b.sinr, FROZEN["mc_sinr_independent"]) < 0.03
    bc = rate_correlated(correlated_config(), ph)
    assert _rel(bc.sinr, FROZEN["mc_sinr_correlated"]) < 0.04


def test_rayleigh_specialisation():
    cfg = table_config(M=16, N=64, K=8, delta=0.0)
    a = rate_rayleigh_risbs(cfg)
    b = rate_independent(cfg, PhaseShifts.random(64, 0))
    for name in ("signal", "leak", "noise", "interference", "rate"):
        x, y = getattr(a, name), getattr(b, name)
        assert np.max(np.abs(x - y)) < 1e-12 * np.max(np.abs(y))
    with pytest.raises(ModelError):
        rate_rayleigh_risbs(table_config(M=4, N=4, K=2))


def test_rayleigh_large_n_limit():
    alpha = (1e-6, 2e-6, 4e-6, 3e-6)
    gaps = []
    for side in (64, 256, 1024):
        cfg = table_config(M=16, N=side * side, K=4, delta=0.0, alpha=alpha)
        lim = asymptotic_limit(cfg, ScalingLaw.LARGE_RIS_RAYLEIGH)
        np.testing.assert_allclose(lim, 16 * np.array(alpha) / sum(alpha))
        gaps.append(np.max(np.abs(rate_rayleigh_risbs(cfg).sinr / lim - 1)))
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-3
    eq = table_config(M=16, N=64, K=4, delta=0.0, alpha=2.5e-6)
    np.testing.assert_allclose(asymptotic_limit(eq, ScalingLaw.LARGE_RIS_RAYLEIGH), 16 / 4)


def test_reduction_to_independent_limit():
    for seed in range(5):
        kw = dict(M=8, N=16, K=3, epsilon=math.inf)
        ci = table_config(**kw)
        cc = table_config(**kw, correlated=True, ris_correlation="identity")
        ph = PhaseShifts.random(16, seed)
        assert _rel(rate_correlated(cc, ph).rate, rate_independent(ci, ph).rate) < 1e-9


def test_correlated_rayleigh_noise_term():
    cfg = table_config(M=8, N=16, K=3, delta=0.0, epsilon=math.inf, correlated=True, ris_correlation="identity", sigma_e2=SIGMA2 * 1e4)
    b = rate_correlated(cfg, PhaseShifts.random(16, 0))
    chat = cfg.beta * cfg.alpha_arr
    a = 16 * chat + cfg.gamma_arr
    expected = 8 * a**2 / (a + cfg.pilot_noise + 16 * cfg.sigma_e2 * cfg.beta / (cfg.tau * cfg.p))
    np.testing.assert_allclose(b.noise, expected, rtol=1e-12)


def test_correlated_components_exposed():
    b = rate_correlated(correlated_config(M=6, N=9, K=3), PhaseShifts.random(9, 0))
    terms = b.components["terms"]
    for k in range(3):
        assert len(terms.emi_parts[k]) == 8 and len(terms.leak_parts[k]) == 8
        assert sum(terms.emi_parts[k]) == pytest.approx(b.emi[k], rel=1e-12)
        for i in range(3):
            if i != k:
                assert len(terms.interference_parts[k][i]) == 8
    P = terms.primitives
    for k in range(3):
        assert P.f2[k] >= 0 and P.f4[k] >= 0 and P.f7[k] >= 0
        assert P.f5[k] == pytest.approx(abs(P.tr_ups[k]) ** 2, rel=1e-12)


def test_correlated_requires_los_users():
    with pytest.raises(Exception):
        table_config(M=4, N=4, K=2, correlated=True)
    with pytest.raises(ModelError):
        rate_correlated(table_config(M=4, N=4, K=2), PhaseShifts.zeros(4))


# single user -----------------------------------------------------------------


def _snr_independent(cfg, ph):
    return rate_independent(cfg, ph).sinr[0]


def test_single_user_coefficients():
    cfg = table_config(M=16, N=16, K=1)
    co = single_user_snr_coeffs(cfg)
    assert min(co.s1, co.s2, co.t1, co.t2) > 0
    assert co(0.0) == pytest.approx(_snr_independent(cfg, cancel_phases(cfg, 0)), rel=1e-10)
    assert co(256.0) == pytest.approx(_snr_independent(cfg, align_phases(cfg, 0)), rel=1e-10)
    rng = np.random.default_rng(0)
    for _ in range(5):
        ph = PhaseShifts.random(16, int(rng.integers(1 << 30)))
        x = abs(f_k(ph, cfg, 0)) ** 2
        assert co(x) == pytest.approx(_snr_independent(cfg, ph), rel=1e-10)
    with pytest.raises(ModelError):
        single_user_snr_coeffs(table_config(M=4, N=4, K=2))


def test_snr_derivative_structure():
    cfg = table_config(M=16, N=16, K=1)
    co = single_user_snr_coeffs(cfg)
    x = np.linspace(0, 256, 2001)
    d = np.gradient(co(x), x)
    if co.x0R <= 0:
        assert np.all(d[1:-1] > 0)
    # the numerator of SNR' vanishes at both roots
    num = lambda x: (co.s1 * x + co.s2) * (co.s1 * co.t1 * x + 2 * co.s1 * co.t2 - co.s2 * co.t1)  # noqa: E731
    assert num(co.x0L) == pytest.approx(0.0, abs=1e-9 * abs(num(1.0)))
    assert num(co.x0R) == pytest.approx(0.0, abs=1e-9 * abs(num(1.0)))


# scaling laws ---------------------------------------------------------------------


def test_scaling_single_user_limits():
    Eu = 0.01
    cfg = table_config(M=16, N=16, K=1)
    g = cfg.beta * cfg.alpha[0] * cfg.delta * cfg.epsilon[0] / ((cfg.delta + 1) * (cfg.epsilon[0] + 1))
    assert asymptotic_limit(cfg, ScalingLaw.SINGLE_P_OVER_MN2, Eu)[0] == pytest.approx(Eu / cfg.sigma2 * g)
    assert asymptotic_limit(cfg, ScalingLaw.SINGLE_P_OVER_N2, Eu)[0] == pytest.approx(Eu / cfg.sigma2 * 16 * g)


def test_scaled_power_schedules():
    assert scaled_power("p=Eu/M", 1.0, 64, 16) == 1 / 64
    assert scaled_power(ScalingLaw.SINGLE_P_OVER_MN2, 1.0, 4, 8) == 1 / 256
    with pytest.raises(ModelError):
        scaled_power(ScalingLaw.LARGE_RIS_RAYLEIGH, 1.0, 4, 4)


def test_equal_pathloss_fair_limit():
    cfg = table_config(M=64, N=64, K=4, delta=0.0, alpha=2.5e-6, gamma=0.0)
    lim = asymptotic_limit(cfg, ScalingLaw.P_OVER_N_RAYLEIGH, 0.01)
    np.testing.assert_allclose(lim, lim[0], rtol=1e-12)


def test_scaling_precondition():
    with pytest.raises(ModelError):
        asymptotic_limit(table_config(M=4, N=4, K=2), ScalingLaw.P_OVER_N_RAYLEIGH)
    with pytest.raises(ModelError):
        asymptotic_limit(table_config(M=4, N=4, K=2), ScalingLaw.SINGLE_P_OVER_N2)
