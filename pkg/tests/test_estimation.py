import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import SIGMA2, correlated_config
from risuplink.channel import PhaseShifts, aggregated_channel, sample_channel_batch, table_config
from risuplink.estimation import (
    DegenerateConfigError,
    ModelError,
    lmmse_estimate,
    lmmse_model,
    mse_nmse,
    nmse_closed_form,
    nmse_rayleigh_ris_bs,
    pilot_matrix,
    pilot_observation,
    upsilon_model,
)

FROZEN = oracles.load()


def test_pilot_matrix_orthonormal():
    S = pilot_matrix(7, 4)
    np.testing.assert_allclose(S.conj().T @ S, np.eye(4), atol=1e-12)
    with pytest.raises(ModelError):
        pilot_matrix(3, 4)


def test_noiseless_observation_is_channel():
    cfg = table_config(M=4, N=4, K=2, sigma2=0.0)
    real = sample_channel_batch(cfg, 1, 0, 3)
    ph = PhaseShifts.random(4, 0)
    np.testing.assert_allclose(pilot_observation(real, cfg, ph), aggregated_channel(real, cfg, ph), atol=0)


def test_observation_noise_covariance():
    cfg = table_config(M=4, N=4, K=2)
    real = sample_channel_batch(cfg, 2, 0, 20_000)
    ph = PhaseShifts.random(4, 0)
    n = pilot_observation(real, cfg, ph) - aggregated_channel(real, cfg, ph)
    cov = np.einsum("ta,tb->ab", n[:, 0], n[:, 0].conj()) / n.shape[0]
    target = cfg.pilot_noise * np.eye(4)
    assert np.linalg.norm(cov - target) / np.linalg.norm(target) < 0.03


def test_projected_emi_covariance():
    cfg = correlated_config(M=3, N=4, K=2, rho_db=60.0, sigma2=0.0)
    real = sample_channel_batch(cfg, 4, 0, 20_000)
    ph = PhaseShifts.random(4, 1)
    n = pilot_observation(real, cfg, ph) - aggregated_channel(real, cfg, ph)
    cov = np.einsum("ta,tb->ab", n[:, 1], n[:, 1].conj()) / n.shape[0]
    um = upsilon_model(cfg, ph)
    d = cfg.delta
    scale = cfg.sigma_e2 * cfg.beta / (cfg.tau * cfg.p * (d + 1))
    target = scale * (d * um.emi_matrix + um.emi_trace * np.eye(3))
    assert np.linalg.norm(cov - target) / np.linalg.norm(target) < 0.05


@given(st.floats(0.0, 20.0), st.floats(0.0, 50.0), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_lmmse_model_invariants(delta, eps, seed):
    cfg = table_config(M=6, N=9, K=3, delta=delta, epsilon=eps)
    lm = lmmse_model(cfg, PhaseShifts.random(9, seed))
    from risuplink.channel import los_blocks

    H = los_blocks(cfg).Hbar2
    for k in range(3):
        A = lm.A[k]
        np.testing.assert_allclose(A, A.conj().T, atol=1e-14)
        np.testing.assert_allclose(A @ H, lm.e2[k] * H, atol=1e-12)
        assert np.trace(A).real == pytest.approx(6 * lm.e1[k], rel=1e-12)
        assert np.trace(A @ A).real == pytest.approx(6 * lm.e3[k], rel=1e-12)
    tol = 1e-12
    assert np.all(lm.e1 >= -tol) and np.all(lm.e1 <= lm.e2 + tol) and np.all(lm.e2 <= 1 + tol)
    assert np.all(lm.e3 >= -tol) and np.all(lm.e3 <= lm.e2**2 + tol)


def test_no_ris_path_reduces_to_direct_estimator():
    cfg = table_config(M=4, N=4, K=2, alpha=0.0)
    lm = lmmse_model(cfg, PhaseShifts.zeros(4))
    np.testing.assert_array_equal(lm.a1, 0.0)
    np.testing.assert_array_equal(lm.a3, 0.0)
    np.testing.assert_allclose(lm.a4, cfg.gamma_arr / (cfg.gamma_arr + cfg.pilot_noise))
    np.testing.assert_array_equal(lm.B, 0.0)
    real = sample_channel_batch(cfg, 0, 0, 2)
    obs = pilot_observation(real, cfg, PhaseShifts.zeros(4))
    q_hat = lmmse_estimate(obs, real, cfg, PhaseShifts.zeros(4)).q_hat
    np.testing.assert_allclose(q_hat, lm.a4[None, :, None] * obs, rtol=1e-12)


def test_noiseless_pilots_give_unit_e():
    cfg = table_config(M=4, N=4, K=2, sigma2=0.0)
    lm = lmmse_model(cfg, PhaseShifts.zeros(4))
    np.testing.assert_allclose([lm.e1, lm.e2, lm.e3], 1.0, rtol=1e-12)
    real = sample_channel_batch(cfg, 3, 0, 2)
    obs = pilot_observation(real, cfg, PhaseShifts.zeros(4))
    res = lmmse_estimate(obs, real, cfg, PhaseShifts.zeros(4))
    np.testing.assert_allclose(res.q_hat, aggregated_channel(real, cfg, PhaseShifts.zeros(4)), rtol=1e-12)


def test_rayleigh_ris_bs_e3():
    cfg = table_config(M=8, N=16, K=3, delta=0.0)
    lm = lmmse_model(cfg, PhaseShifts.random(16, 0))
    np.testing.assert_allclose(lm.e3, lm.e1**2, rtol=1e-12)
    a = cfg.N * cfg.beta * cfg.alpha_arr + cfg.gamma_arr
    np.testing.assert_allclose(lm.e1, a / (a + cfg.pilot_noise), rtol=1e-12)


def test_model_flag_mismatch():
    with pytest.raises(ModelError):
        lmmse_model(correlated_config(M=4, N=4, K=2), PhaseShifts.zeros(4))
    with pytest.raises(ModelError):
        upsilon_model(table_config(M=4, N=4, K=2), PhaseShifts.zeros(4))


def test_estimate_plus_error_is_channel(small_independent, small_correlated):
    for cfg in (small_independent, small_correlated):
        ph = PhaseShifts.random(cfg.N, 0)
        real = sample_channel_batch(cfg, 1, 0, 4)
        res = lmmse_estimate(pilot_observation(real, cfg, ph), real, cfg, ph)
        np.testing.assert_allclose(res.q_hat + res.error, aggregated_channel(real, cfg, ph), atol=1e-20)


@pytest.mark.parametrize("correlated", [False, True])
def test_orthogonality_principle(correlated):
    cfg = correlated_config(M=4, N=4, K=2) if correlated else table_config(M=4, N=4, K=2)
    ph = PhaseShifts.random(4, 3)
    real = sample_channel_batch(cfg, 5, 0, 20_000)
    res = lmmse_estimate(pilot_observation(real, cfg, ph), real, cfg, ph)
    x = np.einsum("tkm,tkm->tk", res.q_hat.conj(), res.error)
    mean = x.mean(axis=0)
    se = np.hypot(x.real.std(axis=0, ddof=1), x.imag.std(axis=0, ddof=1)) / np.sqrt(x.shape[0])
    assert np.all(np.abs(mean) < 3 * se)
    y = pilot_observation(real, cfg, ph)
    cross = np.einsum("ta,tb->ab", res.error[:, 0], y[:, 0].conj()) / x.shape[0]
    scale = np.sqrt(np.mean(np.abs(res.error[:, 0]) ** 2) * np.mean(np.abs(y[:, 0]) ** 2))
    assert np.max(np.abs(cross)) < 0.05 * scale


def test_unbiased_estimate():
    cfg = table_config(M=4, N=4, K=2)
    ph = PhaseShifts.random(4, 3)
    real = sample_channel_batch(cfg, 6, 0, 20_000)
    q_hat = lmmse_estimate(pilot_observation(real, cfg, ph), real, cfg, ph).q_hat
    lm = lmmse_model(cfg, ph)
    se = np.sqrt(np.var(q_hat, axis=0) / q_hat.shape[0])
    assert np.all(np.abs(q_hat.mean(axis=0) - lm.mean) < 5 * se)


def test_upsilon_identity_case():
    cfg = correlated_config(M=4, N=9, K=2, ris_correlation="identity", rho_db=-math.inf)
    cfg = table_config(**{**cfg.__dict__, "sigma_e2": 0.0})
    um = upsilon_model(cfg, PhaseShifts.random(9, 0))
    chat = cfg.beta * cfg.alpha_arr / (cfg.delta + 1)
    g = (chat * 9 + cfg.gamma_arr) / (chat * 9 + cfg.gamma_arr + cfg.pilot_noise)
    for k in range(2):
        np.testing.assert_allclose(um.Upsilon[k], g[k] * np.eye(4), atol=1e-14)


def test_upsilon_trace_rayleigh_with_emi():
    cfg = table_config(
        M=4, N=9, K=2, delta=0.0, epsilon=math.inf, correlated=True, ris_correlation="identity", sigma_e2=SIGMA2 * 1e3
    )
    um = upsilon_model(cfg, PhaseShifts.random(9, 2))
    chat = cfg.beta * cfg.alpha_arr
    s = cfg.pilot_noise
    expected = 4 * (9 * chat + cfg.gamma_arr) / (9 * chat + cfg.gamma_arr + s + 9 * cfg.sigma_e2 * cfg.beta / (cfg.tau * cfg.p))
    np.testing.assert_allclose(np.trace(um.Upsilon, axis1=1, axis2=2).real, expected, rtol=1e-12)


def test_upsilon_matches_explicit_inverse():
    cfg = correlated_config(M=4, N=4, K=2)
    um = upsilon_model(cfg, PhaseShifts(FROZEN["upsilon_theta"]))
    frozen = oracles.as_complex(FROZEN["upsilon_small"])
    np.testing.assert_allclose(um.Upsilon, frozen, rtol=1e-9, atol=1e-15)
    for k in range(2):
        np.testing.assert_allclose(um.Upsilon[k], um.Upsilon[k].conj().T, atol=1e-10)


def test_upsilon_degenerate():
    cfg = table_config(M=4, N=4, K=2, epsilon=math.inf, correlated=True, alpha=0.0, gamma=0.0, sigma2=0.0)
    with pytest.raises(DegenerateConfigError):
        upsilon_model(cfg, PhaseShifts.zeros(4))


def test_nmse_rayleigh_closed_form():
    cfg = table_config(M=8, N=16, K=4, delta=0.0)
    rep = mse_nmse(cfg, PhaseShifts.random(16, 0))
    np.testing.assert_allclose(rep.nmse, nmse_rayleigh_ris_bs(cfg), rtol=1e-12)
    np.testing.assert_allclose(rep.nmse, nmse_closed_form(cfg), rtol=1e-12)


def test_nmse_limits():
    base = table_config(M=8, N=16, K=2)
    noisy = table_config(M=8, N=16, K=2, sigma2=base.sigma2 * 1e8)
    assert np.all(mse_nmse(noisy).nmse > 0.99)
    clean = table_config(M=8, N=16, K=2, sigma2=base.sigma2 * 1e-12)
    assert np.all(mse_nmse(clean).nmse < 1e-6)


def test_trace_mse_large_n():
    ratios = []
    for n in (64, 1024, 4096, 65536):
        cfg = table_config(M=4, N=n, K=2)
        ratios.append(mse_nmse(cfg).trace_mse / (4 * cfg.pilot_noise))
    ratios = np.array(ratios)
    assert np.all(np.diff(ratios, axis=0) > 0)
    np.testing.assert_allclose(ratios[-1], 1.0, rtol=0.01)


@given(st.integers(0, 3), st.floats(0.0, 5.0))
@settings(max_examples=20, deadline=None)
def test_nmse_monotone(seed, delta):
    Ns = [4, 16, 64, 256]
    vals = np.array([mse_nmse(table_config(M=8, N=n, K=2, delta=delta)).nmse for n in Ns])
    assert np.all(np.diff(vals, axis=0) < 0)
    ps = [0.01, 0.1, 1.0, 10.0]
    vals = np.array([mse_nmse(table_config(M=8, N=16, K=2, delta=delta, p=p)).nmse for p in ps])
    assert np.all(np.diff(vals, axis=0) < 0)


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_nmse_in_unit_interval(seed):
    for cfg in (table_config(M=4, N=9, K=2), correlated_config(M=4, N=9, K=2)):
        n = mse_nmse(cfg, PhaseShifts.random(9, seed)).nmse
        assert np.all((n >= 0) & (n <= 1))
