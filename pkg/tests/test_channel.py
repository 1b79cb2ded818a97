import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from risuplink.channel import (
    ConfigError,
    DimensionError,
    PhaseShifts,
    aggregated_channel,
    aggregated_channel_terms,
    array_response_bs,
    array_response_ris,
    dbm_to_watt,
    los_blocks,
    sample_channel_batch,
    sample_channels,
    scenario_geometry,
    sinc_correlation,
    table_config,
)

FROZEN = oracles.load()


def test_bs_response_trivial_cases():
    np.testing.assert_allclose(array_response_bs(1, 0.5, 1.0, 2.0), [1.0])
    np.testing.assert_allclose(array_response_bs(2, 0.5, np.pi / 2, np.pi / 2), [1.0, -1.0], atol=1e-15)


def test_bs_response_matches_frozen_loop():
    a = array_response_bs(8, 0.5, 6.28, 4.21)
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
    np.testing.assert_allclose(a, oracles.as_complex(FROZEN["bs_response_M8"]), atol=1e-12)
    np.testing.assert_allclose(oracles.bs_response_loop(8, 0.5, 6.28, 4.21), a, atol=1e-12)


def test_ris_response():
    np.testing.assert_allclose(array_response_ris(1, 0.5, 0.3, 0.4), [1.0])
    np.testing.assert_allclose(array_response_ris(4, 0.5, np.pi / 2, np.pi / 2), [1, 1, -1, -1], atol=1e-12)
    a = array_response_ris(16, 0.5, 4.17, 0.09)
    np.testing.assert_allclose(a, oracles.as_complex(FROZEN["ris_response_N16"]), atol=1e-12)


@pytest.mark.parametrize("bad", [0, -3])
def test_bs_response_rejects_bad_size(bad):
    with pytest.raises(DimensionError):
        array_response_bs(bad, 0.5, 0.1, 0.1)


def test_ris_response_rejects_non_square():
    with pytest.raises(DimensionError):
        array_response_ris(10, 0.5, 0.1, 0.1)
    with pytest.raises(DimensionError):
        sinc_correlation(10, 0.5)


def test_sinc_half_wavelength_decorrelates_rows_and_columns():
    # same-row and same-column pairs sit at integer multiples of lambda/2;
    # diagonal pairs do not, so R is close to but not exactly the identity
    R = sinc_correlation(16, 0.5).R_ris
    idx = np.arange(16)
    row, col = idx // 4, idx % 4
    aligned = (row[:, None] == row[None, :]) | (col[:, None] == col[None, :])
    off = aligned & ~np.eye(16, dtype=bool)
    assert np.max(np.abs(R[off])) < 1e-15
    assert R[0, 5] == pytest.approx(np.sinc(np.sqrt(2.0)), abs=1e-15)
    assert np.max(np.abs(R - np.eye(16))) < 0.25


def test_sinc_quarter_wavelength():
    R = sinc_correlation(4, 0.25).R_ris
    assert R[0, 1] == pytest.approx(2 / np.pi, abs=1e-12)
    np.testing.assert_array_equal(np.diag(R), 1.0)
    np.testing.assert_allclose(sinc_correlation(16, 0.25).R_ris, FROZEN["sinc_N16_quarter"], atol=1e-14)


@given(st.sampled_from([4, 9, 16, 25]), st.floats(0.02, 1.0))
@settings(max_examples=30, deadline=None)
def test_sinc_invariants(N, spacing):
    cm = sinc_correlation(N, spacing)
    R = cm.R_ris
    np.testing.assert_array_equal(R, R.T)
    np.testing.assert_allclose(np.diag(R), 1.0)
    assert cm.min_eigenvalue > -1e-10
    err = np.linalg.norm(cm.sqrt_R @ cm.sqrt_R - R) / np.linalg.norm(R)
    assert err < 1e-9 or cm.min_eigenvalue < 1e-12


def test_adjacent_correlation_grows_as_spacing_shrinks():
    vals = [sinc_correlation(4, s).R_ris[0, 1] for s in (0.5, 0.4, 0.3, 0.2, 0.1, 0.05)]
    assert np.all(np.diff(vals) > 0)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30))
def test_phase_shifts_unit_modulus(theta):
    ph = PhaseShifts(np.array(theta))
    np.testing.assert_allclose(np.abs(ph.c), 1.0, atol=1e-12)
    np.testing.assert_allclose(ph.Phi.conj().T @ ph.Phi, np.eye(len(theta)), atol=1e-12)


def test_los_blocks_unit_modulus():
    los = los_blocks(table_config(M=8, N=16, K=4))
    for arr in (los.a_M, los.a_N, los.Hbar2, los.hbar):
        np.testing.assert_allclose(np.abs(arr), 1.0, atol=1e-12)


def test_config_validation_lists_all_problems():
    with pytest.raises(ConfigError) as exc:
        table_config(M=4, N=10, K=4, tau=2)
    text = " ".join(exc.value.problems)
    assert "perfect square" in text and "tau" in text


def test_config_rejects_nan_epsilon():
    with pytest.raises(ConfigError):
        table_config(M=4, N=4, K=2, epsilon=(float("nan"), 1.0))


def test_dbm_conversion():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(-104.0) == pytest.approx(3.981e-14, rel=1e-3)


def test_geometry():
    geo = scenario_geometry(20.0, 700.0, 8)
    k = np.arange(1, 9)
    expected = (700 - 20 * np.cos(np.pi * k / 9)) ** 2 + (20 * np.sin(np.pi * k / 9)) ** 2
    np.testing.assert_allclose(geo.d_ub**2, expected, rtol=1e-12)
    np.testing.assert_allclose(geo.alpha, 2.5e-6, rtol=1e-12)
    assert geo.beta == pytest.approx(1e-3 * 700**-2.5)
    np.testing.assert_allclose(scenario_geometry(0.0, 700.0, 3).d_ub, 700.0)
    with pytest.raises(ValueError):
        scenario_geometry(20.0, -1.0)


def test_sampling_is_pure():
    cfg = table_config(M=4, N=4, K=2)
    a, b = sample_channels(cfg, 5, 3), sample_channels(cfg, 5, 3)
    np.testing.assert_array_equal(a.Htilde2, b.Htilde2)
    np.testing.assert_array_equal(a.htilde, b.htilde)
    batch = sample_channel_batch(cfg, 5, 0, 6)
    np.testing.assert_array_equal(batch.Htilde2[3], a.Htilde2)


def test_scattered_block_moments():
    cfg = table_config(M=4, N=4, K=1)
    H = sample_channel_batch(cfg, 0, 0, 20_000).Htilde2
    assert np.max(np.abs(H.mean(axis=0))) < 0.02
    gen = np.random.default_rng(1)
    A = gen.standard_normal((4, 4)) + 1j * gen.standard_normal((4, 4))
    W = A @ A.conj().T  # Hermitian PSD keeps Tr{W} away from zero
    est = np.einsum("tmn,nk,tlk->tml", H, W, H.conj()).mean(axis=0) / np.trace(W).real
    assert np.linalg.norm(est - np.eye(4)) / 2.0 < 0.03


def test_correlated_column_covariance():
    cfg = table_config(M=2, N=9, K=1, epsilon=math.inf, correlated=True, d_ris=0.25)
    H = sample_channel_batch(cfg, 0, 0, 20_000).Htilde2
    rows = H[:, 0, :]
    cov = np.einsum("ta,tb->ab", rows.conj(), rows) / rows.shape[0]
    R = sinc_correlation(9, 0.25).R_ris
    assert np.linalg.norm(cov - R) / np.linalg.norm(R) < 0.05


def test_deterministic_channel():
    cfg = table_config(M=4, N=4, K=2, delta=math.inf, epsilon=math.inf, gamma=0.0)
    ph = PhaseShifts.random(4, 0)
    real = sample_channels(cfg, 0, 0)
    q = aggregated_channel(real, cfg, ph)
    los = los_blocks(cfg)
    expected = np.sqrt(cfg.beta * np.asarray(cfg.alpha))[:, None] * (los.Hbar2 @ (ph.c * los.hbar).T).T
    np.testing.assert_allclose(q, expected, rtol=1e-12)


def test_no_ris_path():
    cfg = table_config(M=4, N=4, K=2, alpha=0.0)
    real = sample_channels(cfg, 2, 0)
    q = aggregated_channel(real, cfg, PhaseShifts.random(4, 1))
    np.testing.assert_allclose(q, np.sqrt(cfg.gamma_arr)[:, None] * real.dtilde)


def test_aggregated_equals_term_reassembly():
    cfg = table_config(M=4, N=4, K=3)
    real = sample_channels(cfg, 9, 1)
    ph = PhaseShifts.random(4, 2)
    q = aggregated_channel(real, cfg, ph)
    terms = aggregated_channel_terms(real, cfg, ph)
    np.testing.assert_allclose(sum(terms.values()), q, rtol=1e-12)
    # scalar-loop reassembly
    b, d = cfg.beta, cfg.delta
    for k in range(3):
        a, e = cfg.alpha[k], cfg.epsilon[k]
        H = math.sqrt(b * d / (d + 1)) * real.Hbar2 + math.sqrt(b / (d + 1)) * real.Htilde2
        h = math.sqrt(a * e / (e + 1)) * real.hbar[k] + math.sqrt(a / (e + 1)) * real.htilde[k]
        ref = np.array([sum(H[m, n] * ph.c[n] * h[n] for n in range(4)) for m in range(4)]) + math.sqrt(cfg.gamma[k]) * real.dtilde[k]
        np.testing.assert_allclose(q[k], ref, rtol=1e-12)
