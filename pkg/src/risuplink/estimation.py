"""LMMSE estimation of the aggregated user channels from uplink pilots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .channel import (
    BLOCK_PILOT_EMI,
    BLOCK_PILOT_NOISE,
    ChannelRealization,
    PhaseShifts,
    StreamFactory,
    SystemConfig,
    aggregated_channel,
    complex_normal,
    correlation_for,
    link_gains,
    los_blocks,
    ris_bs_channel,
)


class ModelError(ValueError):
    """Operation requested for the wrong channel model or regime."""


class DegenerateConfigError(ValueError):
    pass


def pilot_matrix(tau: int, K: int) -> np.ndarray:
    """First K columns of the normalised tau-point DFT, so S^H S = I_K."""
    if tau < K:
        raise ModelError(f"pilot length tau={tau} is shorter than K={K}; orthogonal pilots need tau >= K")
    t = np.arange(tau)[:, None]
    k = np.arange(K)[None, :]
    return np.exp(-2j * np.pi * t * k / tau) / np.sqrt(tau)


def pilot_observation(
    real: ChannelRealization, config: SystemConfig, phase: PhaseShifts, seed: int | None = None
) -> np.ndarray:
    """De-spread pilot observations y_p^k stacked as (..., K, M).

    Builds Y_p = sqrt(tau p) Q S^H + N (+ H_2 Phi V with EMI) and projects
    it on each user's pilot.
    """
    S = pilot_matrix(config.tau, config.K)
    q = aggregated_channel(real, config, phase)
    streams = StreamFactory(real.seed if seed is None else seed)
    trials = np.atleast_1d(real.trials)
    M, N, tau = config.M, config.N, config.tau
    noise = np.empty((len(trials), M, tau), complex)
    for i, t in enumerate(trials):
        noise[i] = complex_normal(streams(int(t), BLOCK_PILOT_NOISE), (M, tau))
    noise *= np.sqrt(config.sigma2)
    if config.correlated and config.sigma_e2 > 0:
        H = ris_bs_channel(real, config)
        H = H if real.batched else H[None]
        root = correlation_for(config).sqrt_R
        V = np.empty((len(trials), N, tau), complex)
        for i, t in enumerate(trials):
            V[i] = complex_normal(streams(int(t), BLOCK_PILOT_EMI), (N, tau))
        V = np.sqrt(config.sigma_e2) * np.einsum("ab,tbs->tas", root, V)
        noise = noise + np.einsum("tmn,tns->tms", H * phase.c, V)
    projected = np.einsum("tms,sk->tkm", noise, S) / np.sqrt(tau * config.p)
    if not real.batched:
        projected = projected[0]
    return q + projected


@dataclass(frozen=True)
class LmmseModel:
    """Estimator coefficients of the independent model, all per user."""

    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    a4: np.ndarray
    a5: np.ndarray
    a6: np.ndarray
    A: np.ndarray  # (K, M, M)
    B: np.ndarray  # (K, M)
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    mean: np.ndarray  # E{q_k}, (K, M)


def _safe_div(num, den):
    num, den = np.broadcast_arrays(np.asarray(num, float), np.asarray(den, float))
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den != 0)
    return out


def estimator_scalars(config: SystemConfig, s: float | None = None, M: int | None = None, N: int | None = None):
    """(a1, a2, a3, a4) for the independent model.

    ``s`` overrides sigma^2/(tau p); ``M``/``N`` override dimensions so that
    scaling-law code can reuse the same expressions.
    """
    g = link_gains(config)
    s = config.pilot_noise if s is None else s
    M = config.M if M is None else M
    N = config.N if N is None else N
    a1 = N * g.los_nlos
    a2 = N * g.via_scatter + config.gamma_arr
    a3 = _safe_div(a1 * s, (a2 + s) * (a2 + s + M * a1))
    a4 = _safe_div(a2, a2 + s)
    return a1, a2, a3, a4


def e_coefficients(a3, a4, M):
    e1 = a3 + a4
    e2 = M * a3 + a4
    e3 = M * a3**2 + 2 * a3 * a4 + a4**2
    return e1, e2, e3


def lmmse_model(config: SystemConfig, phase: PhaseShifts) -> LmmseModel:
    if config.correlated:
        raise ModelError("lmmse_model covers the independent model; use upsilon_model")
    los = los_blocks(config)
    g = link_gains(config)
    M, s = config.M, config.pilot_noise
    a1, a2, a3, a4 = estimator_scalars(config)
    a5 = _safe_div(a1 * s**2, (a2 + s) * (a2 + s + M * a1))
    a6 = _safe_div(a2 * s, a2 + s)
    e1, e2, e3 = e_coefficients(a3, a4, M)
    P = np.outer(los.a_M, los.a_M.conj())
    eye = np.eye(M)
    A = a3[:, None, None] * P + a4[:, None, None] * eye
    f = (los.hbar * phase.c) @ los.a_N.conj()  # f_k = a_N^H Phi hbar_k
    mean = np.sqrt(g.los_los)[:, None] * los.a_M[None, :] * f[:, None]
    B = mean - np.einsum("kij,kj->ki", A, mean)
    return LmmseModel(a1, a2, a3, a4, a5, a6, A, B, e1, e2, e3, mean)


@dataclass(frozen=True)
class UpsilonModel:
    """Correlated-model estimator: q_hat = mean + Upsilon (y - mean)."""

    Upsilon: np.ndarray  # (K, M, M)
    inner_inverse: np.ndarray  # (K, M, M), Upsilon / psi1
    psi1: np.ndarray
    chat: np.ndarray
    mean: np.ndarray  # (K, M)
    emi_trace: float  # Tr{R_ris Phi R_emi Phi^H}
    emi_matrix: np.ndarray  # Hbar2 Phi R_emi Phi^H Hbar2^H


@dataclass(frozen=True)
class CorrelatedScalars:
    """Power scalings of the correlated model.

    ``los`` is chat_k*delta, ``nlos`` is chat_k, ``emi_los``/``emi_nlos`` are
    sigma_e^2 beta delta/(tau p (delta+1)) and sigma_e^2 beta/(tau p (delta+1)).
    """

    los: np.ndarray
    nlos: np.ndarray
    emi_los: float
    emi_nlos: float
    ris_bs_los: float
    ris_bs_nlos: float


def correlated_scalars(config: SystemConfig) -> CorrelatedScalars:
    g = link_gains(config)
    a = config.alpha_arr
    tp = config.tau * config.p
    return CorrelatedScalars(
        los=g.ris_bs_los * a,
        nlos=g.ris_bs_nlos * a,
        emi_los=config.sigma_e2 * g.ris_bs_los / tp,
        emi_nlos=config.sigma_e2 * g.ris_bs_nlos / tp,
        ris_bs_los=g.ris_bs_los,
        ris_bs_nlos=g.ris_bs_nlos,
    )


def upsilon_model(config: SystemConfig, phase: PhaseShifts) -> UpsilonModel:
    if not config.correlated:
        raise ModelError("upsilon_model covers the correlated model; use lmmse_model")
    los = los_blocks(config)
    corr = correlation_for(config)
    cs = correlated_scalars(config)
    c = phase.c
    M = config.M
    x = los.hbar * c  # Phi hbar_k, (K, N)
    f2 = np.real(np.einsum("kn,nm,km->k", x.conj(), corr.R_ris, x))
    psi1 = cs.nlos * f2 + config.gamma_arr
    emi_trace = float(np.real(np.trace(corr.R_ris @ (c[:, None] * corr.R_emi * c.conj()[None, :]))))
    G = los.Hbar2 * c  # Hbar2 Phi
    X = G @ corr.R_emi @ G.conj().T
    X = 0.5 * (X + X.conj().T)
    eye = np.eye(M)
    Ups = np.empty((config.K, M, M), complex)
    inner = np.empty_like(Ups)
    for k in range(config.K):
        W = (psi1[k] + config.pilot_noise + cs.emi_nlos * emi_trace) * eye + cs.emi_los * X
        if not np.all(np.isfinite(W)) or not np.any(W):
            raise DegenerateConfigError("estimator inner matrix is singular")
        Winv = sla.solve(W, eye, assume_a="her")
        Winv = 0.5 * (Winv + Winv.conj().T)
        inner[k] = Winv
        Ups[k] = psi1[k] * Winv
    f = (los.hbar * c) @ los.a_N.conj()
    mean = np.sqrt(cs.los)[:, None] * los.a_M[None, :] * f[:, None]
    return UpsilonModel(Ups, inner, psi1, cs.nlos, mean, emi_trace, X)


@dataclass(frozen=True)
class EstimateResult:
    q_hat: np.ndarray
    error: np.ndarray
    observation: np.ndarray


def lmmse_estimate(
    obs: np.ndarray, real: ChannelRealization, config: SystemConfig, phase: PhaseShifts, model=None
) -> EstimateResult:
    """Apply the LMMSE estimator of the configured model to observations."""
    q = aggregated_channel(real, config, phase)
    if obs.shape != q.shape:
        raise ValueError(f"observation shape {obs.shape} does not match channel shape {q.shape}")
    if config.correlated:
        um = model if model is not None else upsilon_model(config, phase)
        q_hat = um.mean + np.einsum("kij,...kj->...ki", um.Upsilon, obs - um.mean)
    else:
        lm = model if model is not None else lmmse_model(config, phase)
        q_hat = np.einsum("kij,...kj->...ki", lm.A, obs) + lm.B
    return EstimateResult(q_hat, q - q_hat, obs)


@dataclass(frozen=True)
class MseReport:
    trace_mse: np.ndarray
    nmse: np.ndarray
    trace_cov: np.ndarray


def mse_nmse(config: SystemConfig, phase: PhaseShifts | None = None) -> MseReport:
    """Trace of the error covariance and NMSE per user.

    The correlated NMSE uses Tr{MSE}/Tr{Cov{q}}, mirroring the independent case.
    """
    phase = phase if phase is not None else PhaseShifts.zeros(config.N)
    M = config.M
    if config.correlated:
        um = upsilon_model(config, phase)
        tr_ups = np.real(np.trace(um.Upsilon, axis1=1, axis2=2))
        trace_mse = um.psi1 * (M - tr_ups)
        trace_cov = M * um.psi1
    else:
        lm = lmmse_model(config, phase)
        trace_mse = M * (lm.a5 + lm.a6)
        trace_cov = M * (lm.a1 + lm.a2)
    return MseReport(trace_mse, _safe_div(trace_mse, trace_cov), trace_cov)


def nmse_closed_form(config: SystemConfig) -> np.ndarray:
    """NMSE written directly in terms of a1, a2 and the pilot noise."""
    a1, a2, _, _ = estimator_scalars(config)
    s, M = config.pilot_noise, config.M
    num = s * (M * a1 * a2 + a2**2 + (a1 + a2) * s)
    den = (a2 + s) * (a2 + s + M * a1) * (a1 + a2)
    return _safe_div(num, den)


def nmse_rayleigh_ris_bs(config: SystemConfig) -> np.ndarray:
    """NMSE when the RIS-BS link has no line-of-sight part."""
    if config.delta != 0:
        raise ModelError("this specialisation requires delta = 0")
    s = config.pilot_noise
    return s / (config.N * config.beta * config.alpha_arr + config.gamma_arr + s)
