"""Sample-moment oracle for the UatF bound and the Gaussian moment identities.

Every expectation is estimated term by term from fresh draws of the
channels, pilot noise and EMI.  Per-trial values are stored and reduced
once with ``np.mean`` so results do not depend on the chunk size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import (
    PhaseShifts,
    StreamFactory,
    SystemConfig,
    aggregated_channel,
    complex_normal,
    correlation_for,
    ris_bs_channel,
    sample_channel_batch,
)
from .estimation import lmmse_estimate, lmmse_model, pilot_observation, upsilon_model

MIN_TRIALS = 1000
MIN_IDENTITY_TRIALS = 10_000


class InsufficientTrialsError(ValueError):
    pass


@dataclass(frozen=True)
class McEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    trials: int
    seed: int


@dataclass(frozen=True)
class McTerms:
    """Term-wise sample means of the UatF expectations, per user."""

    signal: McEstimate
    leak: McEstimate
    noise: McEstimate
    interference: McEstimate  # (K, K), zero diagonal
    emi: McEstimate | None
    sinr: McEstimate
    inner_mean: np.ndarray  # E{q_hat_k^H q_k}


def _estimate(samples: np.ndarray, seed: int) -> McEstimate:
    n = samples.shape[0]
    mean = np.mean(samples, axis=0)
    se = np.std(samples, axis=0, ddof=1) / np.sqrt(n)
    return McEstimate(mean, se, n, seed)


def _trial_moments(config: SystemConfig, phase: PhaseShifts, seed: int, trials: int, chunk: int, perfect_csi: bool):
    """Per-trial inner products q_hat_k^H q_i, ||q_hat_k||^2 and EMI forms."""
    K = config.K
    inner = np.empty((trials, K, K), complex)
    norm2 = np.empty((trials, K))
    emi = np.empty((trials, K)) if config.correlated else None
    model = None
    if not perfect_csi:
        model = upsilon_model(config, phase) if config.correlated else lmmse_model(config, phase)
    if config.correlated:
        root = correlation_for(config).sqrt_R
    for start in range(0, trials, chunk):
        count = min(chunk, trials - start)
        real = sample_channel_batch(config, seed, start, count)
        q = aggregated_channel(real, config, phase)
        if perfect_csi:
            q_hat = q
        else:
            obs = pilot_observation(real, config, phase)
            q_hat = lmmse_estimate(obs, real, config, phase, model).q_hat
        sl = slice(start, start + count)
        inner[sl] = np.einsum("tkm,tim->tki", q_hat.conj(), q)
        norm2[sl] = np.sum(np.abs(q_hat) ** 2, axis=-1)
        if emi is not None:
            H = ris_bs_channel(real, config)
            # R^{1/2} Phi^H H^H q_hat_k
            v = np.einsum("ab,b,tmb,tkm->tka", root, phase.c.conj(), H.conj(), q_hat)
            emi[sl] = np.sum(np.abs(v) ** 2, axis=-1)
    return inner, norm2, emi


def uatf_sinr_mc(
    config: SystemConfig,
    phase: PhaseShifts,
    trials: int,
    seed: int,
    chunk: int = 2000,
    perfect_csi: bool = False,
) -> McTerms:
    """Monte Carlo estimate of every UatF term and the assembled SINR."""
    if trials < MIN_TRIALS:
        raise InsufficientTrialsError(f"need at least {MIN_TRIALS} trials, got {trials}")
    inner, norm2, emi = _trial_moments(config, phase, seed, trials, chunk, perfect_csi)
    K = config.K
    idx = np.arange(K)
    own = inner[:, idx, idx]
    own_mean = np.mean(own, axis=0)
    signal = np.abs(own_mean) ** 2
    abs2 = np.abs(inner) ** 2
    second = _estimate(abs2[:, idx, idx], seed)
    cross = abs2.copy()
    cross[:, idx, idx] = 0.0
    interference = _estimate(cross, seed)
    noise = _estimate(norm2, seed)
    emi_est = _estimate(emi, seed) if emi is not None else None

    # delta-method standard error of signal and SINR from the joint per-trial samples
    p, s2, se2 = config.p, config.sigma2, config.sigma_e2
    cols = [own.real, own.imag, abs2[:, idx, idx], cross.sum(axis=2), norm2]
    cols.append(emi if emi is not None else np.zeros_like(norm2))
    Z = np.stack(cols, axis=-1)  # (T, K, 6)
    mu = Z.mean(axis=0)
    S = mu[:, 0] ** 2 + mu[:, 1] ** 2
    den = p * (mu[:, 2] - S) + p * mu[:, 3] + se2 * mu[:, 5] + s2 * mu[:, 4]
    sinr = p * S / den
    grad = np.empty((K, 6))
    for j in (0, 1):
        grad[:, j] = 2 * p * mu[:, j] / den + p * S * 2 * p * mu[:, j] / den**2
    grad[:, 2] = -p * p * S / den**2
    grad[:, 3] = -p * p * S / den**2
    grad[:, 4] = -p * S * s2 / den**2
    grad[:, 5] = -p * S * se2 / den**2
    sinr_se = np.empty(K)
    sig_se = np.empty(K)
    for k in range(K):
        C = np.cov(Z[:, k, :], rowvar=False) / trials
        sinr_se[k] = np.sqrt(max(grad[k] @ C @ grad[k], 0.0))
        g = np.zeros(6)
        g[:2] = 2 * mu[k, :2]
        sig_se[k] = np.sqrt(max(g @ C @ g, 0.0))
    leak = McEstimate(second.mean - signal, second.stderr, trials, seed)
    return McTerms(
        McEstimate(signal, sig_se, trials, seed),
        leak,
        noise,
        interference,
        emi_est,
        McEstimate(sinr, sinr_se, trials, seed),
        own_mean,
    )


@dataclass(frozen=True)
class McRateReport:
    rate: np.ndarray
    stderr: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    sinr: McEstimate
    prelog: float
    z: float = 1.96

    @property
    def min_rate(self) -> float:
        return float(np.min(self.rate))


def rate_mc_report(config: SystemConfig, phase: PhaseShifts, trials: int, seed: int, z: float = 1.96, **kw) -> McRateReport:
    """Per-user rate with the prelog and a delta-method confidence interval."""
    terms = uatf_sinr_mc(config, phase, trials, seed, **kw)
    sinr = terms.sinr.mean
    rate = config.prelog * np.log2(1 + sinr)
    se = config.prelog * terms.sinr.stderr / (np.log(2) * (1 + sinr))
    return McRateReport(rate, se, rate - z * se, rate + z * se, terms.sinr, config.prelog, z)


# Gaussian moment identities -------------------------------------------------------


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    estimate: np.ndarray
    expected: np.ndarray
    stderr: np.ndarray
    max_z: float
    passed: bool


@dataclass(frozen=True)
class IdentityReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        return next(c for c in self.checks if c.name == name)


def _check(name, samples, expected, seed, z_limit):
    est = _estimate(samples, seed)
    expected = np.asarray(expected)
    diff = np.abs(est.mean - expected)
    se = np.maximum(np.abs(est.stderr), 1e-300)
    # complex entries: compare against the larger of real/imag stderr
    if np.iscomplexobj(samples):
        se_r = np.std(samples.real, axis=0, ddof=1) / np.sqrt(samples.shape[0])
        se_i = np.std(samples.imag, axis=0, ddof=1) / np.sqrt(samples.shape[0])
        se = np.maximum(np.hypot(se_r, se_i), 1e-300)
    zmax = float(np.max(diff / se))
    return IdentityCheck(name, est.mean, expected, se, zmax, zmax <= z_limit)


def _random_hermitian(gen, n):
    A = complex_normal(gen, (n, n))
    return 0.5 * (A + A.conj().T)


def moment_identity_suite(trials: int = 20_000, seed: int = 0, M: int = 4, N: int = 3, z_limit: float = 5.0) -> IdentityReport:
    """Sample checks of the complex Gaussian moment identities used by the closed forms."""
    if trials < MIN_IDENTITY_TRIALS:
        raise InsufficientTrialsError(f"need at least {MIN_IDENTITY_TRIALS} trials, got {trials}")
    streams = StreamFactory(seed)
    fixed = streams(0, 7)
    C_n = _random_hermitian(fixed, N)
    W_n = _random_hermitian(fixed, N)
    C_m = _random_hermitian(fixed, M)
    W_m = _random_hermitian(fixed, M)
    u8 = np.empty((trials, 8), complex)
    H = np.empty((trials, M, N), complex)
    for t in range(trials):
        g = streams(t + 1, 8)
        u8[t] = complex_normal(g, 8)
        H[t] = complex_normal(g, (M, N))
    checks = []
    checks.append(_check("fourth_moment_norm", np.sum(np.abs(u8) ** 2, axis=1) ** 2, 8**2 + 8, seed, z_limit))
    # E{H W H} with no conjugate vanishes (needs square dims: use the N x N leading block)
    Hs = H[:, :N, :N] if M >= N else H[:, :, :M]
    n_s = Hs.shape[1]
    Ws = W_n[:n_s, :n_s]
    checks.append(_check("no_conjugate_product", np.einsum("tab,bc,tcd->tad", Hs, Ws, Hs), np.zeros((n_s, n_s)), seed, z_limit))
    # E{H^H W H} = Tr{W} I_N
    checks.append(_check("quadratic_form", np.einsum("tma,mn,tnb->tab", H.conj(), W_m, H), np.trace(W_m) * np.eye(N), seed, z_limit))
    # E{H^H C H W H^H C H} = Tr{W} Tr{C^2} I_N + |Tr{C}|^2 W
    HCH = np.einsum("tma,mn,tnb->tab", H.conj(), C_m, H)
    sample = np.einsum("tab,bc,tcd->tad", HCH, W_n, HCH)
    expected = np.trace(W_n) * np.trace(C_m @ C_m) * np.eye(N) + abs(np.trace(C_m)) ** 2 * W_n
    checks.append(_check("hch_w_hch", sample, expected, seed, z_limit))
    # E{u u^H C u u^H} = C + Tr{C} I
    u = u8[:, :N]
    uCu = np.einsum("ta,ab,tb->t", u.conj(), C_n, u)
    sample = np.einsum("ta,t,tb->tab", u, uCu, u.conj())
    checks.append(_check("rank_one_sandwich", sample, C_n + np.trace(C_n) * np.eye(N), seed, z_limit))
    return IdentityReport(checks)
