"""Instantaneous-CSI comparison scheme for a single user.

Each coherence interval estimates the cascaded channel G = H_2 diag(h)
and the direct channel d with N + 1 pilot symbols, then alternates MRC
combining with per-element phase alignment.

The two-phase estimator itself is not modelled.  It is replaced by an
entrywise surrogate: every entry of G and d is observed once in additive
Gaussian noise of variance s = sigma^2 / p (one pilot symbol per unknown
column) and estimated by scalar LMMSE around its known statistical mean,
so the error variance per entry is v s / (v + s) with v the entry
variance about the mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import (
    BLOCK_PILOT_NOISE,
    StreamFactory,
    SystemConfig,
    complex_normal,
    ris_bs_channel,
    sample_channels,
    user_ris_channels,
)
from .estimation import ModelError

ERROR_MODEL = "gaussian-surrogate: entrywise LMMSE from one CN(0, sigma^2/p) observation per entry"


@dataclass(frozen=True)
class BaselineReport:
    avg_rate_with_overhead: float
    avg_rate_idealized: float
    intervals: int
    error_model: str = ERROR_MODEL
    snr: np.ndarray = field(default=None, repr=False)
    iterations: np.ndarray = field(default=None, repr=False)


def mmse_error_variance(entry_var, s: float):
    entry_var = np.asarray(entry_var, float)
    return np.where(entry_var > 0, entry_var * s / (entry_var + s), 0.0)


def _cascaded_moments(config: SystemConfig):
    """Mean and per-entry variance of G = H_2 diag(h) about its mean."""
    from .channel import los_blocks, path_weights

    w = path_weights(config)
    los = los_blocks(config)
    mean = w.ris_bs_los * w.user_los[0] * los.Hbar2 * los.hbar[0][None, :]
    var = config.beta * config.alpha[0] - np.abs(mean) ** 2
    return mean, np.maximum(var, 0.0)


@dataclass(frozen=True)
class AlternatingResult:
    v: np.ndarray
    w: np.ndarray
    history: list  # normalised desired-signal power after each half-step
    iterations: int


def alternating_alignment(G_hat: np.ndarray, d_hat: np.ndarray, tol: float = 1e-6, max_iter: int = 100, v0=None) -> AlternatingResult:
    """Alternate w = G_hat v + d_hat with phase alignment of w^H G_hat v to w^H d_hat.

    The recorded objective is |w^H (G_hat v + d_hat)|^2 / ||w||^2, which
    neither half-step can decrease.
    """
    N = G_hat.shape[1]
    v = np.ones(N, complex) if v0 is None else np.asarray(v0, complex)
    w = G_hat @ v + d_hat
    history = [float(np.vdot(w, w).real)]
    it = 0
    for it in range(1, max_iter + 1):
        ref = np.angle(np.vdot(w, d_hat)) if np.any(d_hat) else 0.0
        v = np.exp(1j * (ref - np.angle(w.conj() @ G_hat)))
        q = G_hat @ v + d_hat
        history.append(float(abs(np.vdot(w, q)) ** 2 / np.vdot(w, w).real))
        w = q
        history.append(float(np.vdot(w, w).real))
        prev = history[-3]
        if history[-1] - prev <= tol * max(prev, 1e-300):
            break
    return AlternatingResult(v, w, history, it)


def _prelog(fraction_used: float) -> float:
    return max(0.0, 1.0 - fraction_used)


def instantaneous_scheme(config: SystemConfig, intervals: int, seed: int, trials_per_interval: int = 1) -> BaselineReport:
    """Average rate of the per-interval design with and without the N+1 pilot overhead."""
    if config.K != 1:
        raise ModelError("the instantaneous-CSI baseline covers a single user")
    if config.correlated:
        raise ModelError("the instantaneous-CSI baseline uses the independent model")
    N, M = config.N, config.M
    over = _prelog((N + 1) / config.tau_c)
    ideal = _prelog(1 / config.tau_c)
    s = config.sigma2 / config.p
    mean_G, var_G = _cascaded_moments(config)
    gain_G = var_G / (var_G + s)
    var_d = config.gamma[0]
    gain_d = var_d / (var_d + s) if var_d > 0 else 0.0
    streams = StreamFactory(seed)
    total = intervals * trials_per_interval
    snr = np.empty(total)
    iters = np.empty(total, int)
    for t in range(total):
        real = sample_channels(config, seed, t)
        H = ris_bs_channel(real, config)
        h = user_ris_channels(real, config)[0]
        d = np.sqrt(config.gamma[0]) * real.dtilde[0]
        G = H * h[None, :]
        gen = streams(t, BLOCK_PILOT_NOISE)
        G_hat = mean_G + gain_G * (G + np.sqrt(s) * complex_normal(gen, (M, N)) - mean_G)
        d_hat = gain_d * (d + np.sqrt(s) * complex_normal(gen, M))
        G_err, d_err = G - G_hat, d - d_hat
        res = alternating_alignment(G_hat, d_hat)
        w, v = res.w, res.v
        sig = abs(np.vdot(w, G_hat @ v + d_hat)) ** 2
        leak = abs(np.vdot(w, G_err @ v + d_err)) ** 2
        snr[t] = config.p * sig / (config.p * leak + config.sigma2 * np.vdot(w, w).real)
        iters[t] = res.iterations
    mean_log = float(np.mean(np.log2(1 + snr)))
    return BaselineReport(over * mean_log, ideal * mean_log, intervals, ERROR_MODEL, snr, iters)
