"""Closed-form use-and-then-forget (UatF) rates under LMMSE estimation and MRC.

Three engines share one output record:

* ``rate_independent``: spatially independent Rician channels, any Rician
  factors including the infinite (pure line-of-sight) flags.
* ``rate_rayleigh_risbs``: the simplified form when the RIS-BS link is
  pure scattering (delta = 0); the rate no longer depends on the phases.
* ``rate_correlated``: sinc-correlated RIS-BS scattering plus RIS-borne EMI
  with line-of-sight user-RIS links.

Every engine returns the individual expectation terms so that they can be
checked against Monte Carlo sample moments one by one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channel import (
    LinkGains,
    PhaseShifts,
    SystemConfig,
    correlation_for,
    link_gains,
    los_blocks,
)
from .estimation import (
    CorrelatedScalars,
    ModelError,
    UpsilonModel,
    correlated_scalars,
    e_coefficients,
    estimator_scalars,
    upsilon_model,
)


@dataclass(frozen=True)
class RateBreakdown:
    """Per-user expectation terms of the UatF bound.

    ``interference[k, i]`` is the interference of user i on user k (zero
    diagonal).  ``emi`` is ``None`` for the independent model.
    """

    signal: np.ndarray
    leak: np.ndarray
    noise: np.ndarray
    interference: np.ndarray
    emi: np.ndarray | None
    sinr: np.ndarray
    rate: np.ndarray
    prelog: float
    components: dict = field(default_factory=dict, repr=False)

    @property
    def min_rate(self) -> float:
        return float(np.min(self.rate))


def assemble_sinr(p, sigma2, signal, leak, interference, noise, sigma_e2=0.0, emi=None):
    """SINR = p*signal / (p*leak + p*sum_i I + sigma_e^2*emi + sigma^2*noise)."""
    den = p * leak + p * np.sum(interference, axis=-1) + sigma2 * noise
    if emi is not None:
        den = den + sigma_e2 * emi
    return p * signal / den


def _breakdown(config, signal, leak, interference, noise, emi=None, components=None):
    sinr = assemble_sinr(config.p, config.sigma2, signal, leak, interference, noise, config.sigma_e2, emi)
    rate = config.prelog * np.log2(1.0 + sinr)
    return RateBreakdown(signal, leak, noise, interference, emi, sinr, rate, config.prelog, components or {})


# f_k and its phase-sum form -------------------------------------------------


def f_values(config: SystemConfig, phase: PhaseShifts) -> np.ndarray:
    """f_k = a_N^H Phi hbar_k for every user."""
    los = los_blocks(config)
    return (los.hbar * phase.c) @ los.a_N.conj()


def f_k(phase: PhaseShifts, config: SystemConfig, k: int) -> complex:
    return complex(f_values(config, phase)[k])


def zeta(config: SystemConfig, k: int) -> np.ndarray:
    """Per-element phase offsets so that f_k = sum_n exp(j(zeta_n + theta_n))."""
    side = config.side
    n = np.arange(config.N)
    row, col = n // side, n % side
    az_k, el_k = config.angle_users[k]
    az_t, el_t = config.angle_t
    term = row * (np.sin(el_k) * np.sin(az_k) - np.sin(el_t) * np.sin(az_t)) + col * (np.cos(el_k) - np.cos(el_t))
    return 2 * np.pi * config.d_ris * term


def f_phase_sum(phase: PhaseShifts, config: SystemConfig, k: int) -> complex:
    return complex(np.sum(np.exp(1j * (zeta(config, k) + phase.theta))))


def gram_los(config: SystemConfig) -> np.ndarray:
    """G[k, i] = hbar_k^H hbar_i."""
    h = los_blocks(config).hbar
    return h.conj() @ h.T


# Independent model -----------------------------------------------------------


@dataclass(frozen=True)
class EstimationQuality:
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    s: float  # sigma^2 / (tau p)


def estimation_quality(config: SystemConfig, perfect_csi: bool = False) -> EstimationQuality:
    if perfect_csi:
        one = np.ones(config.K)
        return EstimationQuality(one, one, one, 0.0)
    _, _, a3, a4 = estimator_scalars(config)
    e1, e2, e3 = e_coefficients(a3, a4, config.M)
    return EstimationQuality(e1, e2, e3, config.pilot_noise)


@dataclass(frozen=True)
class IndependentGradientCoefficients:
    """Coefficients expressing leakage and interference in the f-products.

    E_leak[k] = s_k11 |f_k|^2 + const and
    I[k, i] = s5 |f_k|^2 |f_i|^2 + s6 |f_k|^2 + s7 |f_i|^2
              + s8 conj(f_k) f_i + s9 conj(f_i) f_k + const.
    """

    s5: np.ndarray
    s6: np.ndarray
    s7: np.ndarray
    s8: np.ndarray
    s9: np.ndarray
    s11: np.ndarray
    noise_slope: np.ndarray  # dE_noise / d|f_k|^2


def _independent_pieces(g: LinkGains, gamma, M, N, q: EstimationQuality, f, gram):
    """Every printed group of the independent-model expectations.

    ``f`` is the complex vector of f_k values, ``gram`` the line-of-sight
    Gram matrix.  Returns (noise, leak_groups, interference_groups).
    """
    LL, LN, NL, NN = g.los_los, g.los_nlos, g.nlos_los, g.nlos_nlos
    VS = NL + NN
    e1, e2, e3, s = q.e1, q.e2, q.e3, q.s
    x = np.abs(f) ** 2

    noise = M * (x * LL + N * LN * e2 + (N * VS + gamma) * e1)

    leak = {
        "los_los_a": M * x * (N * (M * LL * LN + LL * NL + LL * NN) * (e2**2 + 1) + 2 * LL * NN * (M * e1 + e2) * (e2 + 1)),
        "los_los_b": M * x * LL * (gamma + (gamma + s) * e2**2),
        "los_scat": M**2 * N**2 * LN**2 * e2**2,
        "mixed": M * N**2 * (2 * LN * VS * e2**2 + VS**2 * e3),
        "scat_e1": M**2 * N * ((2 * NN * NL + NN**2) * e1**2 + 2 * NN * LN * e1 * e2),
        "scat_e3": M * N * (2 * NN * LN * e2**2 + (2 * NN * NL + NN**2) * e3 + (2 * gamma + s) * (LN * e2**2 + VS * e3)),
        "direct": M * gamma * (gamma + s) * e3,
    }

    # k indexes rows (the observed user), i indexes columns (interferer)
    c = lambda v: v[:, None]  # noqa: E731
    r = lambda v: v[None, :]  # noqa: E731
    cross = np.conj(f)[:, None] * f[None, :] * np.conj(gram)  # conj(f_k) f_i hbar_i^H hbar_k
    interference = {
        "los_los": M**2 * c(x) * r(x) * c(LL) * r(LL),
        "user_los": M * c(x) * c(LL) * (M * N * r(LN) + N * r(NL) + N * r(NN) + 2 * M * c(e1) * r(NN) + r(gamma)),
        "interferer_los": M
        * r(x)
        * r(LL)
        * (c(e2) * (M * N * c(LN) * c(e2) + N * c(NL) * c(e2) + N * c(NN) * c(e2) + 2 * M * c(e1) * c(NN)) + (c(gamma) + s) * c(e2) ** 2),
        "los_scat": M**2 * N**2 * c(LN) * r(LN) * c(e2) ** 2,
        "mixed": M * N**2 * ((c(LN) * r(VS) + r(LN) * c(VS)) * c(e2) ** 2 + c(VS) * r(VS) * c(e3)),
        "scat_e1": M**2 * N * c(e1) * ((c(NL) * r(NN) + c(NN) * r(NL) + c(NN) * r(NN)) * c(e1) + 2 * c(NN) * r(LN) * c(e2)),
        "gram": M**2 * c(e1) * (c(NL) * r(NL) * np.abs(gram) ** 2 * c(e1) + 2 * c(LL) * r(NL) * np.real(cross)),
        "direct_mixed": M * N * ((c(gamma) + s) * (r(LN) * c(e2) ** 2 + r(VS) * c(e3)) + r(gamma) * (c(LN) * c(e2) ** 2 + c(VS) * c(e3))),
        "direct": M * r(gamma) * (c(gamma) + s) * c(e3),
    }
    for v in interference.values():
        np.fill_diagonal(v, 0.0)
    return noise, leak, interference


def independent_gradient_coefficients(config: SystemConfig, perfect_csi: bool = False) -> IndependentGradientCoefficients:
    g = link_gains(config)
    q = estimation_quality(config, perfect_csi)
    gamma = config.gamma_arr
    M, N = config.M, config.N
    LL, LN, NL, NN = g.los_los, g.los_nlos, g.nlos_los, g.nlos_nlos
    e1, e2, s = q.e1, q.e2, q.s
    c = lambda v: v[:, None]  # noqa: E731
    r = lambda v: v[None, :]  # noqa: E731
    s5 = M**2 * c(LL) * r(LL)
    s6 = M * c(LL) * (M * N * r(LN) + N * r(NL) + N * r(NN) + 2 * M * c(e1) * r(NN) + r(gamma))
    s7 = M * r(LL) * (c(e2) * (M * N * c(LN) * c(e2) + N * c(NL) * c(e2) + N * c(NN) * c(e2) + 2 * M * c(e1) * c(NN)) + (c(gamma) + s) * c(e2) ** 2)
    gram = gram_los(config)
    s8 = M**2 * c(e1) * c(LL) * r(NL) * np.conj(gram)
    s9 = np.conj(s8)
    s11 = M * (N * (M * LL * LN + LL * NL + LL * NN) * (e2**2 + 1) + 2 * LL * NN * (M * e1 + e2) * (e2 + 1)) + M * LL * (
        gamma + (gamma + s) * e2**2
    )
    for m in (s5, s6, s7, s8, s9):
        np.fill_diagonal(m, 0.0)
    return IndependentGradientCoefficients(s5, s6, s7, s8, s9, s11, M * LL)


def independent_terms(config: SystemConfig, f: np.ndarray, perfect_csi: bool = False) -> RateBreakdown:
    """UatF terms of the independent model for given f_k values."""
    g = link_gains(config)
    q = estimation_quality(config, perfect_csi)
    noise, leak_groups, int_groups = _independent_pieces(
        g, config.gamma_arr, config.M, config.N, q, np.asarray(f, complex), gram_los(config)
    )
    leak = sum(leak_groups.values())
    interference = sum(int_groups.values())
    signal = noise**2
    comps = {"leak": leak_groups, "interference": int_groups}
    if perfect_csi:
        cfg = config
        sinr = assemble_sinr(cfg.p, cfg.sigma2, signal, leak, interference, noise)
        rate = cfg.prelog * np.log2(1 + sinr)
        return RateBreakdown(signal, leak, noise, interference, None, sinr, rate, cfg.prelog, comps)
    return _breakdown(config, signal, leak, interference, noise, components=comps)


def rate_independent(config: SystemConfig, phase: PhaseShifts, perfect_csi: bool = False) -> RateBreakdown:
    if config.correlated:
        raise ModelError("rate_independent requires the independent model")
    return independent_terms(config, f_values(config, phase), perfect_csi)


def rate_rayleigh_risbs(config: SystemConfig) -> RateBreakdown:
    """Rate when the RIS-BS link is pure scattering; phase independent."""
    if config.delta != 0:
        raise ModelError("this specialisation requires delta = 0")
    if config.correlated:
        raise ModelError("rate_rayleigh_risbs requires the independent model")
    g = link_gains(config)
    M, N = config.M, config.N
    s = config.pilot_noise
    gamma = config.gamma_arr
    NL, NN = g.nlos_los, g.nlos_nlos
    VS = NL + NN  # c_k (eps_k + 1) = beta alpha_k
    e1 = (N * config.beta * config.alpha_arr + gamma) / (N * config.beta * config.alpha_arr + gamma + s)
    gram = gram_los(config)
    a = N * VS + gamma
    scale = M * e1  # common factor of every expectation term
    noise = scale * a
    signal = noise**2
    leak = scale * (
        N**2 * VS**2 * e1
        + M * N * (2 * NN * NL + NN**2) * e1
        + N * ((2 * NN * NL + NN**2) + (2 * gamma + s) * VS) * e1
        + gamma * (gamma + s) * e1
    )
    c = lambda v: v[:, None]  # noqa: E731
    r = lambda v: v[None, :]  # noqa: E731
    inter = (
        N**2 * c(VS) * r(VS)
        + M * N * (c(NL) * r(NN) + c(NN) * r(NL) + c(NN) * r(NN))
        + M * c(NL) * r(NL) * np.abs(gram) ** 2
        + N * ((c(gamma) + s) * r(VS) + r(gamma) * c(VS))
        + r(gamma) * (c(gamma) + s)
    ) * c(e1 * scale)
    np.fill_diagonal(inter, 0.0)
    return _breakdown(config, signal, leak, inter, noise)


# Correlated model --------------------------------------------------------------


@dataclass
class CorrelatedPrimitives:
    """Phase-dependent scalars entering the correlated-model rate.

    Entries may be floats or value-with-gradient objects; the rate formula
    only uses arithmetic on them.  Per-user lists are indexed [k], pairwise
    lists [k][i].
    """

    fc1: object
    f2: list
    f3: list
    f4: list
    f5: list
    f6: list
    f7: list
    f8: list
    f9: list
    tr_ups: list
    emi_gain: object  # a_N^H Phi R_emi Phi^H a_N
    emi_sq: object  # Tr{(R_ris Phi R_emi Phi^H)^2}
    e4: list
    e5: list
    e6: list
    i5: list
    i6: list
    i8: list
    l6: list


@dataclass(frozen=True)
class CorrelatedRateTerms:
    primitives: CorrelatedPrimitives
    emi_parts: list  # [k] -> 8 components
    interference_parts: list  # [k][i] -> 8 components (None on diagonal)
    leak_parts: list  # [k] -> 8 components


def correlated_primitives(config: SystemConfig, phase: PhaseShifts, um: UpsilonModel | None = None) -> CorrelatedPrimitives:
    """Direct numerical evaluation of every phase-dependent scalar."""
    um = um if um is not None else upsilon_model(config, phase)
    los = los_blocks(config)
    corr = correlation_for(config)
    R, Re = corr.R_ris, corr.R_emi
    c = phase.c
    K = config.K
    PRP = c[:, None] * Re * c.conj()[None, :]  # Phi R_emi Phi^H
    RPRP = R @ PRP
    G = los.Hbar2 * c  # Hbar2 Phi
    Y = um.emi_matrix  # G R_emi G^H
    x = los.hbar * c  # rows Phi hbar_k
    gx = x @ los.Hbar2.T  # rows Hbar2 Phi hbar_k
    fc1 = float(np.real(np.trace(RPRP)))
    f2, f3, f4, f5, f6, f7, tr = [], [], [], [], [], [], []
    e4, e5, e6, l6 = [], [], [], []
    f8 = [[None] * K for _ in range(K)]
    f9 = [[None] * K for _ in range(K)]
    i5 = [[None] * K for _ in range(K)]
    i6 = [[None] * K for _ in range(K)]
    i8 = [[None] * K for _ in range(K)]
    fv = f_values(config, phase)
    for k in range(K):
        U = um.Upsilon[k]
        U2 = U @ U
        xk = x[k]
        Rx = R @ xk
        f2.append(float(np.real(xk.conj() @ Rx)))
        f3.append(float(np.real(np.trace(U2 @ Y))))
        f4.append(float(np.real(np.trace(U2))))
        t = float(np.real(np.trace(U)))
        tr.append(t)
        f5.append(t * t)
        f6.append(float(np.real(Rx.conj() @ PRP @ Rx)))
        f7.append(float(abs(fv[k]) ** 2))
        GUG = G.conj().T @ U @ G
        e4.append(float(np.real(np.trace(Re @ GUG @ Re @ GUG))))
        e5.append(float(np.real(gx[k].conj() @ G @ Re @ (c.conj() * Rx))))
        e6.append(float(np.real(np.trace(Re @ GUG @ Re @ (c.conj()[:, None] * R * c[None, :])))))
        l6.append(float(np.real(gx[k].conj() @ U @ G @ Re @ (c.conj() * Rx))))
        UYU = U @ Y @ U
        for i in range(K):
            gi = gx[i]
            f8[k][i] = float(np.real(gi.conj() @ U2 @ gi))
            f9[k][i] = float(np.real(gi.conj() @ UYU @ gi))
            xRx = xk.conj() @ R @ x[i]
            i5[k][i] = float(abs(xRx) ** 2)
            i6[k][i] = float(np.real((gx[k].conj() @ gi) * (x[i].conj() @ Rx)))
            Rxi = R @ x[i]
            i8[k][i] = float(np.real(Rxi.conj() @ PRP @ G.conj().T @ U @ gi))
    aN = los.a_N
    emi_gain = float(np.real(aN.conj() @ PRP @ aN))
    emi_sq = float(np.real(np.trace(RPRP @ RPRP)))
    return CorrelatedPrimitives(fc1, f2, f3, f4, f5, f6, f7, f8, f9, tr, emi_gain, emi_sq, e4, e5, e6, i5, i6, i8, l6)


def correlated_noise_term(cs: CorrelatedScalars, M: int, gamma, P: CorrelatedPrimitives, k: int):
    return M * cs.los[k] * P.f7[k] + cs.nlos[k] * P.tr_ups[k] * P.f2[k] + gamma[k] * P.tr_ups[k]


def correlated_emi_parts(cs: CorrelatedScalars, M: int, gamma, s: float, P: CorrelatedPrimitives, k: int) -> list:
    gL, gN, eL, eN = cs.los[k], cs.nlos[k], cs.emi_los, cs.emi_nlos
    bL, bN = cs.ris_bs_los, cs.ris_bs_nlos
    g = gamma[k]
    return [
        M**2 * bL * gL * P.f7[k] * P.emi_gain,
        bL * (gN * P.f2[k] + 2 * eN * P.fc1 + g + s) * P.f3[k],
        (M * bN * gL * P.f7[k] + bN * (s + g + gN * P.f2[k] + eN * P.fc1) * P.f4[k]) * P.fc1,
        bL * eL * P.e4[k],
        2 * bN * gL * P.tr_ups[k] * P.e5[k],
        2 * bN * eL * P.tr_ups[k] * P.e6[k],
        bN * gN * P.f5[k] * P.f6[k],
        bN * eN * P.f5[k] * P.emi_sq,
    ]


def correlated_interference_parts(cs: CorrelatedScalars, M: int, gamma, s: float, P: CorrelatedPrimitives, k: int, i: int, noise_k) -> list:
    gLk, gNk, gLi, gNi = cs.los[k], cs.nlos[k], cs.los[i], cs.nlos[i]
    eL, eN = cs.emi_los, cs.emi_nlos
    gk = gamma[k]
    return [
        gamma[i] * noise_k + M**2 * gLk * gLi * P.f7[k] * P.f7[i],
        (M * gLk * gNi * P.f7[k] + (gNi * (gk + s) + gNi * eN * P.fc1) * P.f4[k] + gNi * eL * P.f3[k]) * P.f2[i],
        (gLk * gNi * P.f8[k][i] + gNk * gNi * P.f4[k] * P.f2[i]) * P.f2[k],
        (gNi * eL * P.fc1 + gLi * (gk + s)) * P.f8[k][i],
        (gNk * gNi * P.i5[k][i] + gNi * eN * P.f6[i]) * P.f5[k],
        2 * gLk * gNi * P.tr_ups[k] * P.i6[k][i],
        gLi * eL * P.f9[k][i],
        2 * gNi * eL * P.tr_ups[k] * P.i8[k][i],
    ]


def correlated_leak_parts(cs: CorrelatedScalars, M: int, gamma, s: float, P: CorrelatedPrimitives, k: int) -> list:
    gL, gN, eL, eN = cs.los[k], cs.nlos[k], cs.emi_los, cs.emi_nlos
    g = gamma[k]
    return [
        M * gL * g * P.f7[k],
        (M * gN * gL * P.f7[k] + gN * gL * P.f8[k][k] + (gN * gN * P.f2[k] + 2 * gN * g + gN * s) * P.f4[k]) * P.f2[k],
        (gL * g + gN * eL * P.fc1 + gL * s) * P.f8[k][k],
        (g * g + g * s + eN * (g + gN * P.f2[k]) * P.fc1) * P.f4[k],
        gL * eL * P.f9[k][k],
        2 * gN * eL * P.tr_ups[k] * P.l6[k],
        eL * (g + gN * P.f2[k]) * P.f3[k],
        gN * eN * P.f5[k] * P.f6[k],
    ]


def correlated_sinr_terms(config: SystemConfig, P: CorrelatedPrimitives):
    """Per-user (signal, leak, interference list, emi, noise, parts) in any scalar type."""
    cs = correlated_scalars(config)
    M, K, s = config.M, config.K, config.pilot_noise
    gamma = config.gamma_arr
    out = []
    for k in range(K):
        noise = correlated_noise_term(cs, M, gamma, P, k)
        emi_parts = correlated_emi_parts(cs, M, gamma, s, P, k)
        leak_parts = correlated_leak_parts(cs, M, gamma, s, P, k)
        int_parts = [None if i == k else correlated_interference_parts(cs, M, gamma, s, P, k, i, noise) for i in range(K)]
        out.append(
            dict(
                noise=noise,
                signal=noise * noise,
                emi=sum(emi_parts[1:], emi_parts[0]),
                leak=sum(leak_parts[1:], leak_parts[0]),
                interference=[None if p is None else sum(p[1:], p[0]) for p in int_parts],
                emi_parts=emi_parts,
                leak_parts=leak_parts,
                interference_parts=int_parts,
            )
        )
    return out


def rate_correlated(config: SystemConfig, phase: PhaseShifts) -> RateBreakdown:
    if not config.correlated:
        raise ModelError("rate_correlated requires the correlated model (line-of-sight users, sinc RIS correlation)")
    P = correlated_primitives(config, phase)
    rows = correlated_sinr_terms(config, P)
    K = config.K
    noise = np.array([r["noise"] for r in rows])
    leak = np.array([r["leak"] for r in rows])
    emi = np.array([r["emi"] for r in rows])
    inter = np.zeros((K, K))
    for k, r in enumerate(rows):
        for i, v in enumerate(r["interference"]):
            if v is not None:
                inter[k, i] = v
    terms = CorrelatedRateTerms(
        P,
        [r["emi_parts"] for r in rows],
        [r["interference_parts"] for r in rows],
        [r["leak_parts"] for r in rows],
    )
    return _breakdown(config, noise**2, leak, inter, noise, emi, {"terms": terms})


# Single-user reduction ----------------------------------------------------------


@dataclass(frozen=True)
class SingleUserSnr:
    """SNR(x) = (s1 x + s2)^2 / (t1 x + t2) with x = |f_k|^2."""

    s1: float
    s2: float
    t1: float
    t2: float
    N: int

    @property
    def x0L(self) -> float:
        return -self.s2 / self.s1

    @property
    def x0R(self) -> float:
        return (self.s2 * self.t1 - 2 * self.s1 * self.t2) / (self.s1 * self.t1)

    def __call__(self, x):
        x = np.asarray(x, float)
        return (self.s1 * x + self.s2) ** 2 / (self.t1 * x + self.t2)


def single_user_snr_coeffs(config: SystemConfig) -> SingleUserSnr:
    """Coefficients of the single-user SNR as a function of |f|^2.

    Both sqrt(p E_signal) and the SNR denominator are affine in |f|^2, so
    evaluating at |f|^2 = 0 and 1 determines them.
    """
    if config.K != 1:
        raise ModelError("single-user reduction needs K = 1")
    if config.correlated:
        raise ModelError("single-user reduction uses the independent model")
    vals = []
    for x in (0.0, 1.0):
        b = independent_terms(config, np.array([math.sqrt(x)], complex))
        num = math.sqrt(config.p) * b.noise[0]
        den = config.p * b.leak[0] + config.sigma2 * b.noise[0]
        vals.append((num, den))
    (n0, d0), (n1, d1) = vals
    return SingleUserSnr(n1 - n0, n0, d1 - d0, d0, config.N)


# Power scaling limits ---------------------------------------------------------------


class ScalingLaw(str, Enum):
    P_OVER_M = "p=Eu/M"
    P_OVER_SQRT_M_RAYLEIGH = "p=Eu/sqrtM,delta=0"
    P_OVER_N_RAYLEIGH = "p=Eu/N,delta=0"
    P_OVER_N_NLOS_USERS = "p=Eu/N,eps=0"
    SINGLE_P_OVER_MN2 = "single:p=Eu/(MN^2)"
    SINGLE_P_OVER_N2 = "single:p=Eu/N^2"
    SINGLE_P_OVER_N_RAYLEIGH = "single:p=Eu/N,delta=0"
    LARGE_RIS_RAYLEIGH = "N->inf,delta=0"


def scaled_power(law: ScalingLaw | str, E_u: float, M: int, N: int) -> float:
    """Transmit power prescribed by a scaling schedule."""
    law = ScalingLaw(law)
    if law is ScalingLaw.P_OVER_M:
        return E_u / M
    if law is ScalingLaw.P_OVER_SQRT_M_RAYLEIGH:
        return E_u / math.sqrt(M)
    if law in (ScalingLaw.P_OVER_N_RAYLEIGH, ScalingLaw.P_OVER_N_NLOS_USERS, ScalingLaw.SINGLE_P_OVER_N_RAYLEIGH):
        return E_u / N
    if law is ScalingLaw.SINGLE_P_OVER_MN2:
        return E_u / (M * N**2)
    if law is ScalingLaw.SINGLE_P_OVER_N2:
        return E_u / N**2
    raise ModelError(f"{law.value} has no power schedule")


def asymptotic_limit(config: SystemConfig, law: ScalingLaw | str, E_u: float = 1.0, phase: PhaseShifts | None = None) -> np.ndarray:
    """Limiting SINR per user under a power scaling schedule."""
    law = ScalingLaw(law)
    g = link_gains(config)
    M, N, K = config.M, config.N, config.K
    sigma2, tau = config.sigma2, config.tau
    gamma = config.gamma_arr
    alpha = config.alpha_arr
    ba = config.beta * alpha
    LL, LN, NL, NN = g.los_los, g.los_nlos, g.nlos_los, g.nlos_nlos
    VS = NL + NN
    sp = sigma2 / (tau * E_u)
    c = lambda v: v[:, None]  # noqa: E731
    r = lambda v: v[None, :]  # noqa: E731

    def need(cond, msg):
        if not cond:
            raise ModelError(f"{law.value}: {msg}")

    if law is ScalingLaw.P_OVER_M:
        phase = phase if phase is not None else PhaseShifts.zeros(N)
        x = np.abs(f_values(config, phase)) ** 2
        e2 = N * LN / (sp + N * LN)
        a = LL * x + N * LN * e2
        leak = N * x * LL * LN * (e2**2 + 1) + sp * x * LL * e2**2 + N**2 * LN**2 * e2**2 + sp * N * LN * e2**2
        inter = (
            c(x) * r(x) * c(LL) * r(LL)
            + N * c(x) * c(LL) * r(LN)
            + r(x) * r(LL) * c(e2) ** 2 * (N * c(LN) + sp)
            + N**2 * c(LN) * r(LN) * c(e2) ** 2
            + N * sp * r(LN) * c(e2) ** 2
        )
        np.fill_diagonal(inter, 0.0)
        return E_u * a**2 / (E_u * leak + E_u * inter.sum(axis=1) + sigma2 * a)
    if law is ScalingLaw.P_OVER_SQRT_M_RAYLEIGH:
        need(config.delta == 0, "requires delta = 0")
        gram = gram_los(config)
        inter = tau * E_u**2 * (N * (c(NL) * r(NN) + c(NN) * r(NL) + c(NN) * r(NN)) + c(NL) * r(NL) * np.abs(gram) ** 2)
        np.fill_diagonal(inter, 0.0)
        num = tau * E_u**2 * (N * VS + gamma) ** 2
        return num / (tau * E_u**2 * N * (2 * NN * NL + NN**2) + inter.sum(axis=1) + sigma2**2)
    if law is ScalingLaw.P_OVER_N_RAYLEIGH:
        need(config.delta == 0, "requires delta = 0")
        den = np.array([np.sum(E_u * ba + (alpha / alpha[k]) * sigma2 / tau) for k in range(K)])
        return E_u * M * ba / (den + sigma2 * (1 + sigma2 / (tau * E_u * ba)))
    if law is ScalingLaw.P_OVER_N_NLOS_USERS:
        need(config.delta > 0 and not math.isinf(config.delta), "requires finite delta > 0")
        need(all(e == 0 for e in config.epsilon), "requires eps_k = 0 for all users")
        d = config.delta
        ck = NN
        a3 = ck * d * sp / ((ck + sp) * (ck + sp + M * ck * d))
        a4 = ck / (ck + sp)
        e1, e2, e3 = e_coefficients(a3, a4, M)
        num = E_u * M * ck**2 * (d * e2 + e1) ** 2
        tot = np.array(
            [np.sum(ck * (M * ck[k] * d**2 * e2[k] ** 2 + ck[k] * (2 * d * e2[k] ** 2 + e3[k]) + sp * (d * e2[k] ** 2 + e3[k]))) for k in range(K)]
        )
        return num / (E_u * tot + sigma2 * ck * (d * e2 + e1))
    if law is ScalingLaw.SINGLE_P_OVER_MN2:
        need(K == 1, "single-user schedule")
        return np.atleast_1d(E_u / sigma2 * LL)
    if law is ScalingLaw.SINGLE_P_OVER_N2:
        need(K == 1, "single-user schedule")
        return np.atleast_1d(E_u / sigma2 * M * LL)
    if law is ScalingLaw.SINGLE_P_OVER_N_RAYLEIGH:
        need(K == 1 and config.delta == 0, "single user with delta = 0")
        return E_u * M * ba / (E_u * ba + sigma2 / tau + sigma2 * (1 + sigma2 / (tau * E_u * ba)))
    if law is ScalingLaw.LARGE_RIS_RAYLEIGH:
        need(config.delta == 0, "requires delta = 0")
        return M * alpha / alpha.sum()
    raise ModelError(f"unknown law {law}")
