"""RIS phase design from statistical CSI.

The max-min rate problem is smoothed with a log-sum-exp surrogate and
solved by gradient ascent over the unconstrained phase vector theta with
Armijo backtracking.  Gradients are analytic for both rate engines:

* independent model: the rate depends on theta only through f_k and the
  cross products conj(f_k) f_i, so the gradient is assembled from the
  coefficient record in ``rate_analytic``;
* correlated model: every phase-dependent scalar is a trace built from
  Phi, Phi^H and Upsilon_k.  Gradients of the named scalars use the two
  matrix lemmas (``grad_quadratic_form`` and ``grad_trace_upsilon``); the
  remaining composite traces go through the generic chain engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import PhaseShifts, SystemConfig, correlation_for, link_gains, los_blocks
from .estimation import ModelError, correlated_scalars, upsilon_model
from .graded import PHI, PHI_H, UPS, Graded, TraceChain
from .rate_analytic import (
    CorrelatedPrimitives,
    correlated_primitives,
    correlated_sinr_terms,
    f_values,
    independent_gradient_coefficients,
    independent_terms,
    rate_correlated,
    rate_independent,
    single_user_snr_coeffs,
    zeta,
)


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    mu: float = 100.0
    kappa_b: float = 0.5
    shrink: float = 0.8
    conv_tol: float = 1e-5
    max_outer: int = 500
    max_backtrack: int = 60
    initial_step: float = 1.0
    restarts: int = 4

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not 0 < self.kappa_b < 1:
            raise ValueError("kappa_b must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")


# Surrogate objective -------------------------------------------------------------


def softmin_weights(rates: np.ndarray, mu: float) -> np.ndarray:
    z = -mu * np.asarray(rates, float)
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()


def logsumexp_objective(rates, mu: float) -> float:
    """-(1/mu) ln sum_k exp(-mu R_k), evaluated with a max shift."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    r = np.asarray(rates, float)
    z = -mu * r
    m = z.max()
    return float(-(m + math.log(np.sum(np.exp(z - m)))) / mu)


def user_rates(theta, config: SystemConfig) -> np.ndarray:
    phase = PhaseShifts(np.asarray(theta, float))
    if config.correlated:
        return rate_correlated(config, phase).rate
    return rate_independent(config, phase).rate


def objective(theta, config: SystemConfig, mu: float = 100.0) -> float:
    return logsumexp_objective(user_rates(theta, config), mu)


# Matrix lemmas -------------------------------------------------------------------


def grad_quadratic_form(A: np.ndarray, B: np.ndarray, theta) -> np.ndarray:
    """Gradient of Tr{A Phi B Phi^H} with respect to theta.

    Elementwise j c_n [B Phi^H A]_nn - j conj(c_n) [A Phi B]_nn.  Real when
    A and B are Hermitian (the trace is then real); complex otherwise.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    theta = np.asarray(theta, float)
    N = theta.size
    if A.shape != (N, N) or B.shape != (N, N):
        raise ValueError(f"A and B must be {N}x{N}, got {A.shape} and {B.shape}")
    g = _grad_qf_complex(A, B, np.exp(1j * theta))
    if np.allclose(A, A.conj().T) and np.allclose(B, B.conj().T):
        return g.real
    return g


class CorrelatedGradientContext:
    """Shared quantities for gradients of the correlated model at one theta."""

    def __init__(self, config: SystemConfig, phase: PhaseShifts):
        if not config.correlated:
            raise ModelError("correlated gradient requested for the independent model")
        self.config = config
        self.phase = phase
        self.theta = phase.theta
        self.c = phase.c
        self.um = upsilon_model(config, phase)
        self.cs = correlated_scalars(config)
        self.los = los_blocks(config)
        corr = correlation_for(config)
        self.R, self.Re = corr.R_ris, corr.R_emi
        self.H = self.los.Hbar2
        self.Hh = self.H.conj().T
        h = self.los.hbar
        self.hh = [np.outer(h[k], h[k].conj()) for k in range(config.K)]
        self.aa = np.outer(self.los.a_N, self.los.a_N.conj())
        self.fc1_grad = _grad_qf_hermitian(self.R, self.Re, self.c)
        self.f2_grad = [_grad_qf_hermitian(self.R, self.hh[k], self.c) for k in range(config.K)]
        self.X = self.um.emi_matrix  # Hbar2 Phi R_emi Phi^H Hbar2^H

    def z(self, k: int, T: np.ndarray) -> np.ndarray:
        """Gradient of Tr{T Upsilon_k}; complex unless T Upsilon_k has a real trace family."""
        U1 = self.um.inner_inverse[k]
        psi = self.um.psi1[k]
        TU1 = T @ U1
        tr_TU1 = np.trace(TU1)
        tr_TU1sq = np.trace(TU1 @ U1)
        out = self.cs.nlos[k] * (tr_TU1 - psi * tr_TU1sq) * self.f2_grad[k]
        out = out - self.cs.emi_nlos * psi * tr_TU1sq * self.fc1_grad
        if self.cs.emi_los != 0:
            A = self.Hh @ U1 @ T @ U1 @ self.H
            out = out - self.cs.emi_los * psi * _grad_qf_complex(A, self.Re, self.c)
        return out

    def chain(self) -> TraceChain:
        return TraceChain(self.c, lambda k: self.um.Upsilon[k], self.z)


def _grad_qf_complex(A, B, c):
    d1 = np.einsum("nm,mn->n", B * c.conj()[None, :], A)
    d2 = np.einsum("nm,mn->n", A * c[None, :], B)
    return 1j * c * d1 - 1j * c.conj() * d2


def _grad_qf_hermitian(A, B, c):
    """Real gradient of Tr{A Phi B Phi^H} for Hermitian A, B (no check)."""
    return _grad_qf_complex(A, B, c).real


def grad_trace_upsilon(T: np.ndarray, theta, config: SystemConfig, k: int = 0) -> np.ndarray:
    """z_k(T): gradient of Tr{T Upsilon_k} with respect to theta."""
    ctx = CorrelatedGradientContext(config, PhaseShifts(np.asarray(theta, float)))
    return ctx.z(k, np.asarray(T))


# Gradient workspace --------------------------------------------------------------


@dataclass
class GradientWorkspace:
    """Gradients of the named phase-dependent scalars.

    Correlated model: ``fc1``, per-user ``f2`` .. ``f7`` and pairwise ``f8``,
    ``f9`` (shape (K, K, N)).  Independent model: the coefficient record,
    the gradients of |f_k|^2 and of conj(f_k) f_i.
    """

    model: str
    fc1: np.ndarray | None = None
    f2: np.ndarray | None = None
    f3: np.ndarray | None = None
    f4: np.ndarray | None = None
    f5: np.ndarray | None = None
    f6: np.ndarray | None = None
    f7: np.ndarray | None = None
    f8: np.ndarray | None = None
    f9: np.ndarray | None = None
    coefficients: object = None
    abs_f2: np.ndarray | None = None  # d|f_k|^2, (K, N)
    cross: np.ndarray | None = None  # d(conj(f_k) f_i), (K, K, N)
    extras: dict = field(default_factory=dict)


def correlated_workspace(config: SystemConfig, phase: PhaseShifts, ctx: CorrelatedGradientContext | None = None) -> GradientWorkspace:
    """Lemma-based gradients of f_c1 .. f_c,ki,9."""
    ctx = ctx or CorrelatedGradientContext(config, phase)
    K, c = config.K, ctx.c
    U = ctx.um.Upsilon
    I_M = np.eye(config.M)
    X, H, Hh, Re = ctx.X, ctx.H, ctx.Hh, ctx.Re
    f3, f4, f5, f6, f7 = [], [], [], [], []
    f8 = np.empty((K, K, config.N))
    f9 = np.empty((K, K, config.N))
    Y = [H @ (ctx.c[:, None] * ctx.hh[i] * ctx.c.conj()[None, :]) @ Hh for i in range(K)]
    PRP = ctx.c[:, None] * Re * ctx.c.conj()[None, :]
    PhP = [ctx.c[:, None] * ctx.hh[k] * ctx.c.conj()[None, :] for k in range(K)]
    for k in range(K):
        Uk = U[k]
        f3.append(np.real(ctx.z(k, Uk @ X) + ctx.z(k, X @ Uk) + _grad_qf_hermitian(Hh @ Uk @ Uk @ H, Re, c)))
        f4.append(np.real(2 * ctx.z(k, Uk)))
        f5.append(np.real(2 * np.trace(Uk) * ctx.z(k, I_M)))
        R = ctx.R
        f6.append(_grad_qf_hermitian(R @ PhP[k] @ R, Re, c) + _grad_qf_hermitian(R @ PRP @ R, ctx.hh[k], c))
        f7.append(_grad_qf_hermitian(ctx.aa, ctx.hh[k], c))
        for i in range(K):
            f8[k, i] = np.real(ctx.z(k, Uk @ Y[i]) + ctx.z(k, Y[i] @ Uk) + _grad_qf_hermitian(Hh @ Uk @ Uk @ H, ctx.hh[i], c))
            f9[k, i] = np.real(
                ctx.z(k, X @ Uk @ Y[i])
                + ctx.z(k, Y[i] @ Uk @ X)
                + _grad_qf_hermitian(Hh @ Uk @ Y[i] @ Uk @ H, Re, c)
                + _grad_qf_hermitian(Hh @ Uk @ X @ Uk @ H, ctx.hh[i], c)
            )
    return GradientWorkspace(
        "correlated",
        fc1=ctx.fc1_grad,
        f2=np.array(ctx.f2_grad),
        f3=np.array(f3),
        f4=np.array(f4),
        f5=np.array(f5),
        f6=np.array(f6),
        f7=np.array(f7),
        f8=f8,
        f9=f9,
    )


def correlated_chains(ctx: CorrelatedGradientContext) -> dict:
    """Trace chains of every phase-dependent scalar of the correlated rate."""
    K = ctx.config.K
    R, Re, H, Hh, aa, hh = ctx.R, ctx.Re, ctx.H, ctx.Hh, ctx.aa, ctx.hh
    HhH = Hh @ H
    ch = {
        "fc1": [R, PHI, Re, PHI_H],
        "emi_gain": [aa, PHI, Re, PHI_H],
        "emi_sq": [R, PHI, Re, PHI_H, R, PHI, Re, PHI_H],
    }
    for k in range(K):
        u = UPS(k)
        ch[("f2", k)] = [R, PHI, hh[k], PHI_H]
        ch[("f3", k)] = [u, u, H, PHI, Re, PHI_H, Hh]
        ch[("f4", k)] = [u, u]
        ch[("tr_ups", k)] = [u]
        ch[("f6", k)] = [R, PHI, Re, PHI_H, R, PHI, hh[k], PHI_H]
        ch[("f7", k)] = [aa, PHI, hh[k], PHI_H]
        ch[("e4", k)] = [Re, PHI_H, Hh, u, H, PHI, Re, PHI_H, Hh, u, H, PHI]
        ch[("e5", k)] = [HhH, PHI, Re, PHI_H, R, PHI, hh[k], PHI_H]
        ch[("e6", k)] = [Re, PHI_H, Hh, u, H, PHI, Re, PHI_H, R, PHI]
        ch[("l6", k)] = [Hh, u, H, PHI, Re, PHI_H, R, PHI, hh[k], PHI_H]
        for i in range(K):
            ch[("f8", k, i)] = [Hh, u, u, H, PHI, hh[i], PHI_H]
            ch[("f9", k, i)] = [Hh, u, H, PHI, Re, PHI_H, Hh, u, H, PHI, hh[i], PHI_H]
            if i != k:
                ch[("i5", k, i)] = [R, PHI, hh[i], PHI_H, R, PHI, hh[k], PHI_H]
                ch[("i6", k, i)] = [HhH, PHI, hh[i], PHI_H, R, PHI, hh[k], PHI_H]
                ch[("i8", k, i)] = [R, PHI, Re, PHI_H, Hh, u, H, PHI, hh[i], PHI_H]
    return ch


_LEMMA_NAMES = ("f2", "f3", "f4", "f6", "f7")
_EXTRA_USER = ("e4", "e5", "e6", "l6")
_EXTRA_PAIR = ("i5", "i6", "i8")


def graded_correlated_primitives(config: SystemConfig, phase: PhaseShifts, route: str = "lemma") -> CorrelatedPrimitives:
    """Correlated-model scalars carrying phase gradients.

    ``route="lemma"`` uses the lemma workspace for the named scalars and
    the chain engine only for composite traces; ``route="chain"`` uses the
    chain engine throughout.  Values come from the direct evaluation.
    """
    ctx = CorrelatedGradientContext(config, phase)
    plain = correlated_primitives(config, phase, ctx.um)
    chains = correlated_chains(ctx)
    eng = ctx.chain()
    K = config.K

    def by_chain(key, value):
        return Graded(value, np.real(eng.evaluate(chains[key]).grad))

    if route == "chain":
        fc1 = by_chain("fc1", plain.fc1)
        per = {n: [by_chain((n, k), getattr(plain, n)[k]) for k in range(K)] for n in _LEMMA_NAMES}
        tr = [by_chain(("tr_ups", k), plain.tr_ups[k]) for k in range(K)]
        f5 = [t * t for t in tr]
        f8 = [[by_chain(("f8", k, i), plain.f8[k][i]) for i in range(K)] for k in range(K)]
        f9 = [[by_chain(("f9", k, i), plain.f9[k][i]) for i in range(K)] for k in range(K)]
    elif route == "lemma":
        ws = correlated_workspace(config, phase, ctx)
        fc1 = Graded(plain.fc1, ws.fc1)
        per = {n: [Graded(getattr(plain, n)[k], getattr(ws, n)[k]) for k in range(K)] for n in _LEMMA_NAMES}
        I_M = np.eye(config.M)
        tr = [Graded(plain.tr_ups[k], np.real(ctx.z(k, I_M))) for k in range(K)]
        f5 = [Graded(plain.f5[k], ws.f5[k]) for k in range(K)]
        f8 = [[Graded(plain.f8[k][i], ws.f8[k, i]) for i in range(K)] for k in range(K)]
        f9 = [[Graded(plain.f9[k][i], ws.f9[k, i]) for i in range(K)] for k in range(K)]
    else:
        raise ValueError(f"unknown route {route!r}")
    extras = {n: [by_chain((n, k), getattr(plain, n)[k]) for k in range(K)] for n in _EXTRA_USER}
    pairs = {
        n: [[None if i == k else by_chain((n, k, i), getattr(plain, n)[k][i]) for i in range(K)] for k in range(K)] for n in _EXTRA_PAIR
    }
    return CorrelatedPrimitives(
        fc1=fc1,
        f2=per["f2"],
        f3=per["f3"],
        f4=per["f4"],
        f5=f5,
        f6=per["f6"],
        f7=per["f7"],
        f8=f8,
        f9=f9,
        tr_ups=tr,
        emi_gain=by_chain("emi_gain", plain.emi_gain),
        emi_sq=by_chain("emi_sq", plain.emi_sq),
        e4=extras["e4"],
        e5=extras["e5"],
        e6=extras["e6"],
        i5=pairs["i5"],
        i6=pairs["i6"],
        i8=pairs["i8"],
        l6=extras["l6"],
    )


def independent_workspace(config: SystemConfig, phase: PhaseShifts, perfect_csi: bool = False) -> GradientWorkspace:
    """d|f_k|^2 and d(conj(f_k) f_i) from df_k/dtheta_n = j conj(a_n) c_n hbar_kn."""
    los = los_blocks(config)
    f = f_values(config, phase)
    df = 1j * los.a_N.conj()[None, :] * phase.c[None, :] * los.hbar  # (K, N)
    abs_f2 = 2 * np.real(np.conj(f)[:, None] * df)
    cross = np.conj(df)[:, None, :] * f[None, :, None] + np.conj(f)[:, None, None] * df[None, :, :]
    return GradientWorkspace(
        "independent",
        coefficients=independent_gradient_coefficients(config, perfect_csi),
        abs_f2=abs_f2,
        cross=cross,
    )


# SINR gradients ------------------------------------------------------------------


@dataclass(frozen=True)
class SinrGradient:
    sinr: np.ndarray  # (K,)
    grad: np.ndarray  # (K, N)
    parts: dict = field(default_factory=dict, repr=False)


def independent_sinr_gradient(config: SystemConfig, phase: PhaseShifts, perfect_csi: bool = False) -> SinrGradient:
    ws = independent_workspace(config, phase, perfect_csi)
    co = ws.coefficients
    f = f_values(config, phase)
    x = np.abs(f) ** 2
    b = independent_terms(config, f, perfect_csi)
    p, s2 = config.p, config.sigma2
    dx = ws.abs_f2
    d_noise = co.noise_slope[:, None] * dx
    d_signal = 2 * b.noise[:, None] * d_noise
    d_leak = co.s11[:, None] * dx
    d_int = (
        co.s5[:, :, None] * (x[None, :, None] * dx[:, None, :] + x[:, None, None] * dx[None, :, :])
        + co.s6[:, :, None] * dx[:, None, :]
        + co.s7[:, :, None] * dx[None, :, :]
        + 2 * np.real(co.s8[:, :, None] * ws.cross)
    )
    d_int_sum = d_int.sum(axis=1)
    den = p * b.leak + p * b.interference.sum(axis=1) + s2 * b.noise
    d_den = p * d_leak + p * d_int_sum + s2 * d_noise
    grad = (p * d_signal * den[:, None] - p * b.signal[:, None] * d_den) / den[:, None] ** 2
    parts = dict(signal=d_signal, noise=d_noise, leak=d_leak, interference=d_int)
    return SinrGradient(b.sinr, grad, parts)


def correlated_sinr_gradient(config: SystemConfig, phase: PhaseShifts, route: str = "lemma") -> SinrGradient:
    P = graded_correlated_primitives(config, phase, route)
    rows = correlated_sinr_terms(config, P)
    p, s2, se2 = config.p, config.sigma2, config.sigma_e2
    sinr, grad = [], []
    parts = {"rows": rows}
    for r in rows:
        inter = sum(v for v in r["interference"] if v is not None) if config.K > 1 else 0.0
        den = p * r["leak"] + p * inter + se2 * r["emi"] + s2 * r["noise"]
        g = p * r["signal"] / den
        sinr.append(g.value)
        grad.append(g.grad)
    return SinrGradient(np.array(sinr, float), np.real(np.array(grad)), parts)


def sinr_gradient(config: SystemConfig, phase: PhaseShifts, **kw) -> SinrGradient:
    if config.correlated:
        return correlated_sinr_gradient(config, phase, **kw)
    return independent_sinr_gradient(config, phase, **kw)


def objective_and_gradient(theta, config: SystemConfig, mu: float = 100.0, **kw):
    """Surrogate value and its gradient with respect to theta."""
    phase = PhaseShifts(np.asarray(theta, float))
    sg = sinr_gradient(config, phase, **kw)
    rates = config.prelog * np.log2(1 + sg.sinr)
    w = softmin_weights(rates, mu)
    d_rate = config.prelog * sg.grad / (math.log(2) * (1 + sg.sinr))[:, None]
    return logsumexp_objective(rates, mu), w @ d_rate


def grad_objective(theta, config: SystemConfig, mu: float = 100.0, **kw) -> np.ndarray:
    return objective_and_gradient(theta, config, mu, **kw)[1]


def finite_difference_gradient(fun, theta, step: float = 1e-5) -> np.ndarray:
    theta = np.asarray(theta, float)
    g = np.empty(theta.size, dtype=complex)
    for n in range(theta.size):
        e = np.zeros_like(theta)
        e[n] = step
        g[n] = (fun(theta + e) - fun(theta - e)) / (2 * step)
    return g.real if np.all(g.imag == 0) else g


# Gradient ascent -------------------------------------------------------------------


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    objective: float
    step: float


@dataclass(frozen=True)
class AscentResult:
    phase: PhaseShifts
    objective: float
    trace: list
    flag: str  # "converged", "max_outer" or "backtrack_exhausted"
    iterations: int

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.trace])


def gradient_ascent(theta0, config: SystemConfig, opt: OptimizerConfig = OptimizerConfig()) -> AscentResult:
    """Armijo backtracking gradient ascent on the log-sum-exp surrogate."""
    theta = np.array(theta0, float)
    if theta.shape != (config.N,):
        raise ValueError(f"theta0 must have {config.N} entries")
    fval, g = objective_and_gradient(theta, config, opt.mu)
    trace = [TraceRow(0, fval, 0.0)]
    flag = "max_outer"
    it = 0
    for it in range(1, opt.max_outer + 1):
        gg = float(g @ g)
        step = opt.initial_step
        for _ in range(opt.max_backtrack):
            cand = objective(theta + step * g, config, opt.mu)
            if cand >= fval + opt.kappa_b * step * gg:
                break
            step *= opt.shrink
        else:
            trace.append(TraceRow(it, fval, 0.0))
            flag = "backtrack_exhausted"
            break
        theta = theta + step * g
        gain = cand - fval
        fval = cand
        trace.append(TraceRow(it, fval, step))
        if gain < opt.conv_tol:
            flag = "converged"
            break
        _, g = objective_and_gradient(theta, config, opt.mu)
    return AscentResult(PhaseShifts(theta), fval, trace, flag, it)


def random_theta(N: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 2 * np.pi, N)


def optimize_phases(config: SystemConfig, opt: OptimizerConfig = OptimizerConfig(), seed: int = 0) -> AscentResult:
    """Best of ``opt.restarts`` ascents from uniform random starts."""
    best = None
    for r in range(opt.restarts):
        res = gradient_ascent(random_theta(config.N, seed + r), config, opt)
        if best is None or res.objective > best.objective:
            best = res
    return best


# Single user and phase constructions ------------------------------------------------------


def align_phases(config: SystemConfig, k: int, offset: float = 0.0) -> PhaseShifts:
    """theta_n = -zeta_n + offset, so that |f_k| = N."""
    return PhaseShifts(np.mod(-zeta(config, k) + offset, 2 * np.pi))


def cancel_phases(config: SystemConfig, k: int) -> PhaseShifts:
    """Phases making f_k = 0: opposed pairs, plus a balanced triple when N is odd."""
    N = config.N
    if N < 2:
        raise InfeasibleError("with a single element |f_k| = 1 for every phase")
    target = np.zeros(N)
    start = 0
    if N % 2:
        target[:3] = (np.pi / 3, -np.pi / 3, np.pi)
        start = 3
    target[start::2] = np.pi
    return PhaseShifts(np.mod(target - zeta(config, k), 2 * np.pi))


@dataclass(frozen=True)
class SingleUserDesign:
    phase: PhaseShifts
    x: float  # chosen |f|^2, 0 or N^2
    case: int
    snr0: float
    snrN2: float


def single_user_design(config: SystemConfig) -> SingleUserDesign:
    if config.K != 1:
        raise ModelError("single-user design needs K = 1")
    if config.N < 2 or not config.delta > 0 or not all(e > 0 for e in config.epsilon):
        raise ModelError("single-user design needs N > 1, delta > 0 and eps > 0")
    co = single_user_snr_coeffs(config)
    N2 = float(config.N) ** 2
    snr0, snrN2 = float(co(0.0)), float(co(N2))
    x0R = co.x0R
    if x0R <= 0:
        case, x = 1, N2
    elif x0R >= N2:
        case, x = 2, 0.0
    else:
        case = 3
        x = 0.0 if snr0 > snrN2 else N2
    phase = align_phases(config, 0) if x == N2 else cancel_phases(config, 0)
    return SingleUserDesign(phase, x, case, snr0, snrN2)


def random_min_rate(config: SystemConfig, draws: int, seed: int) -> float:
    """Best min-rate over uniform random phase draws."""
    return max(float(np.min(user_rates(random_theta(config.N, seed + d), config))) for d in range(draws))
