"""System configuration, line-of-sight geometry and random channel sampling.

Two channel models are supported.  The spatially independent model draws
Rician RIS-BS and user-RIS links with i.i.d. scattering.  The correlated
model keeps the user-RIS links purely line-of-sight, colours the RIS-BS
scattering with a sinc correlation matrix and adds electromagnetic
interference (EMI) impinging on the RIS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

INF = math.inf

# Random blocks drawn per trial.  Each (seed, trial, block) triple owns one
# counter-based stream so trials can be generated in any order.
BLOCK_RIS_BS = 0
BLOCK_USER_RIS = 1
BLOCK_DIRECT = 2
BLOCK_PILOT_NOISE = 3
BLOCK_PILOT_EMI = 4


class ConfigError(ValueError):
    """Raised when a configuration violates one or more constraints.

    ``problems`` lists every violation, not only the first one.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DimensionError(ValueError):
    pass


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def rician_split(factor: float) -> tuple[float, float]:
    """Power fractions (line-of-sight, scattered) of a Rician link.

    An infinite factor is the pure line-of-sight limit.
    """
    if math.isinf(factor):
        return 1.0, 0.0
    return factor / (factor + 1.0), 1.0 / (factor + 1.0)


@dataclass(frozen=True)
class SystemConfig:
    """Full uplink scenario.  Powers are linear watts, angles radians.

    ``delta`` and ``epsilon`` accept ``math.inf`` as the explicit flag for a
    purely line-of-sight link.  Angle pairs are ``(azimuth, elevation)``:
    ``angle_t`` is the departure from the RIS towards the BS, ``angle_r``
    the arrival at the BS and ``angle_users[k]`` the arrival of user k at
    the RIS.
    """

    M: int
    N: int
    K: int
    p: float
    sigma2: float
    tau: int
    tau_c: int
    delta: float
    epsilon: tuple[float, ...]
    alpha: tuple[float, ...]
    gamma: tuple[float, ...]
    beta: float
    angle_t: tuple[float, float]
    angle_r: tuple[float, float]
    angle_users: tuple[tuple[float, float], ...]
    d_bs: float = 0.5
    d_ris: float = 0.5
    sigma_e2: float = 0.0
    correlated: bool = False
    ris_correlation: str = "sinc"  # or "identity"

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "epsilon", tuple(float(x) for x in np.atleast_1d(self.epsilon)))
        set_(self, "alpha", tuple(float(x) for x in np.atleast_1d(self.alpha)))
        set_(self, "gamma", tuple(float(x) for x in np.atleast_1d(self.gamma)))
        set_(self, "angle_t", tuple(float(x) for x in self.angle_t))
        set_(self, "angle_r", tuple(float(x) for x in self.angle_r))
        set_(self, "angle_users", tuple(tuple(float(x) for x in a) for a in self.angle_users))
        set_(self, "delta", float(self.delta))
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self) -> list[str]:
        out = []
        for name in ("M", "N", "K"):
            if int(getattr(self, name)) <= 0:
                out.append(f"{name} must be a positive integer")
        if self.N > 0 and math.isqrt(self.N) ** 2 != self.N:
            out.append(f"N={self.N} must be a perfect square for the planar RIS array")
        if self.tau < self.K:
            out.append(f"pilot length tau={self.tau} must satisfy tau >= K={self.K}")
        if self.tau_c <= self.tau:
            out.append(f"coherence length tau_c={self.tau_c} must exceed tau={self.tau}")
        if not self.p > 0:
            out.append("transmit power p must be positive")
        for name in ("sigma2", "sigma_e2", "beta"):
            value = getattr(self, name)
            if math.isnan(value) or value < 0:
                out.append(f"{name} must be non-negative")
        if math.isnan(self.delta) or self.delta < 0:
            out.append("delta must be non-negative (math.inf for pure line-of-sight)")
        for name in ("epsilon", "alpha", "gamma"):
            values = getattr(self, name)
            if len(values) != self.K:
                out.append(f"{name} must have K={self.K} entries, got {len(values)}")
            if any(math.isnan(v) or v < 0 for v in values):
                out.append(f"{name} entries must be non-negative and not NaN")
        if any(math.isinf(v) for v in self.alpha + self.gamma) or math.isinf(self.beta):
            out.append("pathlosses must be finite")
        if len(self.angle_users) != self.K:
            out.append(f"angle_users must have K={self.K} pairs")
        if self.correlated and not all(math.isinf(e) for e in self.epsilon):
            out.append("the correlated model requires line-of-sight user-RIS links (epsilon = inf)")
        if self.d_bs <= 0 or self.d_ris <= 0:
            out.append("element spacings must be positive")
        if self.ris_correlation not in ("sinc", "identity"):
            out.append(f"ris_correlation must be 'sinc' or 'identity', got {self.ris_correlation!r}")
        return out

    # Derived scalars --------------------------------------------------

    @property
    def pilot_noise(self) -> float:
        """sigma^2 / (tau p), the per-user pilot noise variance after despreading."""
        return self.sigma2 / (self.tau * self.p)

    @property
    def prelog(self) -> float:
        return (self.tau_c - self.tau) / self.tau_c

    @property
    def side(self) -> int:
        return math.isqrt(self.N)

    @property
    def alpha_arr(self) -> np.ndarray:
        return np.asarray(self.alpha)

    @property
    def gamma_arr(self) -> np.ndarray:
        return np.asarray(self.gamma)

    @property
    def epsilon_arr(self) -> np.ndarray:
        return np.asarray(self.epsilon)

    def gains(self) -> "LinkGains":
        return link_gains(self)


@dataclass(frozen=True)
class LinkGains:
    """Average powers of the four cascaded RIS paths per user.

    The first word refers to the RIS-BS link, the second to the user-RIS
    link.  With finite Rician factors ``nlos_nlos`` is c_k and the others
    are c_k*delta*eps_k, c_k*delta and c_k*eps_k.  Infinite factors are
    handled as exact limits.
    """

    los_los: np.ndarray
    los_nlos: np.ndarray
    nlos_los: np.ndarray
    nlos_nlos: np.ndarray
    ris_bs_los: float  # beta*delta/(delta+1)
    ris_bs_nlos: float  # beta/(delta+1)

    @property
    def cascaded(self) -> np.ndarray:
        """Total RIS-path power beta*alpha_k."""
        return self.los_los + self.los_nlos + self.nlos_los + self.nlos_nlos

    @property
    def via_scatter(self) -> np.ndarray:
        """c_k (eps_k + 1): power through the scattered RIS-BS component."""
        return self.nlos_los + self.nlos_nlos


def link_gains(config: SystemConfig) -> LinkGains:
    bl, bn = rician_split(config.delta)
    bl, bn = config.beta * bl, config.beta * bn
    split = np.array([rician_split(e) for e in config.epsilon]).reshape(config.K, 2)
    al = config.alpha_arr * split[:, 0]
    an = config.alpha_arr * split[:, 1]
    return LinkGains(bl * al, bl * an, bn * al, bn * an, bl, bn)


@dataclass(frozen=True)
class PhaseShifts:
    """RIS angles theta; c = exp(j theta) and Phi = diag(c)."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).ravel()
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def c(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    @property
    def Phi(self) -> np.ndarray:
        return np.diag(self.c)

    @classmethod
    def random(cls, N: int, seed: int | None = None) -> "PhaseShifts":
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(0.0, 2.0 * np.pi, N))

    @classmethod
    def zeros(cls, N: int) -> "PhaseShifts":
        return cls(np.zeros(N))


# Line-of-sight geometry -----------------------------------------------------


def array_response_bs(M: int, spacing: float, azimuth: float, elevation: float) -> np.ndarray:
    """Uniform linear array response at the BS."""
    if M <= 0:
        raise DimensionError(f"antenna count must be positive, got {M}")
    x = np.arange(M)
    return np.exp(2j * np.pi * spacing * x * np.sin(elevation) * np.sin(azimuth))


def array_response_ris(N: int, spacing: float, azimuth: float, elevation: float) -> np.ndarray:
    """Uniform square planar array response at the RIS (row-major indexing)."""
    if N <= 0 or math.isqrt(N) ** 2 != N:
        raise DimensionError(f"RIS size must be a positive perfect square, got {N}")
    side = math.isqrt(N)
    x = np.arange(N)
    row, col = x // side, x % side
    phase = row * np.sin(elevation) * np.sin(azimuth) + col * np.cos(elevation)
    return np.exp(2j * np.pi * spacing * phase)


@dataclass(frozen=True)
class LosBlocks:
    a_M: np.ndarray  # BS response towards the RIS
    a_N: np.ndarray  # RIS response towards the BS
    Hbar2: np.ndarray  # a_M a_N^H
    hbar: np.ndarray  # (K, N) user-RIS responses


@lru_cache(maxsize=64)
def los_blocks(config: SystemConfig) -> LosBlocks:
    a_M = array_response_bs(config.M, config.d_bs, *config.angle_r)
    a_N = array_response_ris(config.N, config.d_ris, *config.angle_t)
    hbar = np.array([array_response_ris(config.N, config.d_ris, *ang) for ang in config.angle_users])
    blocks = LosBlocks(a_M, a_N, np.outer(a_M, a_N.conj()), hbar.reshape(config.K, config.N))
    for arr in (blocks.a_M, blocks.a_N, blocks.Hbar2, blocks.hbar):
        arr.setflags(write=False)
    return blocks


@dataclass(frozen=True)
class CorrelationMatrices:
    R_ris: np.ndarray
    R_emi: np.ndarray
    sqrt_R: np.ndarray
    min_eigenvalue: float  # before clamping


@lru_cache(maxsize=32)
def sinc_correlation(N: int, spacing: float) -> CorrelationMatrices:
    """Isotropic-scattering correlation of a square RIS with the given pitch.

    Entry (a, b) is sinc(2 |u_a - u_b| / lambda) with the normalised sinc.
    Both the RIS channel and the EMI share this matrix.
    """
    if N <= 0 or math.isqrt(N) ** 2 != N:
        raise DimensionError(f"RIS size must be a positive perfect square, got {N}")
    side = math.isqrt(N)
    idx = np.arange(N)
    pos = np.stack([idx // side, idx % side], axis=1) * spacing
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    R = np.sinc(2.0 * dist)
    R = 0.5 * (R + R.T)
    w, V = np.linalg.eigh(R)
    root = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    root = 0.5 * (root + root.T)
    for arr in (R, root):
        arr.setflags(write=False)
    return CorrelationMatrices(R, R, root, float(w.min()))


@lru_cache(maxsize=8)
def identity_correlation(N: int) -> CorrelationMatrices:
    eye = np.eye(N)
    eye.setflags(write=False)
    return CorrelationMatrices(eye, eye, eye, 1.0)


def correlation_for(config: SystemConfig) -> CorrelationMatrices:
    if config.ris_correlation == "identity":
        return identity_correlation(config.N)
    return sinc_correlation(config.N, config.d_ris)


# Scenario geometry ---------------------------------------------------------


@dataclass(frozen=True)
class Geometry:
    alpha: np.ndarray
    beta: float
    gamma: np.ndarray
    d_ub: np.ndarray


def user_bs_distances(d_ui: float, d_ib: float, K: int) -> np.ndarray:
    """Users evenly spread on a semicircle of radius d_ui around the RIS."""
    k = np.arange(1, K + 1)
    ang = np.pi * k / (K + 1)
    return np.sqrt((d_ib - d_ui * np.cos(ang)) ** 2 + (d_ui * np.sin(ang)) ** 2)


def scenario_geometry(d_ui: float = 20.0, d_ib: float = 700.0, K: int = 8) -> Geometry:
    """Distance-based pathlosses of the semicircle deployment.

    A zero radius puts every user on the RIS, giving an unbounded user-RIS
    gain; it is returned as ``inf`` for the caller to reject.
    """
    if d_ib <= 0 or d_ui < 0:
        raise ValueError("distances must be positive (radius may be zero)")
    d_ub = user_bs_distances(d_ui, d_ib, K)
    with np.errstate(divide="ignore"):
        alpha = np.full(K, 1e-3 * np.float64(d_ui) ** -2.0)
    beta = 1e-3 * d_ib ** -2.5
    gamma = 1e-3 * d_ub ** -4.0
    return Geometry(alpha, beta, gamma, d_ub)


TABLE_ANGLE_T = (4.17, 0.09)
TABLE_ANGLE_R = (6.28, 4.21)
TABLE_ANGLE_USERS = (
    (5.20, 4.32),
    (0.41, 2.52),
    (3.84, 1.78),
    (1.35, 4.15),
    (5.08, 5.76),
    (4.75, 1.56),
    (4.74, 5.36),
    (0.09, 1.40),
)


def table_config(M: int = 64, N: int = 64, K: int = 8, **overrides) -> SystemConfig:
    """Default evaluation scenario.

    Users 1..K take the first K tabulated arrival angles and sit on the
    semicircle at angles pi k/(K+1).  Keyword overrides replace any field.
    """
    if K > len(TABLE_ANGLE_USERS) and "angle_users" not in overrides:
        raise ValueError("only eight tabulated user angles exist; pass angle_users")
    geo = scenario_geometry(20.0, 700.0, K)
    base = dict(
        M=M,
        N=N,
        K=K,
        p=dbm_to_watt(30.0),
        sigma2=dbm_to_watt(-104.0),
        tau=K,
        tau_c=196,
        delta=1.0,
        epsilon=(10.0,) * K,
        alpha=tuple(geo.alpha),
        gamma=tuple(geo.gamma),
        beta=geo.beta,
        angle_t=TABLE_ANGLE_T,
        angle_r=TABLE_ANGLE_R,
        angle_users=TABLE_ANGLE_USERS[:K],
    )
    base.update(overrides)
    for key in ("epsilon", "alpha", "gamma"):
        if np.isscalar(base[key]):
            base[key] = (float(base[key]),) * base["K"]
    if "tau" not in overrides:
        base["tau"] = base["K"]
    return SystemConfig(**base)


# Random sampling -----------------------------------------------------------


class StreamFactory:
    """Counter-based Philox streams keyed by (seed, trial, block).

    A single bit generator is re-pointed at a fresh counter for every
    request, which is equivalent to constructing a new generator with that
    counter but cheaper.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._bitgen = np.random.Philox(key=self.seed)
        self._gen = np.random.Generator(self._bitgen)
        self._state = self._bitgen.state

    def __call__(self, trial: int, block: int) -> np.random.Generator:
        st = self._state
        st["state"]["counter"] = np.array([0, trial, block, 0], dtype=np.uint64)
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bitgen.state = st
        return self._gen


def complex_normal(gen: np.random.Generator, shape) -> np.ndarray:
    """Circularly symmetric CN(0, 1) entries."""
    shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    z = gen.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


@dataclass(frozen=True)
class ChannelRealization:
    """One draw (or a batch of draws along a leading axis) of every block.

    For the correlated model ``Htilde2`` already holds H~_2 R^{1/2}.
    """

    Hbar2: np.ndarray
    Htilde2: np.ndarray
    hbar: np.ndarray
    htilde: np.ndarray
    dtilde: np.ndarray
    emi_cov_root: np.ndarray | None
    seed: int
    trials: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=int))

    @property
    def batched(self) -> bool:
        return self.Htilde2.ndim == 3


def _draw_trial(config: SystemConfig, streams: StreamFactory, trial: int, sqrt_R):
    H = complex_normal(streams(trial, BLOCK_RIS_BS), (config.M, config.N))
    if sqrt_R is not None:
        H = H @ sqrt_R
    h = complex_normal(streams(trial, BLOCK_USER_RIS), (config.K, config.N))
    d = complex_normal(streams(trial, BLOCK_DIRECT), (config.K, config.M))
    return H, h, d


def sample_channels(config: SystemConfig, seed: int, trial: int = 0) -> ChannelRealization:
    """Draw all random blocks for one trial; a pure function of its arguments."""
    return sample_channel_batch(config, seed, trial, 1, squeeze=True)


def sample_channel_batch(
    config: SystemConfig, seed: int, start: int, count: int, squeeze: bool = False
) -> ChannelRealization:
    """Trials ``start .. start+count-1`` stacked along a leading axis."""
    los = los_blocks(config)
    corr = correlation_for(config) if config.correlated else None
    sqrt_R = corr.sqrt_R if corr is not None else None
    streams = StreamFactory(seed)
    H = np.empty((count, config.M, config.N), complex)
    h = np.empty((count, config.K, config.N), complex)
    d = np.empty((count, config.K, config.M), complex)
    for i in range(count):
        H[i], h[i], d[i] = _draw_trial(config, streams, start + i, sqrt_R)
    if squeeze:
        H, h, d = H[0], h[0], d[0]
    return ChannelRealization(
        Hbar2=los.Hbar2,
        Htilde2=H,
        hbar=los.hbar,
        htilde=h,
        dtilde=d,
        emi_cov_root=sqrt_R,
        seed=int(seed),
        trials=np.arange(start, start + count),
    )


@dataclass(frozen=True)
class PathWeights:
    """Amplitude weights applied to the unit-variance blocks."""

    ris_bs_los: float
    ris_bs_nlos: float
    user_los: np.ndarray
    user_nlos: np.ndarray
    direct: np.ndarray


def path_weights(config: SystemConfig) -> PathWeights:
    bl, bn = rician_split(config.delta)
    split = np.array([rician_split(e) for e in config.epsilon]).reshape(config.K, 2)
    return PathWeights(
        math.sqrt(config.beta * bl),
        math.sqrt(config.beta * bn),
        np.sqrt(config.alpha_arr * split[:, 0]),
        np.sqrt(config.alpha_arr * split[:, 1]),
        np.sqrt(config.gamma_arr),
    )


def ris_bs_channel(real: ChannelRealization, config: SystemConfig) -> np.ndarray:
    """H_2 (or H_c2): line-of-sight plus scattered RIS-BS channel."""
    w = path_weights(config)
    return w.ris_bs_los * real.Hbar2 + w.ris_bs_nlos * real.Htilde2


def user_ris_channels(real: ChannelRealization, config: SystemConfig) -> np.ndarray:
    """h_k stacked as (..., K, N)."""
    w = path_weights(config)
    return w.user_los[:, None] * real.hbar + w.user_nlos[:, None] * real.htilde


def aggregated_channel(real: ChannelRealization, config: SystemConfig, phase: PhaseShifts) -> np.ndarray:
    """q_k = H_2 Phi h_k + d_k stacked as (..., K, M)."""
    H = ris_bs_channel(real, config)
    x = user_ris_channels(real, config) * phase.c
    w = path_weights(config)
    return np.einsum("...mn,...kn->...km", H, x) + w.direct[:, None] * real.dtilde


def aggregated_channel_terms(real: ChannelRealization, config: SystemConfig, phase: PhaseShifts) -> dict:
    """The four cascaded components and the direct path, each (..., K, M)."""
    g = link_gains(config)
    c = phase.c
    los = np.einsum("mn,kn->km", real.Hbar2, real.hbar * c)
    los_scat = np.einsum("mn,...kn->...km", real.Hbar2, real.htilde * c)
    scat_los = np.einsum("...mn,kn->...km", real.Htilde2, real.hbar * c)
    scat_scat = np.einsum("...mn,...kn->...km", real.Htilde2, real.htilde * c)
    return {
        "los_los": np.sqrt(g.los_los)[:, None] * los,
        "los_nlos": np.sqrt(g.los_nlos)[:, None] * los_scat,
        "nlos_los": np.sqrt(g.nlos_los)[:, None] * scat_los,
        "nlos_nlos": np.sqrt(g.nlos_nlos)[:, None] * scat_scat,
        "direct": np.sqrt(config.gamma_arr)[:, None] * real.dtilde,
    }
