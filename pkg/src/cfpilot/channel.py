"""Large- and small-scale fading for every user-RU pair.

Small-scale fading follows a first-order Gauss-Markov recursion whose
correlation comes from the Jakes/Clarke model, ``mu = J0(2 pi v f_c T_e / c)``.
Large-scale gain uses the 3GPP TR 38.901 UMi street-canyon LOS model:

    d_BP = 4 (h_RU - 1)(h_UE - 1) f_c / c
    PL   = 32.4 + 21 log10(d3) + 20 log10(f_c / 1 GHz)                     d2 <= d_BP
    PL   = 32.4 + 40 log10(d3) + 20 log10(f_c / 1 GHz)
           - 9.5 log10(d_BP^2 + (h_RU - h_UE)^2)                           d2 >  d_BP

with d2 clamped to at least 1 m. When ``normalize`` is set the constant
``32.4 + 20 log10(f_c / 1 GHz)`` is removed so gains are relative to a 1 m
reference, which keeps the noise variance 1/SNR on the same scale as the gains.
"""
from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import InvalidConfig

SPEED_OF_LIGHT = 3e8
MIN_DISTANCE_2D = 1.0
_SERIES_LIMIT = 12.0


def bessel_j0(x):
    """J0(x), power series for |x| <= 12 and Hankel asymptotics beyond."""
    x = abs(float(x))
    if x <= _SERIES_LIMIT:
        q = -(x * x) / 4.0
        term, terms = 1.0, [1.0]
        k = 0
        while True:
            k += 1
            term *= q / (k * k)
            terms.append(term)
            if abs(term) < 1e-18:
                break
        return math.fsum(terms)
    # Hankel P/Q series; t_k = a_k / x^k, summed until terms stop shrinking
    z = 8.0 * x
    t = 1.0
    best = math.inf
    p_terms, q_terms = [1.0], []
    for k in range(1, 60):
        t *= -(2 * k - 1) ** 2 / (k * z)
        if abs(t) > best:
            break
        best = abs(t)
        sign = -1.0 if (k // 2) % 2 else 1.0
        (q_terms if k % 2 else p_terms).append(sign * t)
    p = math.fsum(p_terms)
    q = math.fsum(q_terms)
    chi = x - math.pi / 4.0
    return math.sqrt(2.0 / (math.pi * x)) * (p * math.cos(chi) - q * math.sin(chi))


def correlation_coefficient(v, f_c=2e9, T_e=1e-3):
    if v < 0:
        raise InvalidConfig("velocity", "must be non-negative")
    return bessel_j0(2.0 * math.pi * (v / SPEED_OF_LIGHT) * f_c * T_e)


def complex_normal(rng, shape):
    """CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def step_small_scale(h_prev, mu, rng):
    """One Gauss-Markov step; ``mu`` broadcasts against ``h_prev``."""
    h_prev = np.asarray(h_prev)
    mu = np.asarray(mu, dtype=float)
    return mu * h_prev + np.sqrt(1.0 - mu * mu) * complex_normal(rng, h_prev.shape)


def rician_small_scale(kappa, rng, shape=(), theta=None, scatter=None):
    """Rician sample(s) with unit mean power.

    ``theta`` is the LOS phase (drawn uniformly if omitted); ``scatter`` is the
    CN(0, 1) diffuse component (drawn fresh if omitted).
    """
    if kappa < 0:
        raise InvalidConfig("rician_kappa", "must be non-negative")
    if theta is None:
        theta = rng.uniform(0.0, 2.0 * math.pi, size=shape)
    if scatter is None:
        scatter = complex_normal(rng, shape)
    los = math.sqrt(kappa / (kappa + 1.0)) * np.exp(1j * np.asarray(theta))
    return los + math.sqrt(1.0 / (kappa + 1.0)) * scatter


@dataclass(frozen=True)
class FadingParams:
    f_c: float = 2e9
    T_e: float = 1e-3
    kind: str = "rayleigh_gauss_markov"
    rician_kappa: float = 0.0
    # speed of surrounding scatterers (m/s); small-scale fading decorrelates at
    # max(user speed, scatter_velocity) while large-scale gains follow the user
    scatter_velocity: float = 0.0

    def __post_init__(self):
        if not self.f_c > 0:
            raise InvalidConfig("f_c", "must be positive")
        if not self.T_e > 0:
            raise InvalidConfig("T_e", "must be positive")
        if self.kind not in ("rayleigh_gauss_markov", "rician"):
            raise InvalidConfig("kind", f"unknown fading kind {self.kind!r}")
        if self.rician_kappa < 0:
            raise InvalidConfig("rician_kappa", "must be non-negative")
        if self.scatter_velocity < 0:
            raise InvalidConfig("scatter_velocity", "must be non-negative")


@dataclass(frozen=True)
class ShadowingParams:
    sigma_s_sq: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        if self.sigma_s_sq < 0:
            raise InvalidConfig("sigma_s_sq", "must be non-negative")


def umi_los_pathloss_db(d_2d, f_c, ru_height=10.0, user_height=1.5):
    d_2d = np.maximum(np.asarray(d_2d, dtype=float), MIN_DISTANCE_2D)
    dh = ru_height - user_height
    d_3d = np.sqrt(d_2d ** 2 + dh ** 2)
    d_bp = 4.0 * (ru_height - 1.0) * (user_height - 1.0) * f_c / SPEED_OF_LIGHT
    fghz = 20.0 * np.log10(f_c / 1e9)
    pl1 = 32.4 + 21.0 * np.log10(d_3d) + fghz
    pl2 = 32.4 + 40.0 * np.log10(d_3d) + fghz - 9.5 * np.log10(d_bp ** 2 + dh ** 2)
    return np.where(d_2d <= d_bp, pl1, pl2)


def pathloss(d_2d, geometry, f_c=2e9, shadowing=None, rng=None, normalize=True):
    """Linear large-scale gain for 2-D distance(s) ``d_2d``."""
    pl = umi_los_pathloss_db(d_2d, f_c, geometry.ru_height, geometry.user_height)
    if normalize:
        pl = pl - (32.4 + 20.0 * math.log10(f_c / 1e9))
    beta = 10.0 ** (-pl / 10.0)
    if shadowing is not None and shadowing.enabled and shadowing.sigma_s_sq > 0:
        z = rng.standard_normal(np.shape(beta))
        beta = beta * 10.0 ** (math.sqrt(shadowing.sigma_s_sq) * z / 10.0)
    return beta


@dataclass(frozen=True)
class MobilityTrack:
    start_pos: np.ndarray
    end_pos: np.ndarray
    velocity: np.ndarray

    def position(self, i, N):
        if N == 0:
            return self.start_pos.copy()
        if i >= N:
            return self.end_pos.copy()
        frac = i / N
        return self.start_pos + (self.end_pos - self.start_pos) * frac

    @property
    def static(self):
        return bool(np.all(self.velocity == 0))


def make_track(start_pos, velocity, N, T_e, geometry, rng, max_tries=64):
    """Straight-line tracks of length ``v N T_e`` in a random direction.

    A direction keeping the end point inside the area is searched for; if none
    is found the end point is clipped to the area and the speed shortened.
    """
    start_pos = np.asarray(start_pos, dtype=float)
    velocity = np.broadcast_to(np.asarray(velocity, dtype=float), (len(start_pos),)).copy()
    if np.any(velocity < 0):
        raise InvalidConfig("velocity", "must be non-negative")
    end = start_pos.copy()
    lo = np.zeros(2)
    hi = np.array([geometry.width, geometry.height])
    for k, (p, v) in enumerate(zip(start_pos, velocity)):
        dist = v * N * T_e
        if dist == 0:
            continue
        for _ in range(max_tries):
            ang = rng.uniform(0, 2 * math.pi)
            q = p + dist * np.array([math.cos(ang), math.sin(ang)])
            if np.all(q >= lo) and np.all(q <= hi):
                break
        else:
            q = np.clip(q, lo, hi)
            velocity[k] = np.linalg.norm(q - p) / (N * T_e)
        end[k] = q
    return MobilityTrack(start_pos, end, velocity)


@dataclass
class ChannelState:
    i: int
    h: np.ndarray
    beta: np.ndarray
    mu: np.ndarray
    user_pos: np.ndarray
    # per-link shadowing bookkeeping
    shadow: np.ndarray = field(default=None, repr=False)
    shadow_dist: np.ndarray = field(default=None, repr=False)
    # Rician-only: fixed LOS phase and Gauss-Markov diffuse part
    theta: np.ndarray = field(default=None, repr=False)
    scatter: np.ndarray = field(default=None, repr=False)

    @property
    def g(self):
        return np.sqrt(self.beta) * self.h


def _distances(user_pos, ru_pos):
    return np.linalg.norm(user_pos[:, None, :] - ru_pos[None, :, :], axis=2)


def _shadow_factor(shadowing, rng, shape):
    if shadowing is None or not shadowing.enabled or shadowing.sigma_s_sq == 0:
        return np.ones(shape)
    z = rng.standard_normal(shape)
    return 10.0 ** (math.sqrt(shadowing.sigma_s_sq) * z / 10.0)


def initial_state(topology, mobility, params, rng, shadowing=None, normalize=True):
    K, M = topology.K, topology.M
    pos = mobility.start_pos.copy()
    d = _distances(pos, topology.ru_pos)
    shadow = _shadow_factor(shadowing, rng, (K, M))
    beta = pathloss(d, topology.geometry, params.f_c, normalize=normalize) * shadow
    mu = np.array([correlation_coefficient(max(v, params.scatter_velocity), params.f_c, params.T_e)
                   for v in mobility.velocity])
    scatter = complex_normal(rng, (K, M))
    theta = None
    if params.kind == "rician":
        theta = rng.uniform(0.0, 2.0 * math.pi, size=(K, M))
        h = rician_small_scale(params.rician_kappa, rng, theta=theta, scatter=scatter)
    else:
        h = scatter
    return ChannelState(0, h, beta, mu, pos, shadow, d, theta, scatter)


def advance(state, topology, mobility, params, rng, N, shadowing=None, normalize=True):
    """Channel state for instance ``state.i + 1``."""
    i = state.i + 1
    scatter = step_small_scale(state.scatter, state.mu[:, None], rng)
    if params.kind == "rician":
        h = rician_small_scale(params.rician_kappa, rng, theta=state.theta, scatter=scatter)
    else:
        h = scatter
    if mobility.static:
        return replace(state, i=i, h=h, scatter=scatter)
    pos = mobility.position(i, N)
    d = _distances(pos, topology.ru_pos)
    shadow, shadow_dist = state.shadow, state.shadow_dist
    if shadowing is not None and shadowing.enabled and shadowing.sigma_s_sq > 0:
        moved = np.abs(d - shadow_dist) > 1.0
        if np.any(moved):
            shadow = shadow.copy()
            shadow_dist = shadow_dist.copy()
            shadow[moved] = _shadow_factor(shadowing, rng, int(moved.sum()))
            shadow_dist[moved] = d[moved]
    beta = pathloss(d, topology.geometry, params.f_c, normalize=normalize) * shadow
    return ChannelState(i, h, beta, state.mu, pos, shadow, shadow_dist, state.theta, scatter)


class ChannelProcess:
    """Single-writer wrapper stepping one replica's channel through instances 0..N."""

    def __init__(self, topology, mobility, params, rng, N, shadowing=None, normalize=True):
        self.topology = topology
        self.mobility = mobility
        self.params = params
        self.rng = rng
        self.N = N
        self.shadowing = shadowing
        self.normalize = normalize
        self.state = initial_state(topology, mobility, params, rng, shadowing, normalize)

    @property
    def static(self):
        return self.mobility.static

    def step(self):
        self.state = advance(self.state, self.topology, self.mobility, self.params, self.rng,
                             self.N, self.shadowing, self.normalize)
        return self.state
