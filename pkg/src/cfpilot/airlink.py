"""Pilot transmission, channel estimation and the analytic link metrics.

Conventions: a codebook is a ``T_p x T_p`` unitary matrix whose columns are
the pilots; ``X`` is the ``T_p x K`` matrix of pilots actually sent;
channels ``g`` and estimates are ``K x M``; ``mask`` is the boolean
``K x M`` cluster matrix (True where RU m serves user k).
"""
from dataclasses import dataclass
import math

import numpy as np

from .channel import complex_normal
from .errors import InsufficientSamplesError, SingularMatrixError


def make_codebook(T_p, kind="canonical"):
    if T_p < 1:
        raise ValueError("T_p must be at least 1")
    if kind == "canonical":
        return np.eye(T_p, dtype=complex)
    if kind == "dft":
        n = np.arange(T_p)
        return np.exp(-2j * np.pi * np.outer(n, n) / T_p) / math.sqrt(T_p)
    raise ValueError(f"unknown codebook kind {kind!r}")


def is_unitary(T, tol=1e-10):
    T = np.asarray(T)
    return T.shape[0] == T.shape[1] and np.allclose(T.conj().T @ T, np.eye(T.shape[1]), atol=tol, rtol=0)


@dataclass
class PilotAssignment:
    """User k sends column ``pilot_of[k]`` of codebook ``agent_of[k]``."""

    agent_of: np.ndarray
    pilot_of: np.ndarray

    def __post_init__(self):
        self.agent_of = np.asarray(self.agent_of, dtype=int)
        self.pilot_of = np.asarray(self.pilot_of, dtype=int)

    @property
    def K(self):
        return len(self.pilot_of)

    def pilot_matrix(self, codebooks):
        """``T_p x K`` matrix of transmitted pilots."""
        cols = [codebooks[a][:, t] for a, t in zip(self.agent_of, self.pilot_of)]
        return np.stack(cols, axis=1)

    def copy(self):
        return PilotAssignment(self.agent_of.copy(), self.pilot_of.copy())


def transmit_pilots(X, g, sigma_sq, rng):
    """Received pilot signals at every RU, shape ``T_p x M``."""
    Y = X @ g
    if sigma_sq > 0:
        Y = Y + math.sqrt(sigma_sq) * complex_normal(rng, Y.shape)
    return Y


def estimate_pilot_matching(Y, X, mask=None):
    """``ghat[k, m] = x_k^H y_m``; entries outside the clusters are zeroed."""
    ghat = X.conj().T @ Y
    if mask is not None:
        ghat = np.where(mask, ghat, 0.0)
    return ghat


def estimate_least_square(Y, X, mask=None, max_cond=1e12):
    """Pseudo-inverse estimate ``pinv(X) Y`` via the smaller Gram matrix.

    With more users than pilots this is ``X^H (X X^H)^-1 Y``; with at most
    T_p users ``X X^H`` is rank deficient and ``(X^H X)^-1 X^H Y`` is used,
    which recovers the channels exactly for distinct pilots without noise.
    """
    T_p, K = X.shape
    gram = X.conj().T @ X if K <= T_p else X @ X.conj().T
    if np.linalg.cond(gram) > max_cond:
        raise SingularMatrixError("pilot Gram matrix is singular; least-square estimation needs "
                                  "linearly independent pilots")
    if K <= T_p:
        ghat = np.linalg.solve(gram, X.conj().T @ Y)
    else:
        ghat = X.conj().T @ np.linalg.solve(gram, Y)
    if mask is not None:
        ghat = np.where(mask, ghat, 0.0)
    return ghat


def cross_gain(X):
    """``C[k, k'] = |x_k^H x_k'|^2`` with the diagonal zeroed."""
    C = np.abs(X.conj().T @ X) ** 2
    np.fill_diagonal(C, 0.0)
    return C


def contamination(X, beta):
    """``xi[k, m] = sum_{k' != k} beta[k', m] |x_k^H x_k'|^2``."""
    return cross_gain(X) @ beta


def analytic_mse(X, beta, mask, sigma_sq):
    """Per-user estimation MSE and its sum.

    The noise term enters once per serving RU.
    """
    per_link = contamination(X, beta) + sigma_sq
    mse = np.where(mask, per_link, 0.0).sum(axis=1)
    return mse, float(mse.sum())


def sum_mse(X, beta, mask, sigma_sq):
    return analytic_mse(X, beta, mask, sigma_sq)[1]


def pc_degree(X, beta_traj, users, mask):
    """Pilot contamination on ``users`` summed over an instance trajectory.

    ``beta_traj`` is ``N_n x K x M`` (or ``K x M`` for a single instance).
    """
    beta_traj = np.asarray(beta_traj)
    if beta_traj.ndim == 2:
        beta_traj = beta_traj[None]
    C = cross_gain(X)
    users = list(users)
    xi = np.einsum("kj,njm->km", C[users], beta_traj)
    return float(np.where(mask[users], xi, 0.0).sum())


def empirical_power(ghat_traj):
    """Average of ``|ghat|^2`` over the leading (instance) axis."""
    ghat_traj = np.asarray(ghat_traj)
    return np.mean(np.abs(ghat_traj) ** 2, axis=0)


def _pilot_estimates(X, g, sigma_sq, rng):
    """Vectorised pilot matching over a batch ``g`` of shape ``S x K x M``."""
    S, K, M = g.shape
    T_p = X.shape[0]
    Y = np.einsum("tk,skm->stm", X, g)
    if sigma_sq > 0:
        Y = Y + math.sqrt(sigma_sq) * complex_normal(rng, (S, T_p, M))
    return np.einsum("tk,stm->skm", X.conj(), Y)


def sinr_monte_carlo(X, beta, mask, sigma_sq, rng, rho=None, sigma_u_sq=None,
                     sigma_d_sq=None, n_mc=20000, perfect_csi=False, chunk=2000):
    """Uplink and downlink SINR per user by Monte Carlo over (h, w).

    Uplink uses the cluster-wise conjugate combiner; downlink uses normalised
    conjugate beamforming from every serving RU. Returns ``(ul, dl)`` arrays.
    """
    K, M = beta.shape
    rho = np.ones(K) if rho is None else np.broadcast_to(np.asarray(rho, float), (K,))
    sigma_u_sq = sigma_sq if sigma_u_sq is None else sigma_u_sq
    sigma_d_sq = sigma_sq if sigma_d_sq is None else sigma_d_sq
    maskf = mask.astype(float)
    sq_beta = np.sqrt(beta)

    ul_sig = np.zeros(K, complex)
    ul_cross = np.zeros((K, K))
    ul_pow = np.zeros(K)
    dl_sig = np.zeros(K, complex)
    dl_cross = np.zeros((K, K))
    done = 0
    while done < n_mc:
        s = min(chunk, n_mc - done)
        g = sq_beta * complex_normal(rng, (s, K, M))
        ghat = g if perfect_csi else _pilot_estimates(X, g, sigma_sq, rng)
        ghat = ghat * maskf
        # B[s, k, j] = sum_{m in cluster k} conj(ghat_km) g_jm
        B = np.einsum("skm,sjm->skj", ghat.conj(), g)
        ul_sig += np.einsum("skk->k", B)
        ul_cross += np.sum(np.abs(B) ** 2, axis=0)
        ul_pow += np.sum(np.abs(ghat) ** 2, axis=(0, 2))
        mag = np.abs(ghat)
        with np.errstate(divide="ignore", invalid="ignore"):
            prec = np.where(mag > 1e-12, ghat.conj() / mag, 0.0)
        # D[s, k, j] = sum_{m in cluster j} g_km conj(ghat_jm) / |ghat_jm|
        D = np.einsum("skm,sjm->skj", g, prec)
        dl_sig += np.einsum("skk->k", D)
        dl_cross += np.sum(np.abs(D) ** 2, axis=0)
        done += s
    ul_sig /= n_mc
    ul_cross /= n_mc
    ul_pow /= n_mc
    dl_sig /= n_mc
    dl_cross /= n_mc

    num_ul = rho * np.abs(ul_sig) ** 2
    den_ul = ul_cross @ rho - num_ul + sigma_u_sq * ul_pow
    num_dl = np.abs(dl_sig) ** 2
    den_dl = dl_cross.sum(axis=1) - num_dl + sigma_d_sq
    if np.any(den_ul <= 0) or np.any(den_dl <= 0):
        raise InsufficientSamplesError("non-positive SINR denominator; increase n_mc")
    return num_ul / den_ul, num_dl / den_dl


def spectral_efficiency(sinr):
    return np.log2(1.0 + np.asarray(sinr))


def pilot_bits(T_p):
    return math.ceil(math.log2(T_p)) if T_p > 1 else 0


def overhead_du_based(T_p, K_du_sizes, M_du_sizes, B, N_n):
    b_d = pilot_bits(T_p)
    b_u = 2 * B * T_p
    return sum(2 * b_d * kd + b_u * md * N_n for kd, md in zip(K_du_sizes, M_du_sizes))


def overhead_ru_based(T_p, K_du_sizes, K_ru_sizes_per_du):
    b_d = pilot_bits(T_p)
    return b_d * sum(kd + sum(kr) for kd, kr in zip(K_du_sizes, K_ru_sizes_per_du))


def overhead_table(T_p, K, M, U, cluster_size, B, N_n):
    """Bits per near-RT loop for equal-size DU groups.

    Each user is served by ``cluster_size`` RUs, so the RU-side pilot
    notifications total ``K * cluster_size`` regardless of layout.
    """
    kd = [K // U + (1 if u < K % U else 0) for u in range(U)]
    md = [M // U + (1 if u < M % U else 0) for u in range(U)]
    du = overhead_du_based(T_p, kd, md, B, N_n)
    per_du_ru = [[cluster_size * k] for k in kd]
    ru = overhead_ru_based(T_p, kd, per_du_ru)
    return du, ru
