"""Centralised pilot-assignment baselines over the analytic sum-MSE.

All baselines share one orthonormal codebook, so two users interfere iff they
hold the same pilot index. With ``W[k, j] = sum_{m in cluster k} beta[j, m]``
the objective becomes

    sum-MSE(p) = sigma^2 * sum_k |cluster k| + sum_{k != j, p_k = p_j} W[k, j]

which every solver below evaluates directly or incrementally.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import complex_normal
from .errors import InfeasibleError


@dataclass
class OracleInputs:
    beta: np.ndarray
    mask: np.ndarray
    sigma_sq: float
    T_p: int

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if np.any(self.beta < 0):
            raise ValueError("beta must be non-negative")
        W = self.mask.astype(float) @ self.beta.T
        np.fill_diagonal(W, 0.0)
        self.W = W
        self.S = W + W.T          # symmetric pair weight
        self.floor = self.sigma_sq * float(self.mask.sum())

    @property
    def K(self):
        return self.beta.shape[0]

    def cost(self, pilots):
        pilots = np.asarray(pilots)
        same = pilots[:, None] == pilots[None, :]
        return self.floor + float(np.sum(self.W[same]))

    def move_delta(self, pilots, k, t):
        """Change in cost if user k switches to pilot t."""
        old = pilots[k]
        if old == t:
            return 0.0
        on_new = pilots == t
        on_old = pilots == old
        on_old[k] = False
        return float(self.S[k, on_new].sum() - self.S[k, on_old].sum())


def pa_random(K, T_p, rng):
    return rng.integers(T_p, size=K)


def pa_exhaustive(oracle, budget=2 ** 24, chunk=1 << 15):
    """Global minimiser; lexicographically smallest among ties (1e-12 relative)."""
    K, T_p = oracle.K, oracle.T_p
    total = T_p ** K
    if total > budget:
        raise InfeasibleError(f"T_p^K = {total} exceeds search budget {budget}")
    pairs = np.array([(k, j) for k in range(K) for j in range(k + 1, K)], dtype=int)
    pw = oracle.S[pairs[:, 0], pairs[:, 1]] if len(pairs) else np.zeros(0)
    powers = T_p ** np.arange(K - 1, -1, -1)
    best_cost = math.inf
    best_idx = None
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        digits = (idx[:, None] // powers[None, :]) % T_p
        if len(pairs):
            same = digits[:, pairs[:, 0]] == digits[:, pairs[:, 1]]
            costs = same.astype(float) @ pw
        else:
            costs = np.zeros(len(idx))
        j = int(np.argmin(costs))
        c = float(costs[j])
        tol = 1e-12 * max(1.0, abs(best_cost)) if best_idx is not None else 0.0
        if best_idx is None or c < best_cost - tol:
            best_cost = c
            best_idx = int(idx[j])
    # lexicographic tie-break: smallest index within tolerance of the optimum
    tol = 1e-12 * max(1.0, abs(best_cost))
    for start in range(0, best_idx + 1, chunk):
        idx = np.arange(start, min(best_idx + 1, start + chunk))
        digits = (idx[:, None] // powers[None, :]) % T_p
        costs = (digits[:, pairs[:, 0]] == digits[:, pairs[:, 1]]).astype(float) @ pw if len(pairs) \
            else np.zeros(len(idx))
        hits = np.flatnonzero(costs <= best_cost + tol)
        if len(hits):
            best_idx = int(idx[hits[0]])
            break
    return (best_idx // powers) % T_p


def pa_tabu(oracle, n_iter=None, tenure=None, rng=None, init=None):
    """Single-move tabu search over pilot indices.

    Each iteration takes the best non-tabu move (a tabu move is allowed when it
    beats the incumbent). Moving user k off pilot p forbids returning k to p
    for ``tenure`` iterations.
    """
    K, T_p = oracle.K, oracle.T_p
    n_iter = 50 * K if n_iter is None else n_iter
    tenure = max(1, K // 2) if tenure is None else tenure
    if init is None:
        rng = np.random.default_rng() if rng is None else rng
        init = pa_random(K, T_p, rng)
    cur = np.array(init, dtype=int)
    cur_cost = oracle.cost(cur)
    best, best_cost = cur.copy(), cur_cost
    tabu_until = {}
    S = oracle.S
    for it in range(n_iter):
        # delta[k, t] for all single-user moves at once
        onehot = np.zeros((K, T_p))
        onehot[np.arange(K), cur] = 1.0
        load = S @ onehot                       # load[k, t] = sum_{j on t} S[k, j]
        own = load[np.arange(K), cur]
        delta = load - own[:, None]
        delta[np.arange(K), cur] = np.inf
        move = None
        for flat in np.argsort(delta, axis=None, kind="stable"):
            k, t = divmod(int(flat), T_p)
            d = delta[k, t]
            if not np.isfinite(d):
                break
            is_tabu = tabu_until.get((k, t), -1) >= it
            if not is_tabu or cur_cost + d < best_cost - 1e-15:
                move = (k, t, d)
                break
        if move is None:
            break
        k, t, d = move
        tabu_until[(k, int(cur[k]))] = it + tenure
        cur[k] = t
        cur_cost += d
        if cur_cost < best_cost - 1e-15:
            best, best_cost = cur.copy(), cur_cost
    return best


def hungarian(cost):
    """Minimum-cost perfect matching of a square matrix; ``perm[row] = col``."""
    C = np.asarray(cost, dtype=float)
    n = C.shape[0]
    if C.ndim != 2 or C.shape != (n, n):
        raise ValueError("cost matrix must be square")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(C)
    perm = np.empty(n, dtype=int)
    perm[rows] = cols
    return perm


def pa_hungarian(oracle, max_sweeps=10):
    """Batch-wise Hungarian assignment.

    Users are ordered by descending total gain and cut into batches of at most
    T_p. Each batch is matched to distinct pilots by ``hungarian`` with cost
    equal to the contamination added against every user outside the batch
    that already holds a pilot. Later sweeps re-solve each batch against all
    other users and keep a batch update only if the total cost drops.
    """
    K, T_p = oracle.K, oracle.T_p
    order = np.argsort(-oracle.beta.sum(axis=1), kind="stable")
    batches = [order[i:i + T_p] for i in range(0, K, T_p)]
    pilots = np.full(K, -1)
    S = oracle.S

    def solve(batch, assigned):
        cost = np.zeros((T_p, T_p))
        others = assigned.copy()
        others[batch] = False
        for r, k in enumerate(batch):
            for t in range(T_p):
                cost[r, t] = S[k, others & (pilots == t)].sum()
        perm = hungarian(cost)
        return perm[:len(batch)]

    for batch in batches:
        pilots[batch] = solve(batch, pilots >= 0)
    best = oracle.cost(pilots)
    everyone = np.ones(K, dtype=bool)
    for _ in range(max_sweeps):
        improved = False
        for batch in batches:
            old = pilots[batch].copy()
            pilots[batch] = solve(batch, everyone)
            c = oracle.cost(pilots)
            if c < best - 1e-15:
                best = c
                improved = True
            else:
                pilots[batch] = old
        if not improved:
            break
    return pilots


def estimate_pathloss(beta, n_meas=10, sigma_sq=0.0, rng=None, h=None):
    """Large-scale gains from ``n_meas`` isolated pilot transmissions per link.

    ``h`` may supply the small-scale samples (``n_meas x K x M``) explicitly.
    """
    beta = np.asarray(beta, dtype=float)
    rng = np.random.default_rng() if rng is None else rng
    if h is None:
        h = complex_normal(rng, (n_meas,) + beta.shape)
    ghat = np.sqrt(beta) * h
    if sigma_sq > 0:
        ghat = ghat + math.sqrt(sigma_sq) * complex_normal(rng, ghat.shape)
    return np.maximum(0.0, np.mean(np.abs(ghat) ** 2, axis=0) - sigma_sq)
