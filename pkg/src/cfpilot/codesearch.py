"""Serialized codebook rotation search run on top of the pilot-assignment agents.

Once an agent's state has stayed unchanged for ``N_cs`` consecutive near-RT
loops it becomes eligible. Eligible agents take turns: each measures its
average reward over ``N_s`` loops, switches to a randomly rotated codebook,
measures again over ``N_s`` loops, and keeps the rotation only if the
average reward improved.
"""
from dataclasses import dataclass, field

import numpy as np

from .channel import complex_normal
from .errors import RankDeficientError


def gram_schmidt(A, tol=1e-10):
    """Classical Gram-Schmidt on the columns of ``A``, order preserved."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[1]
    Q = np.zeros_like(A)
    for j in range(n):
        v = A[:, j].copy()
        for i in range(j):
            v -= (Q[:, i].conj() @ A[:, j]) * Q[:, i]
        nrm = np.linalg.norm(v)
        if nrm < tol:
            raise RankDeficientError(f"column {j} is (numerically) dependent on earlier columns")
        Q[:, j] = v / nrm
    return Q


def perturbation_matrix(T_p, rng):
    P = complex_normal(rng, (T_p, T_p))
    return P / np.linalg.norm(P, axis=0, keepdims=True)


def eta(ell_vw, ell_star, N, N_n):
    horizon = N / N_n
    if ell_star >= horizon:
        return 0.0
    return float(np.clip(1.0 - (ell_vw - ell_star) / (horizon - ell_star), 0.0, 1.0))


def rotate_codebook(T_old, eta_value, P):
    T_p = T_old.shape[0]
    R = np.sqrt(1.0 - eta_value ** 2) * np.eye(T_p) + eta_value * P
    return gram_schmidt(R @ T_old)


@dataclass
class StabilityTracker:
    n_agents: int
    N_cs: int = 100
    counts: np.ndarray = None
    ell_star: list = None
    _last: list = None

    def __post_init__(self):
        self.counts = np.zeros(self.n_agents, dtype=int)
        self.ell_star = [None] * self.n_agents
        self._last = [None] * self.n_agents

    def update(self, ell, states):
        for u, S in enumerate(states):
            last = self._last[u]
            if last is not None and last.shape == S.shape and np.array_equal(last, S):
                self.counts[u] += 1
            else:
                self.counts[u] = 0
            self._last[u] = np.array(S, copy=True)
            if self.counts[u] == self.N_cs:
                self.ell_star[u] = ell


@dataclass
class CodebookSearch:
    n_agents: int
    N: int
    N_n: int
    rng: np.random.Generator
    N_cs: int = 100
    N_s: int = 5
    max_redraws: int = 10
    run_index: int = 0
    active: bool = False
    isolated: bool = False
    U_cs: list = field(default_factory=list)
    w: int = 0
    ell_vw: int = None
    events: list = field(default_factory=list)
    accepted: dict = field(default_factory=dict)

    def __post_init__(self):
        self.stability = StabilityTracker(self.n_agents, self.N_cs)
        self._T_old = None
        self._r_old = None
        self._history = {u: {} for u in range(self.n_agents)}

    @property
    def current_agent(self):
        return self.U_cs[self.w] if self.active and self.w < len(self.U_cs) else None

    def tick(self, ell, states, rewards, codebooks):
        """Advance one near-RT loop; returns the (possibly new) list of codebooks."""
        for u, r in enumerate(rewards):
            self._history[u][ell] = r
        self.stability.update(ell, states)
        codebooks = list(codebooks)
        if not self.active:
            self.U_cs = [u for u in range(self.n_agents)
                         if self.stability.ell_star[u] is not None and self.stability.ell_star[u] < ell]
            if self.U_cs:
                self.active = True
                self.w = 0
                self.events.append({"loop": ell, "event": "run_start", "run": self.run_index,
                                    "agents": list(self.U_cs)})
        if self.active:
            u = self.U_cs[self.w]
            if not self.isolated:
                self.ell_vw = ell
                self.isolated = True
            if ell == self.ell_vw + self.N_s - 1:
                self._r_old = self._window_mean(u, self.ell_vw, self.N_s)
                self._T_old = codebooks[u]
                e = eta(self.ell_vw, self.stability.ell_star[u], self.N, self.N_n)
                codebooks[u] = self._rotate(codebooks[u], e)
                self.events.append({"loop": ell, "event": "trial", "run": self.run_index,
                                    "agent": u, "eta": e, "r_old": self._r_old})
            if ell == self.ell_vw + 2 * self.N_s - 1:
                r_new = self._window_mean(u, self.ell_vw + self.N_s, self.N_s)
                keep = r_new > self._r_old
                if not keep:
                    codebooks[u] = self._T_old
                else:
                    self.accepted.setdefault(u, []).append((self._r_old, r_new))
                self.events.append({"loop": ell, "event": "accept" if keep else "revert",
                                    "run": self.run_index, "agent": u,
                                    "r_old": self._r_old, "r_new": r_new})
                self.w += 1
                self.isolated = False
            if self.w >= len(self.U_cs):
                self.events.append({"loop": ell, "event": "run_end", "run": self.run_index})
                self.run_index += 1
                self.active = False
        return codebooks

    def _window_mean(self, u, start, n):
        vals = [self._history[u].get(l, np.nan) for l in range(start, start + n)]
        return float(np.nanmean(vals)) if not np.all(np.isnan(vals)) else float("nan")

    def _rotate(self, T_old, e):
        for _ in range(self.max_redraws):
            try:
                return rotate_codebook(T_old, e, perturbation_matrix(T_old.shape[0], self.rng))
            except RankDeficientError:
                continue
        return T_old
