"""Decentralised pilot-assignment game: one DQN agent per DU.

Each agent owns the users paired with its DU. Its state is the one-hot
``users x T_p`` pilot matrix, an action re-pilots a single user, and its
reward maps the (message-reinforced) average estimate power of its users
onto [0, 1] so that less contamination pays more.
"""
from dataclasses import dataclass, field
import math
import time

import numpy as np

from . import neural
from .airlink import PilotAssignment, estimate_pilot_matching, sum_mse
from .channel import complex_normal
from .errors import InvalidState


# ---------------------------------------------------------------------------
# state / action encoding


def state_from_assignment(local_pilots, T_p):
    local_pilots = np.asarray(local_pilots)
    if np.any(local_pilots < 0) or np.any(local_pilots >= T_p):
        raise InvalidState("every local user needs a pilot in [0, T_p)")
    phi = np.zeros((len(local_pilots), T_p))
    phi[np.arange(len(local_pilots)), local_pilots] = 1.0
    return phi


def assignment_from_state(phi):
    phi = np.asarray(phi)
    if not np.all(phi.sum(axis=1) == 1):
        raise InvalidState("state rows must be one-hot")
    return np.argmax(phi, axis=1)


def encode_action(local_user, pilot, T_p):
    return local_user * T_p + pilot


def decode_action(a, T_p):
    return divmod(int(a), T_p)


def apply_action(local_pilots, a, T_p):
    out = np.array(local_pilots, copy=True)
    user, pilot = decode_action(a, T_p)
    out[user] = pilot
    return out


def epsilon(ell, Gamma=15.0, N=10000, N_n=10):
    return min(1.0, max(0.0, math.exp(-(Gamma / N) * N_n * ell)))


def select_action(params, state, eps, rng):
    """Epsilon-greedy; greedy ties go to the lowest flat index."""
    n_actions = params["W2"].shape[0]
    if rng.random() < eps:
        return int(rng.integers(n_actions))
    return int(np.argmax(neural.forward(params, state)))


# ---------------------------------------------------------------------------
# observation, reward and the internal penalty


def observe(u, p, K_du, mask, ru_du, alpha=None, link_ok=None):
    """Local (``pbar``) and message-reinforced (``ptilde``) observation of agent u.

    ``alpha[m]`` is the fronthaul status of RU m and ``link_ok[m]`` the
    inter-DU link status between DU u and RU m's DU; both default to working.
    """
    users = list(K_du[u])
    if not users:
        return 0.0, 0.0
    pm = np.where(mask[users], p[users], 0.0)
    own = ru_du == u
    a = np.ones(len(ru_du)) if alpha is None else np.asarray(alpha, float)
    e = np.ones(len(ru_du)) if link_ok is None else np.asarray(link_ok, float)
    local = pm[:, own].sum(axis=0) @ a[own]
    remote = pm[:, ~own].sum(axis=0) @ e[~own]
    return float(local), float(local + remote)


def reward(p, p_min, p_max):
    return min(1.0, max(0.0, (p_max - p) / (p_max - p_min)))


def internal_penalty(local_pilots, T_p):
    """Pilot-load imbalance ``kappa`` and its maximum ``kappa_max``.

    ``kappa = sum_t |count_t - floor(n / T_p)|``: the absolute value is taken
    per pilot. Taken outside the sum, as typeset, the expression is constant
    whenever T_p divides n and the penalty would vanish for every assignment.
    """
    n = len(local_pilots)
    counts = np.bincount(np.asarray(local_pilots, dtype=int), minlength=T_p)
    kappa = float(np.abs(counts - n // T_p).sum())
    kappa_max = 2.0 * n * (T_p - 1) / T_p
    return kappa, kappa_max


@dataclass
class RewardRange:
    p_min: float = 0.0
    p_max: float = None

    @property
    def ready(self):
        return self.p_max is not None

    def __call__(self, p):
        return reward(p, self.p_min, self.p_max)


# ---------------------------------------------------------------------------
# replay memory


class ReplayMemory:
    """FIFO ring of (S, a, r, S') with flattened states."""

    def __init__(self, n_state, capacity=1000):
        self.capacity = capacity
        self.S = np.zeros((capacity, n_state))
        self.a = np.zeros(capacity, dtype=int)
        self.r = np.zeros(capacity)
        self.S2 = np.zeros((capacity, n_state))
        self.size = 0
        self.head = 0
        self.pushed = 0

    def __len__(self):
        return self.size

    def push(self, S, a, r, S2):
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"reward {r} outside [0, 1]")
        i = self.head
        self.S[i] = np.ravel(S)
        self.a[i] = a
        self.r[i] = r
        self.S2[i] = np.ravel(S2)
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def sample(self, n, rng):
        idx = rng.choice(self.size, size=n, replace=False)
        return self.S[idx], self.a[idx], self.r[idx], self.S2[idx]

    def oldest_first(self):
        """Stored rows in insertion order (for inspection)."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = (np.arange(self.capacity) + self.head) % self.capacity
        return self.S[order], self.a[order], self.r[order], self.S2[order]


# ---------------------------------------------------------------------------
# agent


class Agent:
    def __init__(self, u, users, T_p, rng, memory_size=1000, lr=0.001, gamma=0.5, batch_size=128):
        self.u = u
        self.users = tuple(users)
        self.T_p = T_p
        self.rng = rng
        self.gamma = gamma
        self.batch_size = batch_size
        self.params = neural.init_params(max(1, len(self.users)), T_p, rng)
        self.target = neural.clone_params(self.params)
        self.adam = neural.Adam(self.params, lr=lr)
        self.memory = ReplayMemory(max(1, len(self.users)) * T_p, memory_size)
        self.pilots = rng.integers(T_p, size=len(self.users))
        self.losses = []

    @property
    def n_actions(self):
        return len(self.users) * self.T_p

    def state(self):
        return state_from_assignment(self.pilots, self.T_p)

    def act(self, eps):
        if not self.users:
            return -1
        return select_action(self.params, self.state(), eps, self.rng)

    def apply(self, a):
        if a >= 0:
            self.pilots = apply_action(self.pilots, a, self.T_p)

    def virtual_experiences(self, S, r, L):
        """``L`` hypothetical (S, a_int, r_int, S_int) tuples from state ``S``.

        ``r_int = (1 - kappa / kappa_max) * r`` scores the load balance of the
        hypothetical assignment; the environment is never touched.
        """
        pilots = assignment_from_state(S)
        out = []
        for _ in range(L):
            a = int(self.rng.integers(self.n_actions))
            hyp = apply_action(pilots, a, self.T_p)
            kappa, kappa_max = internal_penalty(hyp, self.T_p)
            frac = 1.0 - kappa / kappa_max if kappa_max > 0 else 1.0
            out.append((S, a, max(0.0, frac) * r, state_from_assignment(hyp, self.T_p)))
        return out

    def remember(self, S, a, r, S2):
        self.memory.push(S, a, r, S2)

    def train_step(self):
        """One Adam minibatch step; returns the mean squared TD error or None."""
        if len(self.memory) < self.batch_size:
            return None
        S, a, r, S2 = self.memory.sample(self.batch_size, self.rng)
        q_next = neural.forward_batch(self.target, S2)
        y = r + self.gamma * q_next.max(axis=1)
        grads, loss = neural.backward(self.params, S, a, y)
        self.adam.step(self.params, grads)
        self.losses.append(loss)
        return loss

    def sync_target(self):
        self.target = neural.clone_params(self.params)


# ---------------------------------------------------------------------------
# orchestration


@dataclass
class GameConfig:
    N: int = 10000
    N_n: int = 10
    L: int = 9
    Gamma: float = 15.0
    gamma: float = 0.5
    memory_size: int = 1000
    batch_size: int = 128
    lr: float = 0.001
    train_every: int = 200          # stored experiences between training events
    sync_every: int = 400           # stored experiences between target syncs
    train_batches: int = 32         # minibatch steps per training event
    sigma_sq: float = 1e-5
    message_passing: bool = True
    P_f: float = 0.0
    P_d: float = 0.0
    calibration_loops: int = 20
    p_max_quantile: float = 95.0
    p_min: float = 0.0
    p_max: float = None
    recluster: bool = True


@dataclass
class RunRecord:
    sum_mse: np.ndarray
    rewards: np.ndarray
    actions: np.ndarray
    observations: np.ndarray
    cs_events: list = field(default_factory=list)
    runtime: dict = field(default_factory=dict)
    losses: list = field(default_factory=list)
    final_pilots: np.ndarray = None
    codebooks: list = None
    unitarity: list = field(default_factory=list)
    replica: int = 0
    algorithm: str = ""
    sum_se: tuple = None            # (uplink, downlink) at the final assignment


class PilotGame:
    """Coordinator: advances the channel, runs estimation, and steps every agent.

    ``codesearch`` (optional) is ticked once per near-RT loop after rewards.
    """

    def __init__(self, topology, channel, codebooks, config, rngs, codesearch=None):
        self.topology = topology
        self.channel = channel
        self.codebooks = [np.array(c, copy=True) for c in codebooks]
        self.cfg = config
        self.rng_env = rngs["env"]
        self.rng_links = rngs["links"]
        self.codesearch = codesearch
        T_p = self.codebooks[0].shape[0]
        self.T_p = T_p
        K_du = topology.K_du
        self.agents = [
            Agent(u, K_du[u], T_p, rngs[f"agent{u}"], config.memory_size, config.lr,
                  config.gamma, config.batch_size)
            for u in range(topology.U)
        ]
        self.K_du = K_du
        self.mask = topology.cluster_mask
        self.ranges = [RewardRange(config.p_min, config.p_max) for _ in self.agents]
        self._pending = [[] for _ in self.agents]
        self._calib = [[] for _ in self.agents]

    # -- helpers --------------------------------------------------------------

    def assignment(self):
        K = self.topology.K
        pilot = np.zeros(K, dtype=int)
        agent = np.asarray(self.topology.serving_du, dtype=int)
        for ag in self.agents:
            pilot[list(ag.users)] = ag.pilots
        return PilotAssignment(agent, pilot)

    def pilot_matrix(self):
        return self.assignment().pilot_matrix(self.codebooks)

    def _link_draws(self):
        U, M = self.topology.U, self.topology.M
        cfg = self.cfg
        alpha = self.rng_links.random(M) >= cfg.P_f
        p_d = 1.0 if not cfg.message_passing else cfg.P_d
        link_ok = self.rng_links.random((U, M)) >= p_d
        return alpha, link_ok

    def _store(self, ag, S, a, r, S2, L):
        ag.remember(S, a, r, S2)
        for exp in ag.virtual_experiences(S2, r, L):
            ag.remember(*exp)

    # -- main loop ------------------------------------------------------------

    def run(self):
        cfg = self.cfg
        topo = self.topology
        n_loops = cfg.N // cfg.N_n
        U = topo.U
        sum_curve = np.zeros(n_loops * cfg.N_n)
        rewards = np.full((n_loops, U), np.nan)
        actions = np.full((n_loops, U), -1, dtype=int)
        obs = np.zeros((n_loops, U))
        t_pa = 0.0
        t_train = 0.0
        t_env = 0.0
        prev = [None] * U          # (S_prev, a_prev) awaiting reward
        since_train = [0] * U
        since_sync = [0] * U
        unitarity = []

        for ell in range(n_loops):
            t0 = time.perf_counter()
            eps = epsilon(ell, cfg.Gamma, cfg.N, cfg.N_n)
            states = [ag.state() for ag in self.agents]
            # rewards for loop ell-1 were computed at its end; store experiences now
            for u, ag in enumerate(self.agents):
                if prev[u] is None or not ag.users:
                    continue
                S_prev, a_prev, p_prev = prev[u]
                if self.ranges[u].ready:
                    r = self.ranges[u](p_prev)
                    self._store(ag, S_prev, a_prev, r, states[u], cfg.L)
                    n_new = 1 + cfg.L
                    since_train[u] += n_new
                    since_sync[u] += n_new
                else:
                    self._pending[u].append((S_prev, a_prev, p_prev, states[u]))
            for u, ag in enumerate(self.agents):
                a = ag.act(eps)
                actions[ell, u] = a
                ag.apply(a)
            X = self.pilot_matrix()
            t_pa += time.perf_counter() - t0

            # N_n RT loops of estimation
            t1 = time.perf_counter()
            acc = np.zeros((topo.K, topo.M))
            for n in range(cfg.N_n):
                i = ell * cfg.N_n + n
                if i > 0:
                    self.channel.step()
                st = self.channel.state
                Y = X @ st.g
                if cfg.sigma_sq > 0:
                    Y = Y + math.sqrt(cfg.sigma_sq) * complex_normal(self.rng_env, Y.shape)
                ghat = estimate_pilot_matching(Y, X, self.mask)
                acc += np.abs(ghat) ** 2
                sum_curve[i] = sum_mse(X, st.beta, self.mask, cfg.sigma_sq)
            p = acc / cfg.N_n
            t_env += time.perf_counter() - t1

            t2 = time.perf_counter()
            alpha, link_ok = self._link_draws()
            for u, ag in enumerate(self.agents):
                _, ptilde = observe(u, p, self.K_du, self.mask, topo.ru_du, alpha, link_ok[u])
                obs[ell, u] = ptilde
                prev[u] = (states[u], actions[ell, u], ptilde)
                rng_ = self.ranges[u]
                if not rng_.ready:
                    self._calib[u].append(ptilde)
                    if len(self._calib[u]) >= cfg.calibration_loops:
                        rng_.p_max = max(float(np.percentile(self._calib[u], cfg.p_max_quantile)),
                                         rng_.p_min + 1e-30)
                        for S_p, a_p, p_p, S2_p in self._pending[u]:
                            self._store(ag, S_p, a_p, rng_(p_p), S2_p, cfg.L)
                            since_train[u] += 1 + cfg.L
                            since_sync[u] += 1 + cfg.L
                        self._pending[u] = []
                if rng_.ready:
                    rewards[ell, u] = rng_(ptilde)

            t_pa += time.perf_counter() - t2

            t5 = time.perf_counter()
            for u, ag in enumerate(self.agents):
                if since_train[u] >= cfg.train_every and len(ag.memory) >= ag.batch_size:
                    since_train[u] = 0
                    for _ in range(cfg.train_batches):
                        ag.train_step()
                if since_sync[u] >= cfg.sync_every:
                    since_sync[u] = 0
                    ag.sync_target()
            t_train += time.perf_counter() - t5

            if self.codesearch is not None:
                t3 = time.perf_counter()
                new_states = [ag.state() for ag in self.agents]
                self.codebooks = self.codesearch.tick(ell, new_states, rewards[ell], self.codebooks)
                unitarity.append(max(float(np.abs(c.conj().T @ c - np.eye(self.T_p)).max())
                                     for c in self.codebooks))
                t_pa += time.perf_counter() - t3

            if cfg.recluster and not self.channel.static:
                t4 = time.perf_counter()
                topo = topo.with_user_positions(self.channel.state.user_pos)
                self.topology = topo
                self.mask = topo.cluster_mask
                t_env += time.perf_counter() - t4

        return RunRecord(
            sum_mse=sum_curve, rewards=rewards, actions=actions, observations=obs,
            cs_events=list(self.codesearch.events) if self.codesearch is not None else [],
            runtime={"pa": t_pa, "train": t_train, "env": t_env},
            losses=[ag.losses for ag in self.agents],
            final_pilots=self.assignment().pilot_of.copy(),
            codebooks=[c.copy() for c in self.codebooks],
            unitarity=unitarity,
        )


# ---------------------------------------------------------------------------
# analysis helper: observation profile of every action from a fixed state


def action_observation_profile(topology, beta, codebooks, pilots, u, sigma_sq, n_loops, rng):
    """Average reinforced observation of agent u after each of its actions.

    The channel is redrawn i.i.d. every RT loop with fixed large-scale gains;
    the same draws are reused for every action so identical resulting
    assignments give identical averages. Returns ``(avg_ptilde, pc)`` arrays
    indexed by flat action, where ``pc`` is the contamination degree of the
    local users summed over ``n_loops`` instances.
    """
    from .airlink import pc_degree

    K, M = beta.shape
    mask = topology.cluster_mask
    K_du = topology.K_du
    users = list(K_du[u])
    T_p = codebooks[0].shape[0]
    agent_of = np.asarray(topology.serving_du, dtype=int)
    h = complex_normal(rng, (n_loops, K, M))
    g = np.sqrt(beta) * h
    w = math.sqrt(sigma_sq) * complex_normal(rng, (n_loops, T_p, M))
    n_actions = len(users) * T_p
    avg = np.zeros(n_actions)
    pc = np.zeros(n_actions)
    local = np.asarray(pilots)[users]
    for a in range(n_actions):
        new_local = apply_action(local, a, T_p)
        pil = np.array(pilots, copy=True)
        pil[users] = new_local
        X = PilotAssignment(agent_of, pil).pilot_matrix(codebooks)
        Y = np.einsum("tk,skm->stm", X, g) + w
        ghat = np.einsum("tk,stm->skm", X.conj(), Y)
        p = np.mean(np.abs(ghat) ** 2, axis=0)
        avg[a] = observe(u, p, K_du, mask, topology.ru_du)[1]
        pc[a] = pc_degree(X, beta, users, mask) * n_loops
    return avg, pc
