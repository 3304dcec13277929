"""Small Q-network with hand-written backprop and Adam.

Layout for an agent with ``n`` = |users| * T_p inputs and outputs::

    conv: 32 kernels spanning the whole state -> 32 scalars   (W0: 32 x n)
    fc1 : 32 -> n                                              (W1: n x 32)
    fc2 : n -> n                                               (W2: n x n)

A kernel the size of its input reduces to a dense layer, so the "conv" is
stored as one. ReLU follows every layer, the output included.
"""
import copy
import hashlib

import numpy as np

from .errors import InvalidInput

N_KERNELS = 32
PARAM_NAMES = ("W0", "b0", "W1", "b1", "W2", "b2")


def init_params(n_users, T_p, rng, n_kernels=N_KERNELS):
    n = n_users * T_p

    def glorot(fan_out, fan_in):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_out, fan_in))

    return {
        "W0": glorot(n_kernels, n), "b0": np.zeros(n_kernels),
        "W1": glorot(n, n_kernels), "b1": np.zeros(n),
        "W2": glorot(n, n), "b2": np.zeros(n),
    }


def zeros_like_params(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def _relu(z):
    return np.maximum(z, 0.0)


def forward_batch(params, X, return_cache=False):
    """Q-values for a ``B x n`` batch of flattened states."""
    x = np.asarray(X, dtype=float)
    n_in = params["W0"].shape[1]
    if x.ndim != 2 or x.shape[1] != n_in:
        raise InvalidInput(f"batch shape {x.shape} does not match network input {n_in}")
    z0 = x @ params["W0"].T + params["b0"]
    a0 = _relu(z0)
    z1 = a0 @ params["W1"].T + params["b1"]
    a1 = _relu(z1)
    z2 = a1 @ params["W2"].T + params["b2"]
    q = _relu(z2)
    if return_cache:
        return q, (x, z0, a0, z1, a1, z2)
    return q


def forward(params, state):
    """Q-value vector for one state matrix (|users| x T_p)."""
    x = np.asarray(state, dtype=float)
    n_in = params["W0"].shape[1]
    if x.size != n_in:
        raise InvalidInput(f"state has {x.size} entries, network expects {n_in}")
    return forward_batch(params, x.reshape(1, -1))[0]


def backward(params, states, actions, targets):
    """Gradients of ``mean_b (y_b - Q(s_b)[a_b])^2`` and the loss itself."""
    actions = np.atleast_1d(np.asarray(actions, dtype=int))
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    B = len(actions)
    states = np.asarray(states, dtype=float).reshape(B, -1)
    q, (x, z0, a0, z1, a1, z2) = forward_batch(params, states, return_cache=True)
    rows = np.arange(B)
    err = q[rows, actions] - targets
    loss = float(np.mean(err ** 2))

    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * err / B
    dz2 = dq * (z2 > 0)
    grads = {"W2": dz2.T @ a1, "b2": dz2.sum(axis=0)}
    dz1 = (dz2 @ params["W2"]) * (z1 > 0)
    grads["W1"] = dz1.T @ a0
    grads["b1"] = dz1.sum(axis=0)
    dz0 = (dz1 @ params["W1"]) * (z0 > 0)
    grads["W0"] = dz0.T @ x
    grads["b0"] = dz0.sum(axis=0)
    return grads, loss


class Adam:
    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)
        self.t = 0

    def step(self, params, grads):
        """Update ``params`` in place."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k in params:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params


def clone_params(params):
    return copy.deepcopy(params)


def params_digest(params):
    h = hashlib.sha256()
    for k in PARAM_NAMES:
        h.update(k.encode())
        h.update(np.ascontiguousarray(params[k]).tobytes())
    return h.hexdigest()


def save_params(params, path):
    """Text snapshot: ``name d0 [d1]`` header then row-major values, per array."""
    with open(path, "w") as fh:
        for k in PARAM_NAMES:
            arr = params[k]
            fh.write(f"{k} {' '.join(str(d) for d in arr.shape)}\n")
            fh.write(" ".join(repr(float(v)) for v in arr.ravel()) + "\n")


def load_params(path):
    params = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    for header, values in zip(lines[0::2], lines[1::2]):
        name, *dims = header.split()
        shape = tuple(int(d) for d in dims)
        params[name] = np.array([float(v) for v in values.split()]).reshape(shape)
    return params
