"""Small tanh MLPs with hand-rolled backprop, plus Adam.

Both the policy and the value function default to two hidden layers of width
32. The policy head is a diagonal Gaussian with a state-independent,
learnable log standard deviation clamped to [-5, 2].
"""
from __future__ import annotations

import numpy as np

from ..errors import DataError

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG2PI = np.log(2.0 * np.pi)


def _init_layers(rng: np.random.Generator, sizes: tuple[int, ...]):
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.normal(scale=scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


class _Mlp:
    """Feed-forward tanh network with linear output."""

    def __init__(self, rng, in_dim, out_dim, hidden=(32, 32)):
        self.sizes = (in_dim, *hidden, out_dim)
        self.weights, self.biases = _init_layers(rng, self.sizes)

    def forward(self, x: np.ndarray):
        """Returns output plus the per-layer activations for backprop."""
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k != last:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def backward(self, acts, grad_out):
        """Gradients of sum(grad_out * output) w.r.t. weights and biases."""
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        delta = grad_out
        for k in range(len(self.weights) - 1, -1, -1):
            gw[k] = acts[k].T @ delta
            gb[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.weights[k].T) * (1.0 - acts[k] ** 2)
        return gw, gb

    def param_arrays(self):
        return [*self.weights, *self.biases]


def _flatten(arrays) -> np.ndarray:
    return np.concatenate([a.ravel() for a in arrays])


def _unflatten(flat: np.ndarray, template) -> list[np.ndarray]:
    out = []
    offset = 0
    for a in template:
        out.append(flat[offset : offset + a.size].reshape(a.shape).copy())
        offset += a.size
    if offset != flat.size:
        raise DataError("parameter vector size mismatch")
    return out


class Adam:
    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        """Update increment for a gradient ASCENT direction."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class GaussianPolicy:
    """Diagonal Gaussian policy over continuous actions."""

    def __init__(self, obs_dim: int, act_dim: int, hidden=(32, 32), seed: int = 0,
                 log_std_init: float = -0.5):
        rng = np.random.default_rng(seed)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.net = _Mlp(rng, obs_dim, act_dim, hidden)
        self.log_std = np.full(act_dim, float(np.clip(log_std_init, LOG_STD_MIN, LOG_STD_MAX)))

    # -- parameter vector ---------------------------------------------------

    def get_flat(self) -> np.ndarray:
        return _flatten([*self.net.param_arrays(), self.log_std])

    def set_flat(self, flat: np.ndarray):
        arrays = _unflatten(np.asarray(flat, dtype=float), [*self.net.param_arrays(), self.log_std])
        n_w = len(self.net.weights)
        self.net.weights = arrays[:n_w]
        self.net.biases = arrays[n_w:-1]
        self.log_std = np.clip(arrays[-1], LOG_STD_MIN, LOG_STD_MAX)
        if not np.all(np.isfinite(self.get_flat())):
            raise DataError("policy parameters are not finite")

    @property
    def num_params(self) -> int:
        return self.get_flat().size

    # -- distribution -------------------------------------------------------

    def mean(self, states: np.ndarray) -> np.ndarray:
        out, _ = self.net.forward(np.atleast_2d(states))
        return out

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mu = self.mean(states)
        sigma = np.exp(self.log_std)
        return mu + sigma * rng.standard_normal(mu.shape)

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        mu = self.mean(states)
        actions = np.atleast_2d(actions)
        sigma = np.exp(self.log_std)
        z = (actions - mu) / sigma
        return -0.5 * np.sum(z**2 + 2.0 * self.log_std + LOG2PI, axis=1)

    def weighted_logp_grad(self, states, actions, weights) -> np.ndarray:
        """Gradient of sum_i weights_i * log pi(a_i | s_i) w.r.t. all params."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        weights = np.asarray(weights, dtype=float)
        if states.shape[0] != actions.shape[0] or weights.shape != (states.shape[0],):
            raise DataError("batch dimensions disagree")
        mu, acts = self.net.forward(states)
        var = np.exp(2.0 * self.log_std)
        diff = actions - mu
        grad_mu = weights[:, None] * diff / var
        gw, gb = self.net.backward(acts, grad_mu)
        grad_log_std = np.sum(weights[:, None] * (diff**2 / var - 1.0), axis=0)
        return _flatten([*gw, *gb, grad_log_std])


class ValueFunction:
    """Scalar state-value estimator with the same MLP body."""

    def __init__(self, obs_dim: int, hidden=(32, 32), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.net = _Mlp(rng, obs_dim, 1, hidden)

    def predict(self, states: np.ndarray) -> np.ndarray:
        out, _ = self.net.forward(np.atleast_2d(states))
        return out[:, 0]

    def get_flat(self) -> np.ndarray:
        return _flatten(self.net.param_arrays())

    def set_flat(self, flat: np.ndarray):
        arrays = _unflatten(np.asarray(flat, dtype=float), self.net.param_arrays())
        n_w = len(self.net.weights)
        self.net.weights = arrays[:n_w]
        self.net.biases = arrays[n_w:]

    def mse_and_grad(self, states, targets) -> tuple[float, np.ndarray]:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        targets = np.asarray(targets, dtype=float)
        pred, acts = self.net.forward(states)
        err = pred[:, 0] - targets
        loss = float(np.mean(err**2))
        grad_out = (2.0 / err.size) * err[:, None]
        gw, gb = self.net.backward(acts, grad_out)
        return loss, _flatten([*gw, *gb])
