"""Minimal neural function approximation: replay buffer, MLP, Adam, DQN.

Everything is plain numpy. The network is an affine-ReLU stack with a
linear output; the DQN learner supports a scalar action-value head for
agents and a vector head (one value per objective and action) for the
mediator, whose greedy successor action is resolved through the fairness
measure on the full read (history plus truncated value).
"""

from __future__ import annotations

import json
from typing import NamedTuple

import numpy as np

from .errors import UsageError
from .fairness import MinWelfare
from .solver import phi_over_rows


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: object          # float for agents, reward vector for the mediator
    next_state: np.ndarray
    terminal: bool
    steps: int = 1          # k for pre-accumulated k-step transitions
    next_history: object = None  # s_r at the successor (mediator only)


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling."""

    def __init__(self, capacity=100000):
        self.capacity = capacity
        self._items = []
        self._next = 0

    def __len__(self):
        return len(self._items)

    def push(self, transition):
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
            self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size, rng):
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


class FeedforwardNet:
    """Affine-ReLU-affine-ReLU-affine stack with glorot-uniform init."""

    def __init__(self, sizes, rng):
        self.sizes = tuple(sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy_from(self, other):
        for mine, theirs in zip(self.params, other.params):
            mine[...] = theirs

    def forward(self, x, cache=None):
        """Batched forward pass; x has shape (batch, in) or (in,)."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.sizes[0]:
            raise UsageError(
                f"input width {x.shape[1]} does not match net input "
                f"{self.sizes[0]}")
        h = x
        if cache is not None:
            cache.append(h)
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if layer != last:
                h = np.maximum(h, 0.0)
            if cache is not None:
                cache.append(h)
        return h[0] if squeeze else h

    def backward(self, cache, grad_out):
        """Exact reverse-mode gradients for a cached forward pass.

        Returns a list aligned with `params`: dW0, db0, dW1, db1, ...
        """
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = np.asarray(grad_out, dtype=float)
        if delta.ndim == 1:
            delta = delta[None, :]
        last = len(self.weights) - 1
        for layer in range(last, -1, -1):
            activation_in = cache[layer]
            if layer != last:
                # cache[layer + 1] holds the post-ReLU activation
                delta = delta * (cache[layer + 1] > 0.0)
            grads_w[layer] = activation_in.T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer:
                delta = delta @ self.weights[layer].T
        out = []
        for gw, gb in zip(grads_w, grads_b):
            out.append(gw)
            out.append(gb)
        return out

    def flat_params(self):
        return np.concatenate([p.ravel() for p in self.params])

    def load_flat(self, flat):
        offset = 0
        for p in self.params:
            p[...] = flat[offset:offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != flat.size:
            raise UsageError("checkpoint size does not match network shape")


class AdamState:
    """Bias-corrected Adam over a list of parameter arrays."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class DQNLearner:
    """DQN with an optional multi-objective head for the mediator.

    With n_objectives=None the output layer has one value per action and
    targets are r + gamma^k max_a' Q_target(s', a'). With n_objectives=N the
    output is an action x objective grid; the successor action is the one
    maximizing phi over (s'_r + Q_target(s', a')) and the per-objective
    target is r_i + gamma^k Q_target(s', a*, i).
    """

    def __init__(self, state_dim, n_actions, rng, n_objectives=None,
                 gamma=0.9, lr=1e-4, hidden=(128, 128), sync_every=500,
                 phi=None):
        self.state_dim = state_dim
        self.n_actions = n_actions
        self.n_objectives = n_objectives
        self.gamma = gamma
        self.sync_every = sync_every
        self.phi = phi if phi is not None else MinWelfare()
        self.rng = rng
        out = n_actions * (n_objectives or 1)
        sizes = (state_dim, *hidden, out)
        self.online = FeedforwardNet(sizes, rng)
        self.target = FeedforwardNet(sizes, rng)
        self.target.copy_from(self.online)
        self.adam = AdamState(self.online.params, lr=lr)
        self.train_steps = 0

    def q_values(self, state, net=None):
        net = net or self.online
        out = net.forward(state)
        if self.n_objectives:
            return out.reshape(self.n_actions, self.n_objectives)
        return out

    def greedy_action(self, state, history=None):
        q = self.q_values(state)
        if self.n_objectives:
            hist = np.zeros(self.n_objectives) if history is None else history
            return int(np.argmax(phi_over_rows(self.phi, hist + q)))
        return int(np.argmax(q))

    def train_step(self, buffer, batch_size=128):
        """One sampled gradient step; returns the loss or None if underfull."""
        if len(buffer) < batch_size:
            return None
        batch = buffer.sample(batch_size, self.rng)
        states = np.stack([t.state for t in batch])
        next_states = np.stack([t.next_state for t in batch])
        actions = np.array([t.action for t in batch])
        alive = np.array([0.0 if t.terminal else 1.0 for t in batch])
        decay = np.array([self.gamma ** t.steps for t in batch])

        next_q = self.target.forward(next_states)
        n_obj = self.n_objectives
        if n_obj:
            next_q = next_q.reshape(len(batch), self.n_actions, n_obj)
            hist = np.stack([
                np.zeros(n_obj) if t.next_history is None
                else np.asarray(t.next_history, dtype=float)
                for t in batch
            ])
            scores = phi_over_rows(self.phi, hist[:, None, :] + next_q)
            best = np.argmax(scores, axis=1)
            boot = next_q[np.arange(len(batch)), best]
            rewards = np.stack([np.asarray(t.reward, dtype=float)
                                for t in batch])
            targets = rewards + (decay * alive)[:, None] * boot
        else:
            boot = next_q.max(axis=1)
            rewards = np.array([t.reward for t in batch], dtype=float)
            targets = rewards + decay * alive * boot

        cache = []
        preds = self.online.forward(states, cache=cache)
        grad = np.zeros_like(preds)
        if n_obj:
            preds_sel = preds.reshape(len(batch), self.n_actions, n_obj)[
                np.arange(len(batch)), actions]
            err = preds_sel - targets
            loss = float((err ** 2).mean())
            scale = 2.0 / err.size
            grad3 = grad.reshape(len(batch), self.n_actions, n_obj)
            grad3[np.arange(len(batch)), actions] = scale * err
        else:
            preds_sel = preds[np.arange(len(batch)), actions]
            err = preds_sel - targets
            loss = float((err ** 2).mean())
            grad[np.arange(len(batch)), actions] = 2.0 * err / err.size
        grads = self.online.backward(cache, grad)
        self.adam.step(self.online.params, grads)
        self.train_steps += 1
        if self.sync_every and self.train_steps % self.sync_every == 0:
            self.target.copy_from(self.online)
        return loss

    # -- checkpointing ------------------------------------------------------

    CHECKPOINT_HEADER = "fairlead-net 1"

    def save(self, path):
        meta = {
            "sizes": list(self.online.sizes),
            "n_actions": self.n_actions,
            "n_objectives": self.n_objectives,
            "gamma": self.gamma,
        }
        with open(path, "w") as fh:
            fh.write(self.CHECKPOINT_HEADER + "\n")
            fh.write(json.dumps(meta, sort_keys=True) + "\n")
            for value in self.online.flat_params():
                fh.write(repr(float(value)) + "\n")

    def load(self, path):
        with open(path) as fh:
            header = fh.readline().strip()
            if header != self.CHECKPOINT_HEADER:
                raise UsageError(f"unsupported checkpoint header {header!r}")
            meta = json.loads(fh.readline())
            if meta["sizes"] != list(self.online.sizes):
                raise UsageError(
                    f"checkpoint sizes {meta['sizes']} do not match "
                    f"{list(self.online.sizes)}")
            flat = np.array([float(line) for line in fh])
        self.online.load_flat(flat)
        self.target.copy_from(self.online)
        return meta
