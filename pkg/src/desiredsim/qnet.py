"""Small fully connected Q-network in plain numpy, float64 throughout.

Architecture is fixed-shape but parameterized: ReLU hidden layers, linear
output, one Q-value per action.  Training minimizes the mean squared error
between the Q-value of the action actually taken and its bootstrapped
target; gradients flow only through the taken action's output unit.

The optimizer implements SGD with Nesterov momentum in the common
deep-learning-framework form:

    v <- mu * v + g
    p <- p - lr * (g + mu * v)
"""

import numpy as np

DEFAULT_SIZES = (19, 24, 24, 3)


class QNetwork:
    def __init__(self, rng: np.random.Generator, sizes=DEFAULT_SIZES):
        self.sizes = tuple(sizes)
        self.weights = []
        self.biases = []
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = np.sqrt(6.0 / n_in)
            self.weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
            self.biases.append(np.zeros(n_out, dtype=np.float64))

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_parameters(self, params) -> None:
        expect = self.parameters()
        if len(params) != len(expect):
            raise ValueError("parameter list length mismatch")
        for mine, theirs in zip(expect, params):
            if mine.shape != theirs.shape:
                raise ValueError(f"shape mismatch {mine.shape} vs {theirs.shape}")
            mine[...] = theirs

    def copy_from(self, other: "QNetwork") -> None:
        self.set_parameters(other.parameters())

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for one state (1-d) or a batch of states (2-d)."""
        single = x.ndim == 1
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if i < last:
                np.maximum(h, 0.0, out=h)
        return h[0] if single else h

    def _forward_cached(self, x: np.ndarray):
        acts = [np.asarray(x, dtype=np.float64)]
        pre = []
        h = acts[0]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            pre.append(z)
            h = np.maximum(z, 0.0) if i < last else z
            acts.append(h)
        return acts, pre

    def loss_and_gradients(self, states, actions, targets):
        """MSE on the taken actions; returns (loss, grads aligned to parameters())."""
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.int64)
        targets = np.asarray(targets, dtype=np.float64)
        n = states.shape[0]
        acts, pre = self._forward_cached(states)
        q = acts[-1]
        taken = q[np.arange(n), actions]
        err = taken - targets
        loss = float(np.mean(err ** 2))

        dq = np.zeros_like(q)
        dq[np.arange(n), actions] = 2.0 * err / n
        grads = [None] * (2 * len(self.weights))
        delta = dq
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = delta.T @ acts[i]
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i]) * (pre[i - 1] > 0.0)
        return loss, grads


class SGDNesterov:
    def __init__(self, net: QNetwork, lr: float = 1e-3, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in net.parameters()]

    def step(self, net: QNetwork, grads) -> None:
        mu = self.momentum
        for p, g, v in zip(net.parameters(), grads, self.velocity):
            v *= mu
            v += g
            p -= self.lr * (g + mu * v)


def td_targets(target_net: QNetwork, rewards, next_states, gamma: float):
    """Bootstrapped targets y = r + gamma * max_a Q_target(s', a)."""
    q_next = target_net.forward(np.asarray(next_states, dtype=np.float64))
    return np.asarray(rewards, dtype=np.float64) + gamma * q_next.max(axis=1)


def train_step(online: QNetwork, target_net: QNetwork, states, actions,
               rewards, next_states, gamma: float, opt: SGDNesterov) -> float:
    """One gradient step on a batch; returns the pre-update loss."""
    y = td_targets(target_net, rewards, next_states, gamma)
    loss, grads = online.loss_and_gradients(states, actions, y)
    opt.step(online, grads)
    return loss


def save_snapshot(path, net: QNetwork) -> None:
    arrays = {"sizes": np.asarray(net.sizes, dtype=np.int64)}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_snapshot(path) -> QNetwork:
    with np.load(path) as data:
        sizes = tuple(int(s) for s in data["sizes"])
        net = QNetwork(np.random.default_rng(0), sizes=sizes)
        params = []
        for i in range(len(sizes) - 1):
            params.append(data[f"w{i}"])
            params.append(data[f"b{i}"])
        net.set_parameters(params)
    return net


def ensemble_average(prev_params, new_params, alpha: float = 0.5):
    """Fold a fresh parameter set into a running average, weight alpha on prev."""
    if len(prev_params) != len(new_params):
        raise ValueError("parameter list length mismatch")
    out = []
    for p, q in zip(prev_params, new_params):
        if p.shape != q.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
        out.append(alpha * p + (1.0 - alpha) * q)
    return out
