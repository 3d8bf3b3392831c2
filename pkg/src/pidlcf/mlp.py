"""Feed-forward tanh network (the PUNN) with reverse-mode gradients and Adam.

Inputs are standardised per feature with statistics stored on the network;
hidden layers use tanh and the output layer is linear.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import State
from .errors import ConfigError, DivergenceError, DataError

CHECKPOINT_FORMAT = "pidlcf-mlp"
CHECKPOINT_VERSION = 1


class Mlp:
    def __init__(self, weights, biases, input_mean=None, input_std=None):
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        n_in = self.weights[0].shape[0]
        self.input_mean = np.zeros(n_in) if input_mean is None else np.array(input_mean, dtype=float)
        self.input_std = np.ones(n_in) if input_std is None else np.array(input_std, dtype=float)
        self._check()

    def _check(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("weights and biases must be non-empty lists of equal length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ConfigError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ConfigError(f"layer {i}: input size {w.shape[0]} != previous output size")
        if np.any(self.input_std <= 0):
            raise ConfigError("standardizer std must be positive")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp(self.weights, self.biases, self.input_mean, self.input_std)

    def set_standardizer(self, X: np.ndarray) -> None:
        X = np.asarray(X, dtype=float)
        self.input_mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.input_std = np.where(std > 1e-12, std, 1.0)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())

    # -- forward / backward -------------------------------------------------

    def forward_cached(self, X):
        z = (np.asarray(X, dtype=float).reshape(-1, self.layer_sizes[0]) - self.input_mean) / self.input_std
        acts = [z]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            pre = acts[-1] @ w + b
            acts.append(pre if i == last else np.tanh(pre))
        return acts[-1][:, 0], acts

    def forward(self, X) -> np.ndarray:
        """Predicted accelerations for an ``(N, 3)`` batch of states."""
        return self.forward_cached(X)[0]

    def __call__(self, X):
        return self.forward(X)

    def predict_state(self, s: State) -> float:
        return float(self.forward(s.as_array())[0])

    def backward(self, acts, upstream, want_input_grad: bool = False):
        """Gradients of ``sum(upstream * output)`` w.r.t. every parameter.

        ``acts`` comes from :meth:`forward_cached`.  Returns a list aligned with
        :meth:`params`, plus the input gradient when requested.
        """
        delta = np.asarray(upstream, dtype=float).reshape(-1, 1)
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * (1.0 - acts[i] ** 2)
        if want_input_grad:
            return grads, delta / self.input_std
        return grads

    def gradients(self, X, upstream, want_input_grad: bool = False):
        _, acts = self.forward_cached(X)
        return self.backward(acts, upstream, want_input_grad)

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "layer_sizes": list(self.layer_sizes),
            "input_mean": self.input_mean.tolist(),
            "input_std": self.input_std.tolist(),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise DataError("not a PUNN checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {d.get('version')}")
        net = cls(d["weights"], d["biases"], d["input_mean"], d["input_std"])
        if list(net.layer_sizes) != list(d["layer_sizes"]):
            raise DataError("checkpoint layer_sizes disagree with stored weights")
        return net

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Mlp":
        return cls.from_dict(json.loads(Path(path).read_text()))


def xavier_init(layer_sizes, seed: int = 0) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 3:
        raise ConfigError("need at least one hidden layer")
    if sizes[0] != 3 or sizes[-1] != 1:
        raise ConfigError(f"network must map 3 inputs to 1 output, got {sizes}")
    if any(s < 1 for s in sizes):
        raise ConfigError("layer sizes must be >= 1")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_update(params, grads, opt: AdamState, lr: float) -> None:
    """In-place bias-corrected Adam step on a list of arrays."""
    if len(params) != len(grads) or len(params) != len(opt.m):
        raise ConfigError("parameter, gradient and moment lists differ in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient")
    opt.t += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1**opt.t
    c2 = 1.0 - b2**opt.t
    for p, g, m, v in zip(params, grads, opt.m, opt.v):
        if p.shape != g.shape or m.shape != p.shape:
            raise ConfigError(f"shape mismatch {p.shape} vs {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)


def adam_step(net: Mlp, grads, opt: AdamState, lr: float):
    adam_update(net.params(), grads, opt, lr)
    return net, opt
