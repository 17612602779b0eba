"""Fully connected networks with hand-written backpropagation.

Parameters are packed into one flat vector, layer by layer, each layer as
its ``(w_in, w_out)`` weight matrix in row-major order followed by the
``w_out`` biases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_softmax, softmax

from ..errors import InvalidArgument
from .base import Objective

_ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity")
_LOSSES = ("softmax_cross_entropy", "mse")


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple
    activation: str = "relu"
    loss: str = "softmax_cross_entropy"
    output_activation: str = None
    seed: int = 0
    init_scale: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise InvalidArgument(f"need at least two positive layer widths, got {self.widths}")
        if self.activation not in _ACTIVATIONS:
            raise InvalidArgument(f"unknown activation {self.activation!r}")
        if self.loss not in _LOSSES:
            raise InvalidArgument(f"unknown loss {self.loss!r}")
        if self.output_activation is None:
            default = "identity" if self.loss == "softmax_cross_entropy" else "sigmoid"
            object.__setattr__(self, "output_activation", default)
        if self.output_activation not in _ACTIVATIONS:
            raise InvalidArgument(f"unknown output activation {self.output_activation!r}")
        if self.loss == "softmax_cross_entropy" and self.output_activation != "identity":
            raise InvalidArgument("softmax cross-entropy takes raw logits")

    @property
    def n_params(self):
        w = self.widths
        return sum((a + 1) * b for a, b in zip(w[:-1], w[1:]))

    def initial_params(self, seed=None):
        rng = np.random.default_rng(self.seed if seed is None else seed)
        return rng.uniform(-self.init_scale, self.init_scale, self.n_params)


# Three dense layers for IRIS; 2953 parameters needs (h1 + 4)(h2 + 5) = 2970.
IRIS_WIDTHS = (4, 50, 50, 3)
IRIS_PARAMS = 2953


def iris_spec(seed=0):
    spec = MlpSpec(IRIS_WIDTHS, "relu", "softmax_cross_entropy", seed=seed)
    assert spec.n_params == IRIS_PARAMS, spec.n_params
    return spec


def autoencoder_spec(input_dim=64, hidden=(32, 16, 32), seed=0):
    return MlpSpec((input_dim, *hidden, input_dim), "relu", "mse", "sigmoid", seed=seed)


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return expit(z)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, a):
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


class Mlp(Objective):
    """Mean loss of an MLP over a fixed dataset.

    ``targets`` holds integer class labels for softmax cross-entropy and a
    ``(N, w_out)`` array for MSE (the autoencoder passes its inputs).
    """

    def __init__(self, spec, inputs, targets):
        self.spec = spec
        X = np.asarray(inputs, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != spec.widths[0]:
            raise InvalidArgument(f"inputs {X.shape} do not match input width {spec.widths[0]}")
        if spec.loss == "softmax_cross_entropy":
            T = np.asarray(targets)
            if T.shape != (X.shape[0],) or T.min() < 0 or T.max() >= spec.widths[-1]:
                raise InvalidArgument("class targets must be integers in [0, n_classes)")
            T = T.astype(np.intp)
        else:
            T = np.asarray(targets, dtype=np.float64)
            if T.shape != (X.shape[0], spec.widths[-1]):
                raise InvalidArgument(f"targets {T.shape} do not match output width {spec.widths[-1]}")
        self.X, self.T = X, T
        self.dim = spec.n_params
        self.n_samples = X.shape[0]
        self._slices = []
        offset = 0
        for a, b in zip(spec.widths[:-1], spec.widths[1:]):
            self._slices.append((slice(offset, offset + a * b), slice(offset + a * b, offset + a * b + b), (a, b)))
            offset += (a + 1) * b

    def unpack(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dim,):
            raise InvalidArgument(f"parameter vector has shape {theta.shape}, expected ({self.dim},)")
        return [(theta[w].reshape(shape), theta[b]) for w, b, shape in self._slices]

    def forward(self, theta, X):
        layers = self.unpack(theta)
        a = np.asarray(X, dtype=np.float64)
        last = len(layers) - 1
        for i, (W, b) in enumerate(layers):
            a = _act(self.spec.output_activation if i == last else self.spec.activation, a @ W + b)
        return a

    def _loss_and_grad(self, theta, X, T):
        spec = self.spec
        layers = self.unpack(theta)
        acts = [X]
        pre = []
        last = len(layers) - 1
        for i, (W, b) in enumerate(layers):
            z = acts[-1] @ W + b
            pre.append(z)
            acts.append(_act(spec.output_activation if i == last else spec.activation, z))
        out = acts[-1]
        m = X.shape[0]
        if spec.loss == "softmax_cross_entropy":
            logp = log_softmax(out, axis=1)
            loss = -np.mean(logp[np.arange(m), T])
            delta = softmax(out, axis=1)
            delta[np.arange(m), T] -= 1.0
            delta /= m
        else:
            diff = out - T
            loss = np.mean(diff * diff)
            delta = 2.0 * diff / diff.size * _act_grad(spec.output_activation, pre[-1], out)

        grad = np.empty(self.dim)
        for i in range(last, -1, -1):
            wsl, bsl, shape = self._slices[i]
            grad[wsl] = (acts[i].T @ delta).ravel()
            grad[bsl] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ layers[i][0].T) * _act_grad(spec.activation, pre[i - 1], acts[i])
        return float(loss), grad

    def value_and_gradient(self, theta):
        return self._loss_and_grad(theta, self.X, self.T)

    def value_and_gradient_batch(self, theta, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return self._loss_and_grad(theta, self.X[idx], self.T[idx])

    def predict(self, theta, X=None):
        return np.argmax(self.forward(theta, self.X if X is None else X), axis=1)

    def accuracy(self, theta, X=None, labels=None):
        if self.spec.loss != "softmax_cross_entropy":
            return None
        labels = self.T if labels is None else np.asarray(labels)
        return float(np.mean(self.predict(theta, X) == labels))


def mlp(spec, dataset, split="train"):
    """Classifier (class targets) or autoencoder (MSE onto the inputs)."""
    X, y = dataset.arrays(split)
    if spec.loss == "mse":
        return Mlp(spec, X, X)
    return Mlp(spec, X, y)
