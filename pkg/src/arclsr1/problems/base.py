"""Objective interface shared by every test problem."""
from __future__ import annotations

import numpy as np


class Objective:
    """Smooth objective ``f: R^n -> R`` with an exact gradient.

    Subclasses implement :meth:`value_and_gradient`. Finite-sum objectives
    ``f = mean_i f_i`` additionally set ``n_samples`` and implement
    :meth:`value_and_gradient_batch`.
    """

    dim: int
    n_samples = None

    def value_and_gradient(self, theta):
        raise NotImplementedError

    def value(self, theta):
        return self.value_and_gradient(theta)[0]

    def gradient(self, theta):
        return self.value_and_gradient(theta)[1]

    # batch interface

    @property
    def has_batches(self):
        return self.n_samples is not None

    def value_and_gradient_batch(self, theta, idx):
        raise NotImplementedError(f"{type(self).__name__} has no batch interface")

    def value_batch(self, theta, idx):
        return self.value_and_gradient_batch(theta, idx)[0]

    def gradient_batch(self, theta, idx):
        return self.value_and_gradient_batch(theta, idx)[1]

    def batch(self, idx):
        return BatchView(self, idx)


class BatchView(Objective):
    """The mean loss over a fixed index set, seen as a plain objective."""

    def __init__(self, parent, idx):
        self.parent = parent
        self.idx = np.asarray(idx, dtype=np.intp)
        self.dim = parent.dim

    def value_and_gradient(self, theta):
        return self.parent.value_and_gradient_batch(theta, self.idx)


def finite_difference_gradient(obj, theta, rel_step=1e-6):
    """Central differences with ``h_i = rel_step * max(1, |theta_i|)``."""
    theta = np.array(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        h = rel_step * max(1.0, abs(theta[i]))
        old = theta[i]
        theta[i] = old + h
        fp = obj.value(theta)
        theta[i] = old - h
        fm = obj.value(theta)
        theta[i] = old
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def gradient_error(obj, theta, rel_step=1e-6):
    """Relative 2-norm error between the analytic and FD gradients."""
    g = np.asarray(obj.gradient(theta), dtype=np.float64)
    fd = finite_difference_gradient(obj, theta, rel_step)
    scale = max(np.linalg.norm(fd), np.linalg.norm(g), 1e-12)
    return float(np.linalg.norm(g - fd) / scale)
