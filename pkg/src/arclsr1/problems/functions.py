"""Analytic test functions and logistic regression."""
from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit

from ..errors import InvalidArgument
from .base import Objective


class Quadratic(Objective):
    """``f(x) = 1/2 x'Ax - b'x + c`` for symmetric ``A``."""

    def __init__(self, A, b=None, c=0.0):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InvalidArgument(f"A must be square, got {A.shape}")
        self.A = 0.5 * (A + A.T)
        self.dim = A.shape[0]
        self.b = np.zeros(self.dim) if b is None else np.asarray(b, dtype=np.float64)
        self.c = float(c)

    def value_and_gradient(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        Ax = self.A @ theta
        return 0.5 * theta @ Ax - self.b @ theta + self.c, Ax - self.b

    def minimizer(self):
        return np.linalg.solve(self.A, self.b)


class DiagonalQuadratic(Objective):
    """Quadratic with diagonal Hessian; O(n) per evaluation for large n."""

    def __init__(self, diag, center=None):
        self.diag = np.asarray(diag, dtype=np.float64)
        self.dim = self.diag.size
        self.center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=np.float64)

    def value_and_gradient(self, theta):
        r = np.asarray(theta, dtype=np.float64) - self.center
        dr = self.diag * r
        return 0.5 * r @ dr, dr


def quadratic(A, b=None, c=0.0):
    return Quadratic(A, b, c)


def random_spd(n, cond=100.0, rng=None):
    """Random SPD matrix with eigenvalues log-spaced in ``[1, cond]``."""
    rng = np.random.default_rng(rng)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * np.logspace(0, np.log10(cond), n)) @ Q.T


class Rosenbrock(Objective):
    """Chained Rosenbrock ``sum 100 (x[i+1] - x[i]^2)^2 + (1 - x[i])^2``."""

    def __init__(self, n=2):
        if n < 2:
            raise InvalidArgument("rosenbrock needs n >= 2")
        self.dim = int(n)

    def value_and_gradient(self, theta):
        x = np.asarray(theta, dtype=np.float64)
        a = x[1:] - x[:-1] ** 2
        b = 1.0 - x[:-1]
        f = np.sum(100.0 * a**2 + b**2)
        g = np.zeros_like(x)
        g[:-1] = -400.0 * x[:-1] * a - 2.0 * b
        g[1:] += 200.0 * a
        return f, g


def rosenbrock(n=2):
    return Rosenbrock(n)


class LogisticRegression(Objective):
    """Mean binary log-loss plus ``l2/2 ||w||^2``; parameters ``[w, bias]``."""

    def __init__(self, X, labels, l2=0.0):
        X = np.asarray(X, dtype=np.float64)
        labels = np.asarray(labels)
        if X.ndim != 2 or labels.shape != (X.shape[0],):
            raise InvalidArgument(f"X {X.shape} and labels {labels.shape} disagree")
        if not np.all(np.isin(labels, (0, 1))):
            raise InvalidArgument("logistic regression needs 0/1 labels")
        self.X = X
        self.y = labels.astype(np.float64)
        self.l2 = float(l2)
        self.dim = X.shape[1] + 1
        self.n_samples = X.shape[0]

    def value_and_gradient_batch(self, theta, idx):
        theta = np.asarray(theta, dtype=np.float64)
        w, b = theta[:-1], theta[-1]
        X, y = self.X[idx], self.y[idx]
        z = X @ w + b
        # -log sigma(z) for y = 1 and -log sigma(-z) for y = 0
        loss = -np.mean(y * log_expit(z) + (1.0 - y) * log_expit(-z))
        r = (expit(z) - y) / len(y)
        g = np.empty_like(theta)
        g[:-1] = X.T @ r + self.l2 * w
        g[-1] = r.sum()
        return loss + 0.5 * self.l2 * (w @ w), g

    def value_and_gradient(self, theta):
        return self.value_and_gradient_batch(theta, slice(None))

    def predict(self, theta, X=None):
        X = self.X if X is None else np.asarray(X, dtype=np.float64)
        return (X @ theta[:-1] + theta[-1] > 0).astype(int)

    def accuracy(self, theta, X=None, labels=None):
        labels = self.y if labels is None else np.asarray(labels)
        return float(np.mean(self.predict(theta, X) == labels))


def logistic_regression(dataset, l2=0.0, split="train"):
    """Binary logistic regression on ``dataset`` (two classes only)."""
    X, y = dataset.arrays(split)
    return LogisticRegression(X, y, l2)
