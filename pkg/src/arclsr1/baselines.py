"""Reference optimizers: SGD with momentum, AdaGrad, RMSProp, Adam, L-BFGS.

The first-order methods share one small interface: ``update(theta, g)``
returns the next iterate and advances the method's internal state. L-BFGS
is a full-batch method with a backtracking Armijo line search; it keeps
its history across calls so the stochastic driver can reuse it per batch.

Defaults follow the benchmark settings: SGD lr 0.1 and momentum 0.9,
AdaGrad lr 1e-2 with a zero initial accumulator, RMSProp lr 1e-2 and
alpha 0.99, Adam lr 1e-3 with betas (0.9, 0.999) and eps 1e-6, L-BFGS
step 1.0 and tolerance 1e-9.
"""
from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .arcs import IterRecord
from .errors import InvalidArgument, NumericFailure

METHODS = ("sgd_momentum", "adagrad", "rmsprop", "adam", "lbfgs")

_DEFAULT_LR = {"sgd_momentum": 0.1, "adagrad": 1e-2, "rmsprop": 1e-2, "adam": 1e-3, "lbfgs": 1.0}
_DEFAULT_EPS = {"sgd_momentum": 0.0, "adagrad": 1e-10, "rmsprop": 1e-8, "adam": 1e-6, "lbfgs": 0.0}


@dataclass
class BaselineConfig:
    """Hyperparameters for one baseline. ``None`` picks the method default."""

    method: str = "adam"
    learning_rate: Optional[float] = None
    momentum: float = 0.9
    eps_perturbation: Optional[float] = None
    alpha_rms: float = 0.99
    beta1: float = 0.9
    beta2: float = 0.999
    lbfgs_memory: int = 10
    lbfgs_tol: float = 1e-9
    max_iter: int = 1000

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgument(f"unknown baseline method {self.method!r}; expected one of {METHODS}")
        if self.learning_rate is None:
            self.learning_rate = _DEFAULT_LR[self.method]
        if self.eps_perturbation is None:
            self.eps_perturbation = _DEFAULT_EPS[self.method]
        if not self.learning_rate > 0:
            raise InvalidArgument(f"learning_rate must be > 0, got {self.learning_rate}")
        m = self.method
        if m == "sgd_momentum" and not 0 <= self.momentum < 1:
            raise InvalidArgument(f"momentum must lie in [0, 1), got {self.momentum}")
        if m in ("adagrad", "rmsprop", "adam") and not self.eps_perturbation > 0:
            raise InvalidArgument(f"eps_perturbation must be > 0, got {self.eps_perturbation}")
        if m == "rmsprop" and not 0 < self.alpha_rms < 1:
            raise InvalidArgument(f"alpha_rms must lie in (0, 1), got {self.alpha_rms}")
        if m == "adam" and not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise InvalidArgument(f"betas must lie in (0, 1), got {self.beta1}, {self.beta2}")
        if m == "lbfgs" and (int(self.lbfgs_memory) < 1 or not self.lbfgs_tol > 0):
            raise InvalidArgument("lbfgs_memory must be >= 1 and lbfgs_tol > 0")
        self.lbfgs_memory = int(self.lbfgs_memory)
        self.max_iter = int(self.max_iter)


def _check_grad(g):
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise NumericFailure("non-finite gradient")
    return g


class SgdMomentum:
    """Velocity form: ``v <- momentum * v - lr * g``, ``theta <- theta + v``."""

    def __init__(self, dim, cfg):
        self.cfg = cfg
        self.velocity = np.zeros(dim)

    def update(self, theta, g):
        g = _check_grad(g)
        self.velocity = self.cfg.momentum * self.velocity - self.cfg.learning_rate * g
        return theta + self.velocity


class AdaGrad:
    def __init__(self, dim, cfg):
        self.cfg = cfg
        self.accum = np.zeros(dim)

    def update(self, theta, g):
        g = _check_grad(g)
        self.accum += g * g
        return theta - self.cfg.learning_rate * g / (np.sqrt(self.accum) + self.cfg.eps_perturbation)


class RMSProp:
    def __init__(self, dim, cfg):
        self.cfg = cfg
        self.square_avg = np.zeros(dim)

    def update(self, theta, g):
        g = _check_grad(g)
        a = self.cfg.alpha_rms
        self.square_avg = a * self.square_avg + (1 - a) * g * g
        return theta - self.cfg.learning_rate * g / (np.sqrt(self.square_avg) + self.cfg.eps_perturbation)


class Adam:
    """Bias-corrected Adam with ``eps`` added outside the square root."""

    def __init__(self, dim, cfg):
        self.cfg = cfg
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.t = 0

    def update(self, theta, g):
        g = _check_grad(g)
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * g
        self.v = c.beta2 * self.v + (1 - c.beta2) * g * g
        m_hat = self.m / (1 - c.beta1**self.t)
        v_hat = self.v / (1 - c.beta2**self.t)
        return theta - c.learning_rate * m_hat / (np.sqrt(v_hat) + c.eps_perturbation)


_FIRST_ORDER = {"sgd_momentum": SgdMomentum, "adagrad": AdaGrad, "rmsprop": RMSProp, "adam": Adam}


def make_first_order(dim, cfg):
    if cfg.method not in _FIRST_ORDER:
        raise InvalidArgument(f"{cfg.method!r} is not a first-order method")
    return _FIRST_ORDER[cfg.method](dim, cfg)


def baseline_step(state, g, theta):
    """One update of a first-order method; returns ``(theta_new, state)``."""
    theta = np.asarray(theta, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != theta.shape:
        raise InvalidArgument(f"gradient shape {g.shape} != parameter shape {theta.shape}")
    return state.update(theta, g), state


class Lbfgs:
    """L-BFGS with two-loop recursion and backtracking Armijo search.

    Pairs are stored only when ``s.T y > 1e-10 ||s|| ||y||``. After 50
    halvings without sufficient decrease the step is skipped and the
    history cleared.
    """

    armijo_c = 1e-4
    max_halvings = 50
    curvature_eps = 1e-10

    def __init__(self, cfg):
        self.cfg = cfg
        self.s = deque(maxlen=cfg.lbfgs_memory)
        self.y = deque(maxlen=cfg.lbfgs_memory)

    def direction(self, g):
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(self.s), reversed(self.y)):
            a = (s @ q) / (y @ s)
            alphas.append(a)
            q -= a * y
        if self.s:
            s, y = self.s[-1], self.y[-1]
            q *= (s @ y) / (y @ y)
        for (s, y), a in zip(zip(self.s, self.y), reversed(alphas)):
            b = (y @ q) / (y @ s)
            q += (a - b) * s
        return -q

    def iterate(self, obj, theta, f, g):
        """One line-search step. Returns ``(theta, f, g, step_norm, ok)``."""
        d = self.direction(g)
        slope = g @ d
        if not slope < 0:
            # Only possible through round-off; restart from steepest descent.
            self.s.clear()
            self.y.clear()
            d = -g
            slope = -(g @ g)
        t = self.cfg.learning_rate
        for _ in range(self.max_halvings):
            theta_new = theta + t * d
            with np.errstate(over="ignore", invalid="ignore"):
                f_new, g_new = obj.value_and_gradient(theta_new)
            f_new = float(f_new)
            if math.isfinite(f_new) and f_new <= f + self.armijo_c * t * slope:
                g_new = _check_grad(g_new)
                s = theta_new - theta
                y = g_new - g
                if s @ y > self.curvature_eps * np.linalg.norm(s) * np.linalg.norm(y):
                    self.s.append(s)
                    self.y.append(y)
                else:
                    # Negative curvature along s: the stored scaling is stale.
                    self.s.clear()
                    self.y.clear()
                return theta_new, f_new, g_new, float(np.linalg.norm(s)), True
            t *= 0.5
        self.s.clear()
        self.y.clear()
        return theta, f, g, 0.0, False


class BaselineResult(NamedTuple):
    theta: np.ndarray
    trace: list
    stop_reason: str


def lbfgs_minimize(obj, theta0, cfg=None):
    """Full-batch L-BFGS; stops on ``||g|| <= lbfgs_tol`` or ``max_iter``."""
    cfg = cfg or BaselineConfig("lbfgs")
    if cfg.method != "lbfgs":
        raise InvalidArgument("lbfgs_minimize needs method='lbfgs'")
    theta = np.array(theta0, dtype=np.float64)
    if not np.all(np.isfinite(theta)):
        raise InvalidArgument("theta0 must be finite")
    f, g = obj.value_and_gradient(theta)
    f, g = float(f), _check_grad(g)
    opt = Lbfgs(cfg)
    trace = []
    if np.linalg.norm(g) <= cfg.lbfgs_tol:
        return BaselineResult(theta, trace, "grad_tol")
    reason = "max_iter"
    for k in range(1, cfg.max_iter + 1):
        t0 = time.perf_counter()
        theta, f, g, snorm, ok = opt.iterate(obj, theta, f, g)
        gnorm = float(np.linalg.norm(g))
        trace.append(IterRecord(k, f, gnorm, math.nan, math.nan, snorm, ok, ok,
                                time.perf_counter() - t0))
        if gnorm <= cfg.lbfgs_tol:
            reason = "grad_tol"
            break
    return BaselineResult(theta, trace, reason)


def first_order_minimize(obj, theta0, cfg, n_iter=None):
    """Full-batch run of a first-order method for ``n_iter`` updates.

    Records hold the value and gradient norm after each update.
    """
    theta = np.array(theta0, dtype=np.float64)
    opt = make_first_order(theta.size, cfg)
    f, g = obj.value_and_gradient(theta)
    trace = []
    for k in range(1, (cfg.max_iter if n_iter is None else n_iter) + 1):
        t0 = time.perf_counter()
        new = opt.update(theta, g)
        with np.errstate(over="ignore", invalid="ignore"):
            f, g_new = obj.value_and_gradient(new)
        if not (math.isfinite(f) and np.all(np.isfinite(g_new))):
            return BaselineResult(theta, trace, "numeric_failure")
        step = float(np.linalg.norm(new - theta))
        theta, g = new, g_new
        trace.append(IterRecord(k, float(f), float(np.linalg.norm(g)), math.nan, math.nan, step,
                                True, False, time.perf_counter() - t0))
    return BaselineResult(theta, trace, "max_iter")
