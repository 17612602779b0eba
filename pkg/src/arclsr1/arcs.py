"""Adaptive cubic regularization with limited-memory SR1 (ARCs-LSR1).

Each iteration rebuilds the spectral factors of the L-SR1 matrix, solves
the shape-changing-norm cubic model in closed form, and accepts or rejects
the trial point on the ratio of actual to predicted reduction. The
regularization weight ``mu`` is then halved, kept, or increased.

Example
-------
>>> from arclsr1.problems import rosenbrock
>>> from arclsr1.arcs import ArcsConfig, minimize
>>> res = minimize(rosenbrock(2), [-1.2, 1.0], ArcsConfig(k_max=1000, grad_tol=1e-10))
>>> res.theta.round(6).tolist()
[1.0, 1.0]
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import memory, subproblem
from .errors import InvalidArgument, NumericFailure
from .memory import LsrEigFactors, PairBuffer

logger = logging.getLogger(__name__)


@dataclass
class ArcsConfig:
    mu0: float = 1.0
    eta1: float = 0.1
    eta2: float = 0.75
    gamma1: float = 1.0
    gamma2: float = 2.0
    accept_eps: float = 1e-8
    term_eps: float = 1e-9
    memory: int = 10
    k_max: int = 1000
    grad_tol: float = 0.0
    delta_bounds: tuple = (1e-8, 1e8)
    # Fraction of the smallest pencil eigenvalue used as delta. At exactly
    # 1.0 the compact middle matrix is singular on quadratics.
    delta_scale: float = 0.9
    mu_min: float = 1e-16
    mu_max: float = 1e20
    parallel_curvature: str = "shifted"

    def __post_init__(self):
        if not self.mu0 > 0:
            raise InvalidArgument(f"mu0 must be > 0, got {self.mu0}")
        if not 0 < self.eta1 <= self.eta2 < 1:
            raise InvalidArgument(f"need 0 < eta1 <= eta2 < 1, got {self.eta1}, {self.eta2}")
        if not self.gamma2 >= self.gamma1:
            raise InvalidArgument(f"need gamma2 >= gamma1, got {self.gamma1}, {self.gamma2}")
        if not (self.accept_eps > 0 and self.term_eps > 0):
            raise InvalidArgument("accept_eps and term_eps must be positive")
        if int(self.memory) < 1 or int(self.k_max) < 0:
            raise InvalidArgument("memory must be >= 1 and k_max >= 0")
        if self.grad_tol < 0:
            raise InvalidArgument("grad_tol must be nonnegative")
        lo, hi = self.delta_bounds
        if not 0 < lo < hi:
            raise InvalidArgument(f"delta_bounds must satisfy 0 < lo < hi, got {self.delta_bounds}")
        if not 0 < self.delta_scale <= 1:
            raise InvalidArgument("delta_scale must lie in (0, 1]")
        if not 0 < self.mu_min <= self.mu0 <= self.mu_max:
            raise InvalidArgument("need 0 < mu_min <= mu0 <= mu_max")
        if self.parallel_curvature not in ("shifted", "raw"):
            raise InvalidArgument("parallel_curvature must be 'shifted' or 'raw'")
        self.delta_bounds = (float(lo), float(hi))
        self.memory = int(self.memory)
        self.k_max = int(self.k_max)

    def mu_factors(self):
        return (0.5, 0.5 * (1 + self.gamma1), 0.5 * (self.gamma1 + self.gamma2))


@dataclass
class IterRecord:
    k: int
    f_value: float
    grad_norm: float
    rho: float
    mu: float
    step_norm: float
    accepted: bool
    pair_accepted: bool
    wall_time: float


@dataclass
class ArcsState:
    theta: np.ndarray
    mu: float
    buffer: PairBuffer
    iter: int = 0
    f: Optional[float] = None
    g: Optional[np.ndarray] = None
    factors: Optional[LsrEigFactors] = None
    last_step: Optional[np.ndarray] = None
    last_secant_residual: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, theta0, cfg):
        theta0 = np.array(theta0, dtype=np.float64)
        if theta0.ndim != 1 or not np.all(np.isfinite(theta0)):
            raise InvalidArgument("theta0 must be a finite 1-D vector")
        return cls(theta0, cfg.mu0, PairBuffer(cfg.memory, cfg.accept_eps))

    def invalidate(self):
        """Forget cached f/g, e.g. after the objective's batch changes."""
        self.f = None
        self.g = None

    def ensure_factors(self, cfg):
        if self.factors is None:
            self.factors, _ = memory.build_factors(
                self.buffer, self.theta.shape[0], cfg.delta_bounds, None, cfg.delta_scale
            )
        return self.factors


def _evaluate(obj, theta):
    f, g = obj.value_and_gradient(theta)
    f = float(f)
    g = np.asarray(g, dtype=np.float64)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericFailure("objective returned a non-finite value or gradient")
    return f, g


def step(obj, state, cfg):
    """Run one full ARCs-LSR1 iteration in place and return its record."""
    t0 = time.perf_counter()
    if state.f is None or state.g is None:
        state.f, state.g = _evaluate(obj, state.theta)
    f, g = state.f, state.g
    eig = state.ensure_factors(cfg)
    gnorm = float(np.linalg.norm(g))

    if gnorm == 0.0:
        state.last_step = np.zeros_like(g)
        state.last_secant_residual = np.zeros_like(g)
        state.iter += 1
        return IterRecord(state.iter, f, 0.0, math.nan, state.mu, 0.0, False, False,
                          time.perf_counter() - t0)

    sol = subproblem.solve(g, eig, state.mu, cfg.parallel_curvature)
    pred = sol.pred_reduction
    if not pred > 0:
        raise NumericFailure(
            f"predicted reduction {pred:.3e} is not positive at ||g|| = {gnorm:.3e}"
        )
    s = sol.step
    f_trial, g_trial = _evaluate(obj, state.theta + s)
    rho = (f - f_trial) / pred

    accepted = rho >= cfg.eta1
    half, keep, grow = cfg.mu_factors()
    if rho > cfg.eta2:
        factor = half
    elif accepted:
        factor = keep
    else:
        factor = grow
    state.mu = min(max(state.mu * factor, cfg.mu_min), cfg.mu_max)

    y = g_trial - g
    Bs = eig.apply(s)
    # Secant curvature beyond the delta ceiling comes from a wild trial
    # point, not from the local Hessian; such a pair would poison B.
    if np.linalg.norm(y) > cfg.delta_bounds[1] * np.linalg.norm(s):
        pair_ok = False
    else:
        pair_ok = memory.try_add_pair(state.buffer, s, y, Bs)

    if accepted:
        # The small-step test looks at the change in iterates, so only
        # accepted steps are remembered for it.
        state.last_step = s
        state.last_secant_residual = y - Bs
        state.theta = state.theta + s
        state.f, state.g = f_trial, g_trial
    if pair_ok:
        state.factors, fell_back = memory.build_factors(
            state.buffer, g.shape[0], cfg.delta_bounds, eig.delta, cfg.delta_scale
        )
        if fell_back:
            logger.debug("iteration %d: delta reused, S'S not positive definite", state.iter)
    state.iter += 1
    return IterRecord(
        state.iter, state.f, float(np.linalg.norm(state.g)), float(rho), state.mu,
        float(np.linalg.norm(s)), bool(accepted), bool(pair_ok), time.perf_counter() - t0,
    )


class ArcsResult(NamedTuple):
    theta: np.ndarray
    trace: list
    stop_reason: str
    state: ArcsState


def small_step(state, cfg):
    """True when the last accepted step satisfies ``||s|| < term_eps * ||y - B s||``."""
    if state.last_step is None:
        return False
    return bool(np.linalg.norm(state.last_step)
                < cfg.term_eps * np.linalg.norm(state.last_secant_residual))


def minimize(obj, theta0, cfg=None, callback: Optional[Callable] = None):
    """Minimize ``obj`` from ``theta0`` with ARCs-LSR1.

    ``callback(state, record)`` runs after each iteration. The loop stops on
    ``k_max``, the small-step test, a gradient norm at or below ``grad_tol``
    (an exactly zero gradient always stops), or a numeric failure.
    """
    cfg = cfg or ArcsConfig()
    state = ArcsState.initial(theta0, cfg)
    trace = []
    try:
        state.f, state.g = _evaluate(obj, state.theta)
    except NumericFailure:
        return ArcsResult(state.theta, trace, "numeric_failure", state)
    if np.linalg.norm(state.g) <= cfg.grad_tol or not np.any(state.g):
        return ArcsResult(state.theta, trace, "grad_tol", state)

    reason = "max_iter"
    while state.iter < cfg.k_max:
        if small_step(state, cfg):
            reason = "small_step"
            break
        try:
            rec = step(obj, state, cfg)
        except NumericFailure as exc:
            logger.warning("iteration %d aborted: %s", state.iter, exc)
            reason = "numeric_failure"
            break
        trace.append(rec)
        if callback is not None:
            callback(state, rec)
        if rec.grad_norm <= cfg.grad_tol:
            reason = "grad_tol"
            break
    return ArcsResult(state.theta, trace, reason, state)


def model_decrease_check(obj, state, cfg):
    """Compare the subspace model value with a dense evaluation.

    The dense route forms ``B``, takes its full eigendecomposition and picks
    the first perpendicular basis vector along the projected gradient, then
    evaluates ``g.T s + s.T B s / 2 + mu/3 * ||U.T s||_3^3`` directly.
    Requires ``n <= 64``.
    """
    if state.g is None:
        state.f, state.g = _evaluate(obj, state.theta)
    eig = state.ensure_factors(cfg)
    g = state.g
    sol = subproblem.solve(g, eig, state.mu, cfg.parallel_curvature)
    s = sol.step
    B = memory.dense_b(eig)
    U = _aligned_basis(eig, g)
    direct = float(g @ s + 0.5 * s @ B @ s + state.mu / 3.0 * np.sum(np.abs(U.T @ s) ** 3))
    return {
        "subspace": sol.model_value,
        "direct": direct,
        "difference": sol.model_value - direct,
    }


def _aligned_basis(eig, g):
    """Orthogonal ``[U_par U_perp]`` with ``U_perp[:, 0]`` along ``(I - U U.T) g``."""
    n, k = eig.n, eig.k
    U_par = eig.Upar
    p = g - U_par @ (U_par.T @ g)
    pn = np.linalg.norm(p)
    seed = [U_par]
    if pn > 1e-14 * max(1.0, np.linalg.norm(g)):
        seed.append((p / pn)[:, None])
    rest = np.eye(n)
    Q, _ = np.linalg.qr(np.hstack(seed + [rest]))
    Q = Q[:, :n]
    # QR may flip signs of the leading columns; restore them.
    lead = np.hstack(seed)
    signs = np.sign(np.sum(Q[:, : lead.shape[1]] * lead, axis=0))
    Q[:, : lead.shape[1]] *= np.where(signs == 0, 1.0, signs)
    return Q
