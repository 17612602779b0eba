"""Closed-form minimizer of the cubic model in the shape-changing norm.

In the eigenbasis of ``B`` the model

    m(s) = g.T s + 1/2 s.T B s + mu/3 * ||U.T s||_3^3

separates into one-dimensional cubics, each solved exactly. Only the
``n x k`` block ``U_par`` is ever used: the orthogonal complement enters
through the single scalar ``||g_perp||``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .memory import DENSE_LIMIT

__all__ = [
    "SubproblemSolution",
    "scalar_cubic_min",
    "scalar_model",
    "solve_parallel",
    "solve_perp",
    "solve",
    "solve_dense",
    "model_value",
]


@dataclass(frozen=True)
class SubproblemSolution:
    step: np.ndarray
    sbar_par: np.ndarray
    alpha_star: float
    g_perp_norm: float
    model_value: float

    @property
    def pred_reduction(self):
        return -self.model_value


def _check_mu(mu):
    if not mu > 0 or not math.isfinite(mu):
        raise InvalidArgument(f"regularization mu must be positive and finite, got {mu}")


def scalar_model(gbar, lam, mu, s):
    return gbar * s + 0.5 * lam * s * s + mu / 3.0 * abs(s) ** 3


def scalar_cubic_min(gbar, lam, mu):
    """Global minimizer of ``gbar*s + lam/2*s**2 + mu/3*|s|**3``.

    Algebraically ``-2*gbar / (lam + sqrt(lam**2 + 4*|gbar|*mu))``; for
    ``lam < 0`` the equivalent root form is evaluated instead to avoid
    cancellation in the denominator. With ``gbar == 0`` and ``lam < 0``
    both ``+-lam/mu`` are optimal and the positive one is returned.
    """
    _check_mu(mu)
    if not (math.isfinite(gbar) and math.isfinite(lam)):
        raise InvalidArgument(f"non-finite subproblem data gbar={gbar}, lam={lam}")
    root = math.sqrt(lam * lam + 4.0 * abs(gbar) * mu)
    if lam >= 0.0:
        if gbar == 0.0:
            return 0.0
        return -2.0 * gbar / (lam + root)
    magnitude = (root - lam) / (2.0 * mu)
    return -magnitude if gbar > 0.0 else magnitude


def _scalar_min_vec(gbar, lam, mu):
    gbar = np.asarray(gbar, dtype=np.float64)
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), gbar.shape)
    return np.array([scalar_cubic_min(float(a), float(b), mu) for a, b in zip(gbar, lam)])


def solve_parallel(gbar_par, lam_par, mu):
    """Componentwise minimizer on the parallel subspace."""
    _check_mu(mu)
    gbar_par = np.asarray(gbar_par, dtype=np.float64)
    lam_par = np.asarray(lam_par, dtype=np.float64)
    if gbar_par.shape != lam_par.shape:
        raise InvalidArgument(f"shape mismatch {gbar_par.shape} vs {lam_par.shape}")
    return _scalar_min_vec(gbar_par, lam_par, mu)


def solve_perp(g_perp_norm, delta, mu):
    """Scale ``alpha`` such that ``sbar_perp = -alpha * gbar_perp``."""
    _check_mu(mu)
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta}")
    if g_perp_norm < 0:
        raise InvalidArgument(f"g_perp_norm must be nonnegative, got {g_perp_norm}")
    return 2.0 / (delta + math.sqrt(delta * delta + 4.0 * mu * g_perp_norm))


def model_value(gbar, lam, sbar, mu):
    """Separable model value ``sum(g*s + lam/2*s^2 + mu/3*|s|^3)``."""
    gbar, lam, sbar = (np.asarray(a, dtype=np.float64) for a in (gbar, lam, sbar))
    return float(gbar @ sbar + 0.5 * np.sum(lam * sbar**2) + mu / 3.0 * np.sum(np.abs(sbar) ** 3))


def solve(g, eig, mu, parallel_curvature="shifted"):
    """Minimize the cubic model for gradient ``g`` and factors ``eig``.

    Parameters
    ----------
    g : (n,) array_like
    eig : LsrEigFactors
        ``B = delta*I + U_par diag(lam_hat) U_par.T``; ``k = 0`` is allowed.
    mu : float
        Cubic regularization weight, > 0.
    parallel_curvature : {"shifted", "raw"}
        ``"shifted"`` uses the eigenvalues ``lam_hat + delta`` of ``B`` on the
        parallel block; ``"raw"`` uses ``lam_hat`` alone.

    Returns
    -------
    SubproblemSolution
    """
    _check_mu(mu)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (eig.n,):
        raise InvalidArgument(f"gradient length {g.shape} does not match factors n={eig.n}")
    if parallel_curvature == "shifted":
        lam_par = eig.lam_hat + eig.delta
    elif parallel_curvature == "raw":
        lam_par = eig.lam_hat
    else:
        raise InvalidArgument(f"unknown parallel_curvature {parallel_curvature!r}")

    gbar_par = eig.Upar.T @ g
    g_perp_sq = max(0.0, float(g @ g) - float(gbar_par @ gbar_par))
    g_perp_norm = math.sqrt(g_perp_sq)

    sbar_par = solve_parallel(gbar_par, lam_par, mu)
    alpha = solve_perp(g_perp_norm, eig.delta, mu)
    # s* = -alpha g + U_par (alpha gbar_par + sbar_par): the perpendicular part
    # is -alpha (g - U_par gbar_par) without ever forming U_perp.
    step = -alpha * g + eig.Upar @ (alpha * gbar_par + sbar_par)

    t = alpha * g_perp_norm
    value = model_value(gbar_par, lam_par, sbar_par, mu)
    value += -alpha * g_perp_sq + 0.5 * eig.delta * t * t + mu / 3.0 * t**3
    return SubproblemSolution(step, sbar_par, alpha, g_perp_norm, value)


def solve_dense(gbar, lambdas, mu):
    """Full-basis separable solve; testing path limited to n <= 64."""
    gbar = np.asarray(gbar, dtype=np.float64)
    if gbar.shape[0] > DENSE_LIMIT:
        raise InvalidArgument(f"solve_dense is limited to n <= {DENSE_LIMIT}")
    return solve_parallel(gbar, lambdas, mu)
