"""Independent reference computations used by tests and ``check``.

Nothing here calls the production solvers it is meant to verify: the SR1
matrix is rebuilt by the recursive rank-one formula, scalar cubics are
minimized by grid search plus root bracketing, generalized eigenvalues come
from Cholesky whitening, and the cubic model is solved in a dense
eigenbasis. All routines are for small n only.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from .errors import InvalidArgument


def recursive_sr1(S, Y, delta):
    """Dense SR1 matrix from ``B0 = delta*I`` by sequential rank-one updates."""
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    n = S.shape[0]
    B = delta * np.eye(n)
    for j in range(S.shape[1]):
        s, y = S[:, j], Y[:, j]
        r = y - B @ s
        B = B + np.outer(r, r) / (r @ s)
    return B


def whitened_gen_eig(A, B):
    """Eigenvalues of ``A u = lam B u`` via ``L^-1 A L^-T`` with ``B = L L^T``."""
    A = 0.5 * (np.asarray(A, dtype=np.float64) + np.asarray(A, dtype=np.float64).T)
    L = np.linalg.cholesky(np.asarray(B, dtype=np.float64))
    W = scipy.linalg.solve_triangular(L, A, lower=True)
    W = scipy.linalg.solve_triangular(L, W.T, lower=True)
    return np.sort(np.linalg.eigvalsh(0.5 * (W + W.T)))


def cubic_bound(gbar, lam, mu):
    """A radius that contains every minimizer of the scalar cubic."""
    return (abs(lam) + math.sqrt(lam * lam + 4.0 * abs(gbar) * mu)) / (2.0 * mu) + 1e-12


def scalar_grid_min(gbar, lam, mu, n_points=100_000, refine=True):
    """Minimize ``gbar*s + lam/2 s^2 + mu/3 |s|^3`` on a grid over
    ``[-10 b, 10 b]`` (``b`` from :func:`cubic_bound``), then polish the
    best grid point by a bracketed root of the derivative.

    Returns ``(s, value)``.
    """
    def m(s):
        return gbar * s + 0.5 * lam * s * s + mu / 3.0 * np.abs(s) ** 3

    def dm(s):
        return gbar + lam * s + mu * s * abs(s)

    b = 10.0 * cubic_bound(gbar, lam, mu)
    grid = np.linspace(-b, b, int(n_points))
    vals = m(grid)
    i = int(np.argmin(vals))
    best_s, best_v = float(grid[i]), float(vals[i])
    if refine:
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        if dm(lo) < 0 < dm(hi):
            r = brentq(dm, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            if m(r) <= best_v:
                best_s, best_v = float(r), float(m(r))
    return best_s, best_v


def sr1_norm_bound(n, delta_max, memory, accept_eps, term_eps):
    """``sqrt(n) * delta_max + m / (eps * eps_tilde)``."""
    return math.sqrt(n) * delta_max + memory / (accept_eps * term_eps)


def aligned_eigenbasis(B, g, delta, tol=1e-8):
    """Eigenbasis of dense ``B`` whose ``delta``-eigenspace is rotated so one
    vector lies along the component of ``g`` in that eigenspace.

    The cubic term of the model depends on the basis chosen inside a
    repeated eigenvalue; this is the choice that makes the perpendicular
    gradient a single coordinate. Returns ``(V, lambdas)``.
    """
    lam, V = np.linalg.eigh(0.5 * (B + B.T))
    cluster = np.abs(lam - delta) <= tol * max(1.0, abs(delta))
    if not cluster.any():
        return V, lam
    Vc = V[:, cluster]
    p = Vc @ (Vc.T @ g)
    pn = np.linalg.norm(p)
    if pn > 1e-14 * max(1.0, np.linalg.norm(g)):
        Q, _ = np.linalg.qr(np.column_stack([p / pn, Vc]))
        Q = Q[:, : Vc.shape[1]]
        Q[:, 0] *= np.sign(Q[:, 0] @ p) or 1.0
        V = V.copy()
        V[:, cluster] = Q
        lam = lam.copy()
        lam[cluster] = delta
    return V, lam


def dense_cubic_solution(g, B, delta, mu):
    """Minimize the separable cubic model in a dense aligned eigenbasis.

    Each coordinate is solved by :func:`scalar_grid_min`, so this path
    shares no code with the closed-form solver. Returns ``(s, value)``.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.size > 64:
        raise InvalidArgument("dense oracle is limited to n <= 64")
    V, lam = aligned_eigenbasis(B, g, delta)
    gbar = V.T @ g
    sbar = np.empty_like(gbar)
    value = 0.0
    for i in range(g.size):
        if abs(gbar[i]) <= 1e-15 * max(1.0, np.linalg.norm(g)) and lam[i] >= 0:
            sbar[i] = 0.0
            continue
        sbar[i], v = scalar_grid_min(gbar[i], lam[i], mu, 20_001)
        if gbar[i] == 0.0:
            sbar[i] = abs(sbar[i])  # same tie-break as the closed form
        value += v
    return V @ sbar, value


def direct_model(g, B, V, mu, s):
    """Model value ``g.T s + s.T B s / 2 + mu/3 ||V.T s||_3^3`` for a basis ``V``."""
    return float(g @ s + 0.5 * s @ B @ s + mu / 3.0 * np.sum(np.abs(V.T @ s) ** 3))
