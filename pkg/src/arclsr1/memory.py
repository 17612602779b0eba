"""Limited-memory SR1 history, compact form and partial eigendecomposition.

The quasi-Newton matrix is never stored densely. With ``B0 = delta * I``
and the stored pairs ``S = [s_0 ... s_{k-1}]``, ``Y = [y_0 ... y_{k-1}]``::

    B = delta * I + Psi @ inv(Mmat) @ Psi.T
    Psi  = Y - delta * S
    Mmat = D + L + L.T - delta * S.T @ S

where ``D`` and ``L`` are the diagonal and strictly lower triangle of
``S.T @ Y``. :func:`partial_eig` turns that into
``B = delta * I + U_par @ diag(lam_hat) @ U_par.T`` with ``U_par`` having
orthonormal columns, which is all the cubic subproblem needs.
"""
from __future__ import annotations

import logging
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import dense
from .errors import IllConditionedMetric, InvalidArgument, SingularMemory, SingularSystem

logger = logging.getLogger(__name__)

DELTA_BOUNDS = (1e-8, 1e8)
COND_LIMIT = 1e12
DENSE_LIMIT = 64


class PairBuffer:
    """FIFO store of at most ``capacity`` accepted ``(s, y)`` pairs."""

    def __init__(self, capacity=10, accept_eps=1e-8):
        if int(capacity) < 1:
            raise InvalidArgument(f"memory capacity must be >= 1, got {capacity}")
        if not accept_eps > 0:
            raise InvalidArgument(f"accept_eps must be positive, got {accept_eps}")
        self.capacity = int(capacity)
        self.accept_eps = float(accept_eps)
        self._s = deque()
        self._y = deque()

    def __len__(self):
        return len(self._s)

    @property
    def dim(self):
        return self._s[0].shape[0] if self._s else None

    @property
    def S(self):
        return np.column_stack(self._s) if self._s else np.zeros((0, 0))

    @property
    def Y(self):
        return np.column_stack(self._y) if self._y else np.zeros((0, 0))

    def append(self, s, y):
        s = np.array(s, dtype=np.float64)
        y = np.array(y, dtype=np.float64)
        if s.shape != y.shape or s.ndim != 1:
            raise InvalidArgument(f"s and y must be equal-length vectors, got {s.shape}, {y.shape}")
        if self._s and s.shape[0] != self.dim:
            raise InvalidArgument(f"pair dimension {s.shape[0]} != buffer dimension {self.dim}")
        if len(self._s) == self.capacity:
            self.drop_oldest()
        self._s.append(s)
        self._y.append(y)

    def drop_oldest(self):
        self._s.popleft()
        self._y.popleft()

    def clear(self):
        self._s.clear()
        self._y.clear()

    def copy(self):
        other = PairBuffer(self.capacity, self.accept_eps)
        other._s = deque(v.copy() for v in self._s)
        other._y = deque(v.copy() for v in self._y)
        return other


@dataclass(frozen=True)
class CompactSr1:
    delta: float
    Psi: np.ndarray
    Mmat: np.ndarray
    cond: float
    # Column equilibration of Mmat (1 / ||s_j||) and the LU of the scaled matrix.
    _scale: np.ndarray = field(repr=False)
    _lu: tuple = field(repr=False)

    @property
    def n(self):
        return self.Psi.shape[0]

    @property
    def k(self):
        return self.Psi.shape[1]

    def solve_m(self, X):
        """Apply ``inv(Mmat)`` to a vector or ``k x p`` block."""
        X = np.asarray(X, dtype=np.float64)
        d = self._scale if X.ndim == 1 else self._scale[:, None]
        return d * scipy.linalg.lu_solve(self._lu, d * X, check_finite=False)


@dataclass(frozen=True)
class LsrEigFactors:
    delta: float
    Upar: np.ndarray
    lam_hat: np.ndarray

    @property
    def n(self):
        return self.Upar.shape[0]

    @property
    def k(self):
        return self.Upar.shape[1]

    def apply(self, v):
        """``B @ v`` in O(nk)."""
        v = np.asarray(v, dtype=np.float64)
        if self.k == 0:
            return self.delta * v
        return self.delta * v + self.Upar @ (self.lam_hat * (self.Upar.T @ v))

    def eigenvalues(self):
        """Eigenvalues of B on the parallel subspace, ``lam_hat + delta``."""
        return self.lam_hat + self.delta


def identity_factors(n, delta=1.0):
    """Factors for ``B = delta * I``, used while the history is empty."""
    return LsrEigFactors(float(delta), np.zeros((n, 0)), np.zeros(0))


def try_add_pair(buf, s, y, current_B):
    """Append ``(s, y)`` if it passes the SR1 acceptance test.

    ``current_B`` is a callable returning ``B @ v`` (or a precomputed
    ``B @ s`` array). The pair is stored only when
    ``|s.T r| > eps * ||s|| * ||r||`` with ``r = y - B s``.
    """
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))):
        raise InvalidArgument("pair contains non-finite entries")
    Bs = current_B(s) if callable(current_B) else np.asarray(current_B, dtype=np.float64)
    r = y - Bs
    lhs = abs(s @ r)
    rhs = buf.accept_eps * np.linalg.norm(s) * np.linalg.norm(r)
    if lhs > rhs:
        buf.append(s, y)
        return True
    return False


def spectral_shift(buf, bounds=DELTA_BOUNDS, previous=None, scale=1.0):
    """Initial-matrix scale from the pencil ``S.T Y u = lam S.T S u``.

    Returns ``(delta, fell_back)``. ``delta`` is ``scale * min(lam)``
    clamped into ``bounds``. If ``S.T S`` is not positive definite the
    previous delta (or the lower bound) is reused and ``fell_back`` is True.
    """
    if len(buf) == 0:
        raise InvalidArgument("spectral_shift needs a non-empty buffer")
    lo, hi = bounds
    S, Y = buf.S, buf.Y
    try:
        lam = dense.gen_sym_eig(S.T @ Y, S.T @ S)
    except IllConditionedMetric as exc:
        fallback = lo if previous is None else float(previous)
        logger.debug("spectral shift fallback to %g: %s", fallback, exc)
        return fallback, True
    return float(np.clip(scale * lam[0], lo, hi)), False


def build_compact(buf, delta, cond_limit=COND_LIMIT):
    """Compact SR1 factors ``(Psi, Mmat)`` for ``B0 = delta * I``.

    Raises :class:`SingularMemory` when the column-equilibrated ``Mmat``
    has condition number above ``cond_limit``; the caller is expected to
    drop the oldest pair and retry.
    """
    if len(buf) == 0:
        raise InvalidArgument("build_compact needs a non-empty buffer; use identity_factors")
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta}")
    S, Y = buf.S, buf.Y
    SY = S.T @ Y
    Mmat = np.tril(SY) + np.tril(SY, -1).T - delta * (S.T @ S)
    Psi = Y - delta * S
    # Equilibrate by step lengths so the guard does not fire on mere
    # differences of scale between old and recent steps.
    scale = 1.0 / np.linalg.norm(S, axis=0)
    Ms = scale[:, None] * Mmat * scale[None, :]
    try:
        _, cond = dense.solve_small(Ms, np.eye(Ms.shape[0]))
    except SingularSystem as exc:
        raise SingularMemory(str(exc)) from exc
    if not cond <= cond_limit:
        raise SingularMemory(f"compact middle matrix condition {cond:.3e} exceeds {cond_limit:.1e}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu = scipy.linalg.lu_factor(Ms, check_finite=False)
    return CompactSr1(float(delta), Psi, Mmat, float(cond), scale, lu)


def apply_b(c, v):
    """Matrix-free ``B @ v`` from the compact representation."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != c.n:
        raise InvalidArgument(f"vector length {v.shape[0]} != {c.n}")
    return c.delta * v + c.Psi @ c.solve_m(c.Psi.T @ v)


def partial_eig(c):
    """Spectral factors of ``B`` on the range of ``Psi``.

    QR of ``Psi`` gives ``Psi = Q R``; the small symmetric matrix
    ``R inv(Mmat) R.T = P diag(lam_hat) P.T`` then yields ``U_par = Q P``.
    """
    Q, R = dense.qr_thin(c.Psi)
    inner = R @ c.solve_m(R.T)
    P, lam_hat = dense.sym_eig(inner)
    return LsrEigFactors(c.delta, Q @ P, lam_hat)


def dense_b(c):
    """Explicit ``n x n`` matrix. Oracle use only, refused for n > 64."""
    if isinstance(c, LsrEigFactors):
        if c.n > DENSE_LIMIT:
            raise InvalidArgument(f"dense_b is limited to n <= {DENSE_LIMIT}, got {c.n}")
        return c.delta * np.eye(c.n) + (c.Upar * c.lam_hat) @ c.Upar.T
    if c.n > DENSE_LIMIT:
        raise InvalidArgument(f"dense_b is limited to n <= {DENSE_LIMIT}, got {c.n}")
    B = c.delta * np.eye(c.n) + c.Psi @ c.solve_m(c.Psi.T)
    return dense.symmetrize(B)


def build_factors(buf, n, bounds=DELTA_BOUNDS, previous_delta=None, scale=1.0,
                  cond_limit=COND_LIMIT, initial_delta=1.0):
    """Recompute ``delta`` and the spectral factors for the current buffer.

    Drops the oldest pairs while the compact form is singular; with no
    usable history this returns ``B = initial_delta * I``. Returns
    ``(factors, delta_fell_back)``.
    """
    fell_back = False
    # More than n pairs are necessarily dependent.
    while len(buf) > n:
        buf.drop_oldest()
    while len(buf):
        delta, fb = spectral_shift(buf, bounds, previous_delta, scale)
        fell_back = fell_back or fb
        try:
            return partial_eig(build_compact(buf, delta, cond_limit)), fell_back
        except SingularMemory as exc:
            logger.debug("dropping oldest pair (%d stored): %s", len(buf), exc)
            buf.drop_oldest()
    return identity_factors(n, initial_delta), fell_back
