"""Mini-batch training loop with monotone batch-size growth.

Each epoch draws batches without replacement from a seeded permutation and
lets the optimizer run up to ``max_iters_per_batch`` iterations on each
batch. Curvature pairs are built only from gradients of the batch the
optimizer is currently working on.

Every ``full_eval_period`` optimizer iterations the full training loss is
evaluated. If it has not dropped by at least ``stall_tolerance`` since the
previous check, the batch grows to ``min(ceil(d * growth_factor), d_max)``.
Those periodic values are the only input to the growth rule. Per-epoch
reporting metrics are computed separately and never feed back.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import arcs
from .baselines import METHODS as BASELINE_METHODS
from .baselines import BaselineConfig, Lbfgs, make_first_order
from .errors import InvalidArgument

logger = logging.getLogger(__name__)

OPTIMIZERS = ("arcs_lsr1",) + BASELINE_METHODS


@dataclass
class BatchSchedule:
    initial_batch: int = 32
    max_batch: Optional[int] = None  # None means the full training set
    growth_factor: float = 2.0
    full_eval_period: int = 10
    stall_tolerance: float = 1e-4
    max_iters_per_batch: int = 1
    seed: int = 0

    def __post_init__(self):
        if int(self.initial_batch) < 1:
            raise InvalidArgument(f"initial_batch must be >= 1, got {self.initial_batch}")
        if self.max_batch is not None and int(self.max_batch) < int(self.initial_batch):
            raise InvalidArgument("max_batch must be >= initial_batch")
        if not self.growth_factor > 1:
            raise InvalidArgument(f"growth_factor must be > 1, got {self.growth_factor}")
        if int(self.full_eval_period) < 2:
            raise InvalidArgument("full_eval_period must be > 1")
        if not self.stall_tolerance > 0:
            raise InvalidArgument("stall_tolerance must be > 0")
        if int(self.max_iters_per_batch) < 1:
            raise InvalidArgument("max_iters_per_batch must be >= 1")
        self.initial_batch = int(self.initial_batch)
        self.full_eval_period = int(self.full_eval_period)
        self.max_iters_per_batch = int(self.max_iters_per_batch)

    def bounds(self, n):
        """``(d0, d_max)`` clamped to the dataset size ``n``."""
        d_max = n if self.max_batch is None else int(self.max_batch)
        if d_max > n:
            logger.warning("max_batch %d exceeds dataset size %d; clamped", d_max, n)
            d_max = n
        d0 = self.initial_batch
        if d0 > d_max:
            logger.warning("initial_batch %d exceeds %d; clamped", d0, d_max)
            d0 = d_max
        return d0, d_max


def grow_batch(d, growth_factor, d_max):
    return min(int(math.ceil(d * growth_factor)), d_max)


# Optimizer adapters. Each exposes reset(theta), run_batch(batch_obj, n) and
# ``theta`` and ``iterations`` attributes; run_batch returns the last
# iteration's diagnostics.

@dataclass
class BatchStats:
    iterations: int = 0
    rho: float = math.nan
    mu: float = math.nan
    step_norm: float = math.nan


class ArcsTrainer:
    name = "arcs_lsr1"

    def __init__(self, cfg=None):
        self.cfg = cfg or arcs.ArcsConfig()
        self.state = None
        self._batch_key = None

    @property
    def theta(self):
        return self.state.theta

    @property
    def iterations(self):
        return 0 if self.state is None else self.state.iter

    def reset(self, theta):
        self.state = arcs.ArcsState.initial(theta, self.cfg)

    def run_batch(self, batch_obj, n_iter, batch_key=None):
        st = self.state
        if batch_key is None or batch_key != self._batch_key:
            # New batch: f and g must come from it before any pair is formed.
            st.invalidate()
            self._batch_key = batch_key
        stats = BatchStats()
        for _ in range(n_iter):
            assert self._batch_key == batch_key, "pair would mix two batches"
            rec = arcs.step(batch_obj, st, self.cfg)
            stats = BatchStats(stats.iterations + 1, rec.rho, rec.mu, rec.step_norm)
            if rec.grad_norm == 0.0:
                break
        return stats


class FirstOrderTrainer:
    def __init__(self, cfg):
        self.cfg = cfg
        self.name = cfg.method
        self.opt = None
        self.theta = None
        self.iterations = 0

    def reset(self, theta):
        self.theta = np.array(theta, dtype=np.float64)
        self.opt = make_first_order(self.theta.size, self.cfg)
        self.iterations = 0

    def run_batch(self, batch_obj, n_iter, batch_key=None):
        stats = BatchStats()
        for _ in range(n_iter):
            g = batch_obj.gradient(self.theta)
            new = self.opt.update(self.theta, g)
            stats = BatchStats(stats.iterations + 1, step_norm=float(np.linalg.norm(new - self.theta)))
            self.theta = new
            self.iterations += 1
        return stats


class LbfgsTrainer:
    name = "lbfgs"

    def __init__(self, cfg):
        self.cfg = cfg
        self.opt = None
        self.theta = None
        self.iterations = 0

    def reset(self, theta):
        self.theta = np.array(theta, dtype=np.float64)
        self.opt = Lbfgs(self.cfg)
        self.iterations = 0

    def run_batch(self, batch_obj, n_iter, batch_key=None):
        f, g = batch_obj.value_and_gradient(self.theta)
        stats = BatchStats()
        for _ in range(n_iter):
            self.theta, f, g, snorm, _ = self.opt.iterate(batch_obj, self.theta, float(f), np.asarray(g))
            stats = BatchStats(stats.iterations + 1, step_norm=snorm)
            self.iterations += 1
            if np.linalg.norm(g) <= self.cfg.lbfgs_tol:
                break
        return stats


def make_trainer(name, options=None):
    """Build an optimizer adapter by name; ``options`` are config fields."""
    options = dict(options or {})
    if name == "arcs_lsr1":
        return ArcsTrainer(arcs.ArcsConfig(**options))
    if name not in BASELINE_METHODS:
        raise InvalidArgument(f"unknown optimizer {name!r}; expected one of {OPTIMIZERS}")
    cfg = BaselineConfig(method=name, **options)
    return LbfgsTrainer(cfg) if name == "lbfgs" else FirstOrderTrainer(cfg)


@dataclass
class EpochRecord:
    iter: int
    epoch: int
    f_train: float
    f_test: float
    accuracy: float
    grad_norm: float
    mu: float
    batch_size: int
    rho: float
    step_norm: float
    wall_seconds: float


@dataclass
class TrainResult:
    theta: np.ndarray
    trace: List[EpochRecord]
    batch_sizes: List[int] = field(default_factory=list)  # one entry per optimizer iteration
    growth_checks: List[tuple] = field(default_factory=list)  # (iteration, full loss, grew)


def _accuracy(obj, test_obj, theta):
    target = test_obj if test_obj is not None else obj
    fn = getattr(target, "accuracy", None)
    if fn is None:
        return math.nan
    acc = fn(theta)
    return math.nan if acc is None else float(acc)


def run_epochs(obj, trainer, schedule, epochs, theta0, test_obj=None):
    """Train ``trainer`` on the finite-sum ``obj`` for ``epochs`` epochs.

    Returns a :class:`TrainResult` whose trace has one row for the starting
    point (epoch 0) and one per epoch. ``wall_seconds`` accumulates the
    optimizer's time only, excluding the reporting evaluations.
    """
    if not obj.has_batches:
        raise InvalidArgument(f"{type(obj).__name__} has no batch interface")
    n = obj.n_samples
    d, d_max = schedule.bounds(n)
    rng = np.random.default_rng(schedule.seed)
    trainer.reset(theta0)
    J = schedule.full_eval_period
    result = TrainResult(trainer.theta, [])
    prev_check = None
    total_iter = 0
    wall = 0.0
    last = BatchStats()

    def report(epoch):
        theta = trainer.theta
        f_tr, g_tr = obj.value_and_gradient(theta)
        f_te = test_obj.value(theta) if test_obj is not None else math.nan
        result.trace.append(EpochRecord(
            total_iter, epoch, float(f_tr), float(f_te), _accuracy(obj, test_obj, theta),
            float(np.linalg.norm(g_tr)), last.mu, d, last.rho, last.step_norm, wall,
        ))

    report(0)
    for epoch in range(1, int(epochs) + 1):
        perm = rng.permutation(n)
        pos = 0
        while pos < n:
            if d >= n:
                # Full batch in natural order, so the iterates match the
                # deterministic full-batch method exactly.
                idx, pos = np.arange(n), n
            else:
                idx, pos = perm[pos:pos + d], pos + d
            batch = obj.batch(idx)
            key = (epoch, pos, d)
            done = 0
            while done < schedule.max_iters_per_batch:
                # Stop at the next J boundary so the growth check sees it.
                room = J - total_iter % J
                n_iter = min(schedule.max_iters_per_batch - done, room)
                t0 = time.perf_counter()
                stats = trainer.run_batch(batch, n_iter, key)
                wall += time.perf_counter() - t0
                if stats.iterations == 0:
                    break
                last = stats
                done += stats.iterations
                total_iter += stats.iterations
                result.batch_sizes.extend([d] * stats.iterations)
                if total_iter % J == 0:
                    f_full = float(obj.value(trainer.theta))
                    grew = prev_check is not None and f_full > prev_check - schedule.stall_tolerance
                    if grew and d < d_max:
                        d = grow_batch(d, schedule.growth_factor, d_max)
                        logger.debug("iteration %d: full loss %.6g stalled, batch -> %d",
                                     total_iter, f_full, d)
                    result.growth_checks.append((total_iter, f_full, bool(grew)))
                    prev_check = f_full
                if stats.iterations < n_iter:
                    break
        report(epoch)
    result.theta = trainer.theta
    return result


def hyperparameter_sweep(make_problem, grid, schedule, epochs, seed=0, early_epoch=1,
                         arcs_options=None):
    """ARCs-LSR1 over the Cartesian product of ``grid``.

    ``grid`` maps ``memory``, ``max_iters`` and ``batch`` to value lists.
    ``make_problem(seed)`` returns ``(train_obj, test_obj, theta0)``. Every
    cell uses the same seed. Returns one dict per cell.
    """
    keys = ("memory", "max_iters", "batch")
    unknown = set(grid) - set(keys)
    if unknown:
        raise InvalidArgument(f"unknown sweep axes {sorted(unknown)}; expected {keys}")
    axes = [list(grid.get(k, [])) for k in keys]
    if any(not a for a in axes):
        raise InvalidArgument("every sweep axis needs at least one value")
    rows = []
    for memory, max_iters, batch in itertools.product(*axes):
        train, test, theta0 = make_problem(seed)
        opts = dict(arcs_options or {})
        opts["memory"] = memory
        trainer = ArcsTrainer(arcs.ArcsConfig(**opts))
        sched = BatchSchedule(
            initial_batch=batch,
            max_batch=max(batch, schedule.max_batch or 0) if schedule.max_batch else None,
            growth_factor=schedule.growth_factor,
            full_eval_period=schedule.full_eval_period,
            stall_tolerance=schedule.stall_tolerance,
            max_iters_per_batch=max_iters,
            seed=seed,
        )
        res = run_epochs(train, trainer, sched, epochs, theta0, test)
        early = res.trace[min(early_epoch, len(res.trace) - 1)]
        final = res.trace[-1]
        rows.append(dict(
            memory=memory, max_iters=max_iters, batch=batch,
            early_accuracy=early.accuracy, final_accuracy=final.accuracy,
            final_f_train=final.f_train, final_f_test=final.f_test,
            wall_seconds=final.wall_seconds, result=res,
        ))
    return rows
