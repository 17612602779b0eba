"""Benchmark command line: ``run``, ``compare``, ``sweep`` and ``check``.

Runs are described by a TOML file::

    [problem]
    name = "logistic"          # quadratic | rosenbrock | logistic | iris | autoencoder | digits
    n_per_class = 100

    [optimizer]
    name = "arcs_lsr1"         # or sgd_momentum | adagrad | rmsprop | adam | lbfgs
    options = { memory = 10 }

    [schedule]                 # optional; present means mini-batch training
    initial_batch = 32
    max_iters_per_batch = 10

    [run]
    seed = 0
    epochs = 20                # with [schedule]
    iterations = 500           # without [schedule]

``compare`` replaces ``[optimizer]`` by an array of ``[[optimizers]]``
tables; ``sweep`` adds a ``[sweep]`` table with ``memory``, ``max_iters``
and ``batch`` lists. Unknown keys are rejected with their path and line.
Set ``ARCLSR1_DATA_DIR`` to read data files from another directory.
"""
from __future__ import annotations

import argparse
import csv
from decimal import Decimal
import dataclasses
import logging
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import arcs, baselines, checks
from .errors import ArcError, ConfigError, InvalidArgument
from .problems import (
    DiagonalQuadratic,
    MlpSpec,
    Quadratic,
    autoencoder_spec,
    iris_spec,
    load_idx,
    load_iris,
    logistic_regression,
    mlp,
    random_spd,
    rosenbrock,
    synth_blobs,
)
from .stochastic import OPTIMIZERS, BatchSchedule, hyperparameter_sweep, make_trainer, run_epochs

logger = logging.getLogger("arclsr1")

CSV_COLUMNS = ("iter", "epoch", "f_train", "f_test", "accuracy", "grad_norm", "mu",
               "batch_size", "rho", "step_norm", "wall_seconds")
CSV_HEADER = ",".join(CSV_COLUMNS)
SIG_DIGITS = 12

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

EXAMPLE_CONFIG = """\
[problem]
name = "logistic"
n_per_class = 60

[optimizer]
name = "arcs_lsr1"
options = { memory = 5 }

[schedule]
initial_batch = 16
max_iters_per_batch = 3
full_eval_period = 4

[run]
seed = 0
epochs = 4
name = "example"
"""

# config schema --------------------------------------------------------------

_PROBLEM_KEYS = {
    "quadratic": {"name", "dim", "cond", "kind", "start_scale"},
    "rosenbrock": {"name", "dim", "start"},
    "logistic": {"name", "n_per_class", "scale", "separation", "l2", "test_fraction"},
    "iris": {"name", "path", "test_fraction", "standardize", "hidden", "activation"},
    "autoencoder": {"name", "images", "labels", "limit", "hidden", "test_fraction"},
    "digits": {"name", "images", "labels", "limit", "hidden", "activation", "test_fraction"},
}
_SCHEDULE_KEYS = {"initial_batch", "max_batch", "growth_factor", "full_eval_period",
                  "stall_tolerance", "max_iters_per_batch"}
_RUN_KEYS = {"seed", "epochs", "iterations", "name", "timing", "out_dir"}
_OPT_KEYS = {"name", "options", "max_iters_per_batch", "label"}
_SWEEP_KEYS = {"memory", "max_iters", "batch", "early_epoch", "options"}
_TOP_KEYS = {"problem", "optimizer", "optimizers", "schedule", "run", "sweep"}


def _line_of(text, key):
    leaf = key.split(".")[-1].split("[")[0]
    for i, line in enumerate(text.splitlines(), start=1):
        if re.match(rf"\s*{re.escape(leaf)}\s*=", line) or re.match(rf"\s*\[+\s*{re.escape(leaf)}\s*\]+", line):
            return i
    return None


def _reject_unknown(section, allowed, where, text):
    for key in section:
        if key not in allowed:
            path = f"{where}.{key}" if where else key
            line = _line_of(text, key)
            loc = f" (line {line})" if line else ""
            raise ConfigError(f"unknown key '{path}'{loc}; allowed: {', '.join(sorted(allowed))}")


def _check_optimizer(block, where, text):
    if not isinstance(block, dict):
        raise ConfigError(f"'{where}' must be a table")
    _reject_unknown(block, _OPT_KEYS, where, text)
    name = block.get("name")
    if name not in OPTIMIZERS:
        line = _line_of(text, "name")
        raise ConfigError(f"'{where}.name' = {name!r} is not one of {', '.join(OPTIMIZERS)}"
                          + (f" (line {line})" if line else ""))
    options = block.get("options", {})
    if not isinstance(options, dict):
        raise ConfigError(f"'{where}.options' must be a table")
    target = arcs.ArcsConfig if name == "arcs_lsr1" else baselines.BaselineConfig
    allowed = {f.name for f in dataclasses.fields(target)} - {"method"}
    _reject_unknown(options, allowed, f"{where}.options", text)
    try:
        if name == "arcs_lsr1":
            arcs.ArcsConfig(**options)
        else:
            baselines.BaselineConfig(name, **options)
    except (InvalidArgument, TypeError) as exc:
        raise ConfigError(f"'{where}.options': {exc}") from None


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def parse_config(text, source="<config>"):
    try:
        cfg = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    _reject_unknown(cfg, _TOP_KEYS, "", text)
    problem = cfg.get("problem")
    if not isinstance(problem, dict) or "name" not in problem:
        raise ConfigError(f"{source}: missing [problem] table with a 'name'")
    if problem["name"] not in _PROBLEM_KEYS:
        raise ConfigError(f"'problem.name' = {problem['name']!r} is not one of {', '.join(_PROBLEM_KEYS)}"
                          f" (line {_line_of(text, 'name')})")
    _reject_unknown(problem, _PROBLEM_KEYS[problem["name"]], "problem", text)
    if "optimizer" in cfg:
        _check_optimizer(cfg["optimizer"], "optimizer", text)
    for i, block in enumerate(cfg.get("optimizers", [])):
        _check_optimizer(block, f"optimizers[{i}]", text)
    _reject_unknown(cfg.get("schedule", {}), _SCHEDULE_KEYS, "schedule", text)
    try:
        BatchSchedule(**cfg.get("schedule", {}))
    except (InvalidArgument, TypeError) as exc:
        raise ConfigError(f"'schedule': {exc}") from None
    _reject_unknown(cfg.get("run", {}), _RUN_KEYS, "run", text)
    _reject_unknown(cfg.get("sweep", {}), _SWEEP_KEYS, "sweep", text)
    return cfg


# problem construction -------------------------------------------------------

class Problem:
    """Train/test objectives plus a starting point."""

    def __init__(self, name, train, theta0, test=None):
        self.name, self.train, self.theta0, self.test = name, train, theta0, test


def build_problem(spec, seed):
    p = dict(spec)
    name = p["name"]
    rng = np.random.default_rng(seed)
    if name == "quadratic":
        n = int(p.get("dim", 50))
        kind = p.get("kind", "random_spd")
        if kind == "identity":
            obj = Quadratic(np.eye(n), rng.standard_normal(n))
        elif kind == "diagonal":
            obj = DiagonalQuadratic(np.logspace(0, np.log10(float(p.get("cond", 10.0))), n),
                                    rng.standard_normal(n))
        elif kind == "random_spd":
            obj = Quadratic(random_spd(n, float(p.get("cond", 10.0)), rng), rng.standard_normal(n))
        else:
            raise ConfigError(f"'problem.kind' = {kind!r} is not identity, diagonal or random_spd")
        x0 = float(p.get("start_scale", 0.0)) * rng.standard_normal(n)
        return Problem(name, obj, x0)
    if name == "rosenbrock":
        n = int(p.get("dim", 2))
        start = p.get("start")
        x0 = np.array(start, dtype=float) if start is not None else np.tile([-1.2, 1.0], n)[:n]
        return Problem(name, rosenbrock(n), x0)
    if name == "logistic":
        sep = float(p.get("separation", 2.0))
        ds = synth_blobs(int(p.get("n_per_class", 100)), ((-sep, 0.0), (sep, 0.0)),
                         float(p.get("scale", 0.5)), seed, float(p.get("test_fraction", 0.2)))
        l2 = float(p.get("l2", 0.0))
        return Problem(name, logistic_regression(ds, l2, "train"), np.zeros(3),
                       logistic_regression(ds, l2, "test"))
    if name == "iris":
        ds = load_iris(p.get("path"), seed, float(p.get("test_fraction", 0.2)))
        if p.get("standardize", True):
            ds = ds.standardized()
        if "hidden" in p:
            mspec = MlpSpec((4, *p["hidden"], 3), p.get("activation", "relu"), seed=seed)
        else:
            mspec = iris_spec(seed)
        return Problem(name, mlp(mspec, ds, "train"), mspec.initial_params(), mlp(mspec, ds, "test"))
    if name in ("autoencoder", "digits"):
        ds = load_idx(p.get("images"), p.get("labels"), p.get("limit", 1000), seed,
                      float(p.get("test_fraction", 0.2)))
        width = ds.inputs.shape[1]
        if name == "autoencoder":
            mspec = autoencoder_spec(width, tuple(p.get("hidden", (32, 16, 32))), seed)
        else:
            mspec = MlpSpec((width, *p.get("hidden", (32,)), ds.n_classes),
                            p.get("activation", "relu"), seed=seed)
        return Problem(name, mlp(mspec, ds, "train"), mspec.initial_params(), mlp(mspec, ds, "test"))
    raise ConfigError(f"unknown problem {name!r}")


# CSV output -----------------------------------------------------------------

def format_value(x):
    """Fixed-point text with 12 significant digits; ``None``/NaN become empty."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    # Round to 12 significant digits in scientific form, then expand.
    return format(Decimal(f"{x:.{SIG_DIGITS - 1}e}"), "f")


def write_trace(path, rows, timing=True):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            if not timing:
                row = dict(row, wall_seconds=None)
            w.writerow([format_value(row.get(c)) for c in CSV_COLUMNS])
    return path


# execution ------------------------------------------------------------------

class RunOutcome:
    def __init__(self, label, rows, stop_reason, failed_iter=None):
        self.label, self.rows, self.stop_reason, self.failed_iter = label, rows, stop_reason, failed_iter

    @property
    def last(self):
        return self.rows[-1] if self.rows else {}

    def best_accuracy(self):
        acc = [r["accuracy"] for r in self.rows if r.get("accuracy") is not None
               and not math.isnan(r["accuracy"])]
        return max(acc) if acc else math.nan


def _initial_row(obj, theta):
    f, g = obj.value_and_gradient(theta)
    return dict(iter=0, f_train=float(f), grad_norm=float(np.linalg.norm(g)), wall_seconds=0.0)


def run_deterministic(problem, opt_block, iterations):
    """Full-batch run; one trace row per optimizer iteration."""
    name = opt_block["name"]
    options = dict(opt_block.get("options", {}))
    obj, theta0 = problem.train, problem.theta0
    rows = [_initial_row(obj, theta0)]
    if name == "arcs_lsr1":
        options.setdefault("k_max", iterations)
        res = arcs.minimize(obj, theta0, arcs.ArcsConfig(**options))
        trace, reason = res.trace, res.stop_reason
    elif name == "lbfgs":
        options.setdefault("max_iter", iterations)
        res = baselines.lbfgs_minimize(obj, theta0, baselines.BaselineConfig("lbfgs", **options))
        trace, reason = res.trace, res.stop_reason
    else:
        cfg = baselines.BaselineConfig(name, **options)
        res = baselines.first_order_minimize(obj, theta0, cfg, iterations)
        trace, reason = res.trace, res.stop_reason
    wall = 0.0
    for rec in trace:
        wall += rec.wall_time
        rows.append(dict(iter=rec.k, f_train=rec.f_value, grad_norm=rec.grad_norm, mu=rec.mu,
                         rho=rec.rho, step_norm=rec.step_norm, wall_seconds=wall))
    failed = len(trace) + 1 if reason == "numeric_failure" else None
    return RunOutcome(opt_block.get("label", name), rows, reason, failed)


def run_stochastic(problem, opt_block, schedule_block, epochs, seed):
    name = opt_block["name"]
    sched = dict(schedule_block)
    if "max_iters_per_batch" in opt_block:
        sched["max_iters_per_batch"] = opt_block["max_iters_per_batch"]
    schedule = BatchSchedule(seed=seed, **sched)
    trainer = make_trainer(name, opt_block.get("options", {}))
    try:
        res = run_epochs(problem.train, trainer, schedule, epochs, problem.theta0, problem.test)
    except ArcError as exc:
        logger.error("%s: %s", name, exc)
        return RunOutcome(opt_block.get("label", name), [], "numeric_failure", trainer.iterations + 1)
    rows = [vars(r) for r in res.trace]
    return RunOutcome(opt_block.get("label", name), rows, "epochs")


def execute(cfg, problem, opt_block, seed):
    run = cfg.get("run", {})
    if "schedule" in cfg:
        if not problem.train.has_batches:
            raise ConfigError(f"problem '{problem.name}' has no mini-batch interface; drop [schedule]")
        return run_stochastic(problem, opt_block, cfg["schedule"], int(run.get("epochs", 20)), seed)
    return run_deterministic(problem, opt_block, int(run.get("iterations", 1000)))


def _summary_line(problem, out):
    last = out.last
    parts = [f"optimizer={out.label}", f"problem={problem.name}", f"stop={out.stop_reason}"]
    for key in ("iter", "epoch", "f_train", "f_test", "accuracy", "grad_norm", "wall_seconds"):
        v = last.get(key)
        if v is not None and not (isinstance(v, float) and math.isnan(v)):
            parts.append(f"{key}={v:.6g}" if isinstance(v, float) else f"{key}={v}")
    return " ".join(parts)


def _settings(cfg, args):
    run = cfg.get("run", {})
    seed = args.seed if args.seed is not None else int(run.get("seed", 0))
    out_dir = Path(args.out_dir if args.out_dir is not None else run.get("out_dir", "runs"))
    timing = bool(run.get("timing", True)) and not args.no_timing
    label = run.get("name", Path(args.config).stem)
    return seed, out_dir, timing, label


def cmd_run(args):
    cfg = load_config(args.config)
    if "optimizer" not in cfg:
        raise ConfigError("'run' needs an [optimizer] table")
    seed, out_dir, timing, label = _settings(cfg, args)
    problem = build_problem(cfg["problem"], seed)
    out = execute(cfg, problem, cfg["optimizer"], seed)
    path = write_trace(out_dir / f"{label}_{out.label}.csv", out.rows, timing)
    if not args.quiet:
        print(_summary_line(problem, out) + f" trace={path}")
    if out.stop_reason == "numeric_failure":
        print(f"error: numeric failure at iteration {out.failed_iter}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


SUMMARY_COLUMNS = ("optimizer", "best_accuracy", "final_f_train", "final_f_test", "wall_seconds", "stop")


def cmd_compare(args):
    cfg = load_config(args.config)
    blocks = cfg.get("optimizers") or ([cfg["optimizer"]] if "optimizer" in cfg else [])
    if not blocks:
        raise ConfigError("'compare' needs [[optimizers]] tables")
    seed, out_dir, timing, label = _settings(cfg, args)
    labels = [b.get("label", b["name"]) for b in blocks]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"optimizer labels must be unique, got {labels}; set 'label'")
    summary, code = [], EXIT_OK
    for block in blocks:
        problem = build_problem(cfg["problem"], seed)  # fresh, identical problem per optimizer
        out = execute(cfg, problem, block, seed)
        write_trace(out_dir / f"{label}_{out.label}.csv", out.rows, timing)
        last = out.last
        summary.append(dict(
            optimizer=out.label, best_accuracy=out.best_accuracy(),
            final_f_train=last.get("f_train"), final_f_test=last.get("f_test"),
            wall_seconds=last.get("wall_seconds") if timing else None, stop=out.stop_reason,
        ))
        if not args.quiet:
            print(_summary_line(problem, out))
        if out.stop_reason == "numeric_failure":
            print(f"error: {out.label}: numeric failure at iteration {out.failed_iter}", file=sys.stderr)
            code = EXIT_NUMERIC
    path = out_dir / f"{label}_summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in summary:
            w.writerow([row["optimizer"], *(format_value(row[c]) for c in SUMMARY_COLUMNS[1:-1]), row["stop"]])
    if not args.quiet:
        _print_table(summary)
    return code


def _print_table(summary):
    print(f"{'optimizer':<16}{'best acc':>10}{'f_train':>14}{'f_test':>14}{'wall s':>10}")
    for r in summary:
        def fmt(v, spec):
            return format(v, spec) if v is not None and not math.isnan(v) else "-"
        print(f"{r['optimizer']:<16}{fmt(r['best_accuracy'], '10.3f')}{fmt(r['final_f_train'], '14.6g')}"
              f"{fmt(r['final_f_test'], '14.6g')}{fmt(r['wall_seconds'], '10.2f')}")


SWEEP_COLUMNS = ("memory", "max_iters", "batch", "early_accuracy", "final_accuracy",
                 "final_f_train", "final_f_test", "wall_seconds")


def cmd_sweep(args):
    cfg = load_config(args.config)
    grid_cfg = dict(cfg.get("sweep", {}))
    if not grid_cfg:
        raise ConfigError("'sweep' needs a [sweep] table")
    seed, out_dir, timing, label = _settings(cfg, args)
    run = cfg.get("run", {})
    schedule = BatchSchedule(**cfg.get("schedule", {}))
    early = int(grid_cfg.pop("early_epoch", 1))
    options = grid_cfg.pop("options", {})
    grid = {k: grid_cfg.get(k, [default]) for k, default in
            (("memory", 10), ("max_iters", schedule.max_iters_per_batch), ("batch", schedule.initial_batch))}

    def make_problem(s):
        p = build_problem(cfg["problem"], s)
        if not p.train.has_batches:
            raise ConfigError(f"problem '{p.name}' has no mini-batch interface")
        return p.train, p.test, p.theta0

    rows = hyperparameter_sweep(make_problem, grid, schedule, int(run.get("epochs", 20)), seed, early, options)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{label}_sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            r = dict(r, wall_seconds=r["wall_seconds"] if timing else None)
            w.writerow([format_value(r[c]) for c in SWEEP_COLUMNS])
    for r in rows:
        tag = f"m{r['memory']}_it{r['max_iters']}_b{r['batch']}"
        write_trace(out_dir / f"{label}_{tag}.csv", [vars(x) for x in r["result"].trace], timing)
    if not args.quiet:
        for r in rows:
            print(f"memory={r['memory']} max_iters={r['max_iters']} batch={r['batch']} "
                  f"early_acc={r['early_accuracy']:.4f} final_acc={r['final_accuracy']:.4f} "
                  f"f_train={r['final_f_train']:.6g}")
        print(f"table={path}")
    return EXIT_OK


def cmd_check(args):
    def report(r):
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<32} {r.seconds:7.1f}s  {r.detail}", flush=True)

    results = checks.run_checks(args.level, report=None if args.quiet else report)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    if not args.quiet:
        print(f"all {len(results)} checks passed")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="arclsr1-bench", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_config=True):
        if with_config:
            p.add_argument("config", help="TOML run description")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out-dir", default=None, help="directory for CSV traces (default: runs)")
        p.add_argument("--no-timing", action="store_true",
                       help="leave wall_seconds empty so traces are byte-reproducible")
        p.add_argument("-q", "--quiet", action="store_true")

    for name, fn, text in (("run", cmd_run, "single optimization run"),
                           ("compare", cmd_compare, "several optimizers on one problem"),
                           ("sweep", cmd_sweep, "ARCs-LSR1 hyperparameter grid")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.set_defaults(func=fn)
    p = sub.add_parser("check", help="oracle and invariant battery")
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
