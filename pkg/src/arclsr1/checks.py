"""Named oracle and invariant checks.

Each check is seeded, self-contained and returns ``(passed, detail)``.
``run_checks("fast")`` covers the algebraic suites and the small
convergence runs; ``"full"`` adds the training experiments, the timing
scan and the CLI determinism check. The acceptance tests call the same
functions, so the command line and the test suite cannot drift apart.
"""
from __future__ import annotations

import logging
import math
import tempfile
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import ortho_group

from . import dense, memory, oracles, subproblem
from .arcs import ArcsConfig, ArcsState, minimize, model_decrease_check, step
from .errors import SingularMemory
from .problems import (
    DiagonalQuadratic,
    Mlp,
    MlpSpec,
    Objective,
    Quadratic,
    autoencoder_spec,
    gradient_error,
    iris_spec,
    load_idx,
    load_iris,
    logistic_regression,
    mlp,
    random_spd,
    rosenbrock,
    synth_blobs,
)
from .stochastic import BatchSchedule, make_trainer, run_epochs

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


# instance generators -------------------------------------------------------

def _indefinite_sym(n, rng, scale=3.0):
    Q = ortho_group.rvs(n, random_state=rng) if n > 1 else np.ones((1, 1))
    lam = rng.uniform(-scale, scale, n)
    lam[0] = abs(lam[0]) + 0.5  # at least one positive direction
    return (Q * lam) @ Q.T


def _sr1_buffer(n, m, rng, delta, A=None, max_tries=50):
    """Pairs ``(s, A s)`` passed through the SR1 acceptance test against
    the compact matrix built so far with a fixed ``delta``."""
    A = _indefinite_sym(n, rng) if A is None else A
    buf = memory.PairBuffer(m)
    for _ in range(max_tries):
        if len(buf) == m:
            break
        s = rng.standard_normal(n)
        if len(buf):
            c = memory.build_compact(buf, delta)
            Bs = memory.apply_b(c, s)
        else:
            Bs = delta * s
        memory.try_add_pair(buf, s, A @ s, Bs)
    return buf, A


# dense_core ------------------------------------------------------------------

def check_dense_kernels():
    rng = np.random.default_rng(100)
    worst = dict(qr_orth=0.0, qr_rec=0.0, eig=0.0, gen=0.0)
    for _ in range(100):
        n = int(rng.integers(1, 65))
        k = int(rng.integers(1, min(n, 10) + 1))
        A = rng.standard_normal((n, k))
        Q, R = dense.qr_thin(A)
        worst["qr_orth"] = max(worst["qr_orth"], np.linalg.norm(Q.T @ Q - np.eye(k)))
        worst["qr_rec"] = max(worst["qr_rec"], np.linalg.norm(A - Q @ R) / max(1.0, np.linalg.norm(A)))
        S = rng.standard_normal((5, 5))
        S = S + S.T
        P, lam = dense.sym_eig(S)
        worst["eig"] = max(worst["eig"], np.linalg.norm(S - (P * lam) @ P.T) / max(1.0, np.linalg.norm(S)))
        C = rng.standard_normal((4, 4))
        Bspd = C @ C.T + 4 * np.eye(4)
        G = rng.standard_normal((4, 4))
        G = G + G.T
        worst["gen"] = max(worst["gen"], np.max(np.abs(dense.gen_sym_eig(G, Bspd)
                                                      - oracles.whitened_gen_eig(G, Bspd))))
    ok = (worst["qr_orth"] <= 1e-12 and worst["qr_rec"] <= 1e-12
          and worst["eig"] <= 1e-10 and worst["gen"] <= 1e-9)
    return ok, ", ".join(f"{k}={v:.2e}" for k, v in worst.items())


# lsr1_memory ----------------------------------------------------------------

def check_compact_oracle(trials=200):
    """Compact form against the recursive rank-one build."""
    rng = np.random.default_rng(1)
    worst, used = 0.0, 0
    for _ in range(trials):
        n = int(rng.integers(2, 11))
        m = int(rng.integers(1, min(5, n) + 1))
        delta = float(rng.uniform(0.2, 2.0))
        buf, _ = _sr1_buffer(n, m, rng, delta)
        if not len(buf):
            continue
        B = memory.dense_b(memory.build_compact(buf, delta))
        ref = oracles.recursive_sr1(buf.S, buf.Y, delta)
        worst = max(worst, np.linalg.norm(B - ref) / max(1.0, np.linalg.norm(ref)))
        used += 1
    return worst < 1e-9 and used == trials, f"{used} instances, worst relative error {worst:.2e}"


def check_eig_fidelity(trials=100):
    rng = np.random.default_rng(2)
    worst_lam, worst_orth = 0.0, 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 11))
        m = int(rng.integers(1, min(5, n) + 1))
        delta = float(rng.uniform(0.2, 2.0))
        buf, _ = _sr1_buffer(n, m, rng, delta)
        eig = memory.partial_eig(memory.build_compact(buf, delta))
        dense_lam = np.linalg.eigvalsh(memory.dense_b(eig))
        expected = np.sort(np.concatenate([eig.lam_hat + delta, np.full(n - eig.k, delta)]))
        worst_lam = max(worst_lam, np.max(np.abs(dense_lam - expected)))
        worst_orth = max(worst_orth, np.linalg.norm(eig.Upar.T @ eig.Upar - np.eye(eig.k)))
        # factors must reproduce the compact product
        c = memory.build_compact(buf, delta)
        v = rng.standard_normal(n)
        ref = memory.apply_b(c, v)
        if np.linalg.norm(eig.apply(v) - ref) > 1e-8 * max(1.0, np.linalg.norm(ref)):
            return False, "spectral factors disagree with the compact product"
    ok = worst_lam <= 1e-8 and worst_orth <= 1e-10
    return ok, f"eigenvalue error {worst_lam:.2e}, orthogonality {worst_orth:.2e}"


def check_sr1_recovery(trials=50):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 9))
        A = _indefinite_sym(n, rng)
        buf = memory.PairBuffer(n)
        delta = 1.0
        for _ in range(20 * n):
            if len(buf) == n:
                break
            s = rng.standard_normal(n)
            if len(buf):
                delta, _ = memory.spectral_shift(buf, scale=0.9)
                Bs = memory.apply_b(memory.build_compact(buf, delta), s)
            else:
                Bs = s
            memory.try_add_pair(buf, s, A @ s, Bs)
        if len(buf) < n:
            return False, f"only {len(buf)} of {n} pairs accepted"
        delta, _ = memory.spectral_shift(buf, scale=0.9)
        B = memory.dense_b(memory.build_compact(buf, delta))
        worst = max(worst, np.linalg.norm(B - A) / np.linalg.norm(A))
    return worst < 1e-6, f"worst ||B - A|| / ||A|| = {worst:.2e}"


# cubic_subproblem ----------------------------------------------------------

def check_subproblem_optimality(instances=100, dense_instances=50):
    """Closed form against a 1e5-point grid, and subspace against dense basis."""
    rng = np.random.default_rng(3)
    worst_gap = -np.inf
    for i in range(instances):
        k = int(rng.integers(1, 6))
        gbar = rng.standard_normal(k) * 10 ** rng.uniform(-2, 2, k)
        lam = rng.uniform(-5, 5, k)
        if i % 3 == 0:
            gbar[0] = 0.0  # degenerate component
            lam[0] = -abs(lam[0]) - 0.1
        if i % 5 == 0:
            lam[-1] = -abs(lam[-1])
        mu = float(10 ** rng.uniform(-3, 3))
        sbar = subproblem.solve_parallel(gbar, lam, mu)
        for j in range(k):
            closed = subproblem.scalar_model(gbar[j], lam[j], mu, sbar[j])
            _, grid = oracles.scalar_grid_min(gbar[j], lam[j], mu, 100_000, refine=False)
            worst_gap = max(worst_gap, closed - grid)
    worst_s, worst_v = 0.0, 0.0
    for _ in range(dense_instances):
        n = int(rng.integers(3, 11))
        k = int(rng.integers(1, min(5, n - 1) + 1))
        delta = float(rng.uniform(0.1, 3.0))
        U, _ = np.linalg.qr(rng.standard_normal((n, k)))
        lam_hat = np.sort(rng.uniform(-4, 4, k))
        eig = memory.LsrEigFactors(delta, U, lam_hat)
        g = rng.standard_normal(n)
        mu = float(10 ** rng.uniform(-2, 2))
        sol = subproblem.solve(g, eig, mu)
        B = memory.dense_b(eig)
        V, lam = oracles.aligned_eigenbasis(B, g, delta)
        s_dense = V @ subproblem.solve_dense(V.T @ g, lam, mu)
        s_oracle, v_oracle = oracles.dense_cubic_solution(g, B, delta, mu)
        worst_s = max(worst_s, np.max(np.abs(sol.step - s_dense)), np.max(np.abs(sol.step - s_oracle)))
        worst_v = max(worst_v, abs(sol.model_value - v_oracle),
                      abs(sol.model_value - oracles.direct_model(g, B, V, mu, sol.step)))
    ok = worst_gap <= 1e-10 and worst_s <= 1e-7 and worst_v <= 1e-8
    return ok, (f"closed-form minus grid <= {worst_gap:.2e}; subspace vs dense step {worst_s:.2e}, "
                f"model value {worst_v:.2e}")


def check_holder_sandwich(trials=1000):
    rng = np.random.default_rng(4)
    violations, low_margin, high_margin = 0, np.inf, np.inf
    for _ in range(trials):
        n = int(rng.integers(1, 21))
        U = ortho_group.rvs(n, random_state=rng) if n > 1 else np.array([[rng.choice([-1.0, 1.0])]])
        s = rng.standard_normal(n)
        two = np.linalg.norm(s)
        three = np.sum(np.abs(U.T @ s) ** 3) ** (1 / 3)
        lo = n ** (-1 / 6) * two
        tol = 1e-12 * two
        if three < lo - tol or three > two + tol:
            violations += 1
        low_margin = min(low_margin, (three - lo) / two)
        high_margin = min(high_margin, (two - three) / two)
    return violations == 0, (f"{violations} violations; smallest relative margins "
                             f"lower {low_margin:.2e}, upper {high_margin:.2e}")


def check_model_decrease():
    rng = np.random.default_rng(6)
    cfg = ArcsConfig()
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(3, 9))
        obj = Quadratic(_indefinite_sym(n, rng), rng.standard_normal(n))
        state = ArcsState.initial(rng.standard_normal(n), cfg)
        for _ in range(int(rng.integers(0, 6))):
            step(obj, state, cfg)
        rep = model_decrease_check(obj, state, cfg)
        worst = max(worst, abs(rep["difference"]))
    return worst < 1e-8, f"largest subspace vs direct model difference {worst:.2e}"


# arcs_solver ---------------------------------------------------------------

def _norm_bound_runs():
    """Small problems on which every iterate's dense matrix is bounded."""
    blobs = synth_blobs(40, seed=1)
    rng = np.random.default_rng(7)
    small_mlp = Mlp(MlpSpec((2, 5, 2), "tanh", seed=3), blobs.inputs, blobs.targets)
    A = _indefinite_sym(10, rng)
    return [
        ("rosenbrock2", rosenbrock(2), np.array([-1.2, 1.0]), 300),
        ("rosenbrock10", rosenbrock(10), -1.2 * np.ones(10), 300),
        ("indefinite_quadratic", Quadratic(A + 3.5 * np.eye(10), rng.standard_normal(10)), np.zeros(10), 200),
        ("logistic", logistic_regression(blobs), np.zeros(3), 200),
        ("mlp", small_mlp, small_mlp.spec.initial_params(), 300),
    ]


def check_sr1_norm_bound():
    cfg = ArcsConfig(memory=5)
    violations, checked, worst_ratio = 0, 0, 0.0

    def bound(n):
        return oracles.sr1_norm_bound(n, cfg.delta_bounds[1], cfg.memory, cfg.accept_eps, cfg.term_eps)

    for _, obj, x0, iters in _norm_bound_runs():
        state = ArcsState.initial(x0, cfg)
        for _ in range(iters):
            try:
                rec = step(obj, state, cfg)
            except Exception:  # the bound is about the matrices produced so far
                break
            nrm = np.linalg.norm(memory.dense_b(state.ensure_factors(cfg)))
            checked += 1
            worst_ratio = max(worst_ratio, nrm / bound(obj.dim))
            violations += nrm > bound(obj.dim)
            if rec.grad_norm == 0.0:
                break
    rng = np.random.default_rng(8)
    for _ in range(100):
        n = int(rng.integers(2, 11))
        delta = float(rng.uniform(0.2, 2.0))
        buf, _ = _sr1_buffer(n, min(5, n), rng, delta)
        nrm = np.linalg.norm(memory.dense_b(memory.build_compact(buf, delta)))
        checked += 1
        b = oracles.sr1_norm_bound(n, cfg.delta_bounds[1], 5, cfg.accept_eps, cfg.term_eps)
        worst_ratio = max(worst_ratio, nrm / b)
        violations += nrm > b
    return violations == 0, f"{checked} matrices, {violations} violations, max ||B||/bound {worst_ratio:.2e}"


def check_convergence():
    rng = np.random.default_rng(9)
    n = 50
    c = rng.standard_normal(n)
    quads = {
        "identity quadratic": Quadratic(np.eye(n), c),
        "quadratic cond 10": Quadratic(random_spd(n, 10.0, rng), rng.standard_normal(n)),
    }
    parts, ok = [], True
    for name, obj in quads.items():
        res = minimize(obj, np.zeros(n), ArcsConfig(memory=10, k_max=200, grad_tol=1e-5))
        gn = res.trace[-1].grad_norm if res.trace else math.inf
        ok &= gn <= 1e-5
        parts.append(f"{name}: ||g|| {gn:.1e} after {len(res.trace)} it")
    res = minimize(rosenbrock(2), [-1.2, 1.0], ArcsConfig(k_max=1000))
    fs = [r.f_value for r in res.trace]
    hit = next((i + 1 for i, f in enumerate(fs) if f < 1e-8), None)
    ok &= hit is not None
    parts.append(f"rosenbrock: f < 1e-8 at iteration {hit}")
    return ok, "; ".join(parts)


# stochastic_driver ---------------------------------------------------------

class _ConstantSum(Objective):
    """Finite sum whose every term is the constant 1."""

    def __init__(self, n_samples, dim=3):
        self.n_samples = n_samples
        self.dim = dim

    def value_and_gradient_batch(self, theta, idx):
        return 1.0, np.zeros(self.dim)

    def value_and_gradient(self, theta):
        return 1.0, np.zeros(self.dim)


class _LinearSum(Objective):
    """Mean of ``c_i . theta``; unbounded below, so progress never stalls."""

    def __init__(self, n_samples, dim=3, seed=0):
        rng = np.random.default_rng(seed)
        self.C = np.ones(dim) + 0.1 * rng.standard_normal((n_samples, dim))
        self.n_samples = n_samples
        self.dim = dim

    def value_and_gradient_batch(self, theta, idx):
        c = self.C[idx].mean(axis=0)
        return float(c @ theta), c

    def value_and_gradient(self, theta):
        return self.value_and_gradient_batch(theta, slice(None))


def check_a4_mechanism():
    N, d0 = 100, 4
    expected = math.ceil(math.log(N / d0, 2))
    parts, ok = [], True
    for name in ("arcs_lsr1", "sgd_momentum"):
        sched = BatchSchedule(initial_batch=d0, growth_factor=2.0, full_eval_period=2, seed=0)
        res = run_epochs(_ConstantSum(N), make_trainer(name), sched, 30, np.zeros(3))
        sizes = np.array(res.batch_sizes)
        events = sum(1 for _, _, grew in res.growth_checks if grew)
        grew_to = [s for s in np.unique(sizes)]
        ok &= bool(sizes[-1] == N and np.all(np.diff(sizes) >= 0) and len(grew_to) == expected + 1)
        parts.append(f"{name} constant loss: d {d0} -> {sizes[-1]} via {len(grew_to) - 1} growths "
                     f"(expected {expected}, {events} stall checks)")
        sched = BatchSchedule(initial_batch=d0, full_eval_period=2, seed=0)
        res = run_epochs(_LinearSum(N), make_trainer(name), sched, 5, np.zeros(3))
        ok &= bool(set(res.batch_sizes) == {d0})
        parts.append(f"{name} improving: sizes {sorted(set(res.batch_sizes))}")
    return ok, "; ".join(parts)


# problems ------------------------------------------------------------------

def shipped_objectives():
    """One instance of every objective class and network configuration."""
    rng = np.random.default_rng(10)
    blobs = synth_blobs(30, seed=2)
    iris = load_iris(seed=0).standardized()
    digits = load_idx(limit=40, seed=0)
    out = [
        ("quadratic", Quadratic(_indefinite_sym(6, rng), rng.standard_normal(6))),
        ("diagonal_quadratic", DiagonalQuadratic(rng.uniform(0.5, 5, 8), rng.standard_normal(8))),
        ("rosenbrock", rosenbrock(5)),
        ("logistic_regression", logistic_regression(blobs, l2=0.1)),
        ("iris_classifier", mlp(iris_spec(0), iris, "train")),
        ("digit_autoencoder", mlp(autoencoder_spec(seed=0), digits, "train")),
    ]
    for act in ("sigmoid", "tanh"):
        spec = MlpSpec((2, 6, 4, 2), act, seed=4)
        out.append((f"mlp_{act}", Mlp(spec, blobs.inputs, blobs.targets)))
    spec = MlpSpec((2, 5, 3), "tanh", "mse", "identity", seed=5)
    out.append(("mlp_mse_identity", Mlp(spec, blobs.inputs, np.tile(blobs.inputs[:, :1], (1, 3)))))
    return out


def check_gradient_conformance(points=10):
    rng = np.random.default_rng(11)
    worst = {}
    for name, obj in shipped_objectives():
        errs = []
        for _ in range(points):
            if isinstance(obj, Mlp):
                theta = obj.spec.initial_params(int(rng.integers(1 << 30))) * 10
            else:
                theta = rng.standard_normal(obj.dim)
            errs.append(gradient_error(obj, theta))
        worst[name] = max(errs)
    bad = [k for k, v in worst.items() if not v < 1e-5]
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    return not bad, (f"failing: {bad}; " if bad else "") + detail


# experiments -------------------------------------------------------------

IRIS_BATCH = 32


def iris_run(seed, epochs=50):
    """ARCs-LSR1 and Adam on the IRIS network; returns first epochs at 90%."""
    ds = load_iris(seed=seed).standardized()
    spec = iris_spec(seed)
    train, test = mlp(spec, ds, "train"), mlp(spec, ds, "test")
    theta0 = spec.initial_params()
    out = {}
    for name, opts, max_iters in (("arcs_lsr1", {"memory": 10}, 10), ("adam", {}, 1)):
        sched = BatchSchedule(initial_batch=IRIS_BATCH, max_iters_per_batch=max_iters, seed=seed)
        res = run_epochs(train, make_trainer(name, opts), sched, epochs, theta0, test)
        out[name] = next((r.epoch for r in res.trace if r.accuracy >= 0.9), None)
    return out


def check_iris(seeds=(0, 1, 2)):
    passes, parts = 0, []
    for seed in seeds:
        r = iris_run(seed)
        a, b = r["arcs_lsr1"], r["adam"]
        ok = a is not None and a <= 50 and (b is None or a <= b)
        passes += ok
        parts.append(f"seed {seed}: arcs {a}, adam {b}")
    return passes * 2 > len(seeds), f"{passes}/{len(seeds)} seeds; " + "; ".join(parts)


AE_BATCH = 256


def autoencoder_run(seed, epochs=50, limit=1000):
    ds = load_idx(limit=limit, seed=seed)
    spec = autoencoder_spec(seed=seed)
    train, test = mlp(spec, ds, "train"), mlp(spec, ds, "test")
    theta0 = spec.initial_params()
    out = {}
    for name, opts, max_iters in (("arcs_lsr1", {"memory": 10}, 10), ("sgd_momentum", {}, 1)):
        sched = BatchSchedule(initial_batch=AE_BATCH, max_iters_per_batch=max_iters, seed=seed)
        res = run_epochs(train, make_trainer(name, opts), sched, epochs, theta0, test)
        out[name] = res.trace[-1].f_train
    return out


def check_autoencoder(seeds=(0, 1, 2)):
    passes, parts = 0, []
    for seed in seeds:
        r = autoencoder_run(seed)
        ok = r["arcs_lsr1"] <= r["sgd_momentum"]
        passes += ok
        parts.append(f"seed {seed}: arcs {r['arcs_lsr1']:.4g}, sgd {r['sgd_momentum']:.4g}")
    return passes >= 2, f"{passes}/{len(seeds)} seeds; " + "; ".join(parts)


def iteration_time(n, iters=25, warmup=12, seed=12):
    """Median wall time of an ARCs-LSR1 iteration with a full memory."""
    rng = np.random.default_rng(seed)
    obj = DiagonalQuadratic(np.logspace(0, 4, n), rng.standard_normal(n))
    cfg = ArcsConfig(memory=10)
    state = ArcsState.initial(np.zeros(n), cfg)
    times = []
    for i in range(warmup + iters):
        t0 = time.perf_counter()
        step(obj, state, cfg)
        if i >= warmup:
            times.append(time.perf_counter() - t0)
    return float(np.median(times))


def check_complexity(sizes=(1_000, 10_000, 100_000)):
    t = np.array([iteration_time(n) for n in sizes])
    slope = float(np.polyfit(np.log(sizes), np.log(t), 1)[0])
    per = ", ".join(f"n={n}: {x * 1e3:.2f} ms" for n, x in zip(sizes, t))
    return slope <= 1.3, f"fitted exponent {slope:.2f} ({per})"


def check_cli_determinism():
    from . import cli

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg = tmp / "quad.toml"
        cfg.write_text(cli.EXAMPLE_CONFIG)
        outs = []
        for rep in range(2):
            out = tmp / f"out{rep}"
            code = cli.main(["run", str(cfg), "--seed", "3", "--out-dir", str(out), "--no-timing", "--quiet"])
            if code != 0:
                return False, f"run exited with {code}"
            outs.append(sorted(out.glob("*.csv")))
        a, b = outs
        if not a or [p.name for p in a] != [p.name for p in b]:
            return False, "trace files differ in name or are missing"
        same = all(x.read_bytes() == y.read_bytes() for x, y in zip(a, b))
        header = a[0].read_text().splitlines()[0]
        ok = same and header == cli.CSV_HEADER
        return ok, f"byte-identical: {same}; header: {header}"


# registry --------------------------------------------------------------------

FAST = {
    "dense kernels": check_dense_kernels,
    "compact representation oracle": check_compact_oracle,
    "eigendecomposition fidelity": check_eig_fidelity,
    "subproblem optimality": check_subproblem_optimality,
    "holder sandwich": check_holder_sandwich,
    "sr1 curvature recovery": check_sr1_recovery,
    "sr1 norm bound": check_sr1_norm_bound,
    "model decrease consistency": check_model_decrease,
    "deterministic convergence": check_convergence,
    "batch growth mechanism": check_a4_mechanism,
    "gradient conformance": check_gradient_conformance,
}

FULL = {
    **FAST,
    "iris experiment": check_iris,
    "autoencoder experiment": check_autoencoder,
    "per-iteration complexity": check_complexity,
    "cli determinism and schema": check_cli_determinism,
}


def run_checks(level="fast", names=None, report=None):
    """Run a check level; ``report(result)`` is called after each check."""
    table = {"fast": FAST, "full": FULL}[level]
    results = []
    for name, fn in table.items():
        if names is not None and name not in names:
            continue
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                passed, detail = fn()
        except (Exception, SingularMemory) as exc:  # a crash is a failure
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        res = CheckResult(name, bool(passed), detail, time.perf_counter() - t0)
        results.append(res)
        if report is not None:
            report(res)
    return results
