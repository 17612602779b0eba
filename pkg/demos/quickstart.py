"""Minimize Rosenbrock and a convex quadratic with ARCs-LSR1, then compare L-BFGS.

Run with ``python3 demos/quickstart.py``.
"""
import numpy as np

from arclsr1 import ArcsConfig, minimize
from arclsr1.baselines import BaselineConfig, lbfgs_minimize
from arclsr1.problems import Quadratic, random_spd, rosenbrock


def report(name, trace, theta):
    last = trace[-1]
    print(f"{name:<28} iterations {len(trace):4d}  f {last.f_value:.3e}  ||g|| {last.grad_norm:.3e}"
          f"  theta[:2] {np.round(theta[:2], 6)}")


obj = rosenbrock(2)
res = minimize(obj, [-1.2, 1.0], ArcsConfig(memory=10, k_max=1000, grad_tol=1e-8))
report("ARCs-LSR1 on Rosenbrock", res.trace, res.theta)
accepted = sum(r.accepted for r in res.trace)
print(f"  {accepted} of {len(res.trace)} steps accepted, final mu {res.trace[-1].mu:.3g}")

base = lbfgs_minimize(obj, [-1.2, 1.0], BaselineConfig("lbfgs", max_iter=1000))
report("L-BFGS on Rosenbrock", base.trace, base.theta)

rng = np.random.default_rng(0)
quad = Quadratic(random_spd(50, 10.0, rng), rng.standard_normal(50))
res = minimize(quad, np.zeros(50), ArcsConfig(memory=10, k_max=200, grad_tol=1e-6))
report("ARCs-LSR1 on quadratic n=50", res.trace, res.theta)
print(f"  distance to the exact minimizer {np.linalg.norm(res.theta - quad.minimizer()):.2e}")
