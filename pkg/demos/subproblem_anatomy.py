"""Look inside one cubic subproblem solve.

Builds a small limited-memory SR1 matrix with one negative eigenvalue,
solves the cubic model in closed form on the stored subspace, and checks
the answer against a dense eigendecomposition of the same matrix.
"""
import numpy as np

from arclsr1 import memory, oracles, subproblem

rng = np.random.default_rng(3)
n = 6
A = np.diag([-1.0, 0.5, 1.0, 2.0, 3.0, 4.0])
buf = memory.PairBuffer(capacity=3)
for _ in range(3):
    s = rng.standard_normal(n)
    eig, _ = memory.build_factors(buf, n, scale=0.9)
    memory.try_add_pair(buf, s, A @ s, eig.apply(s))

eig, _ = memory.build_factors(buf, n, scale=0.9)
print(f"delta = {eig.delta:.4f} (0.9 times the smallest eigenvalue of the pencil S^T Y, S^T S)")
print("stored pairs:", len(buf))
print("eigenvalues on the stored subspace:", np.round(eig.eigenvalues(), 4))
print(f"eigenvalue on the complement: {eig.delta:.4f} with multiplicity {n - eig.k}")

g = rng.standard_normal(n)
sol = subproblem.solve(g, eig, mu=0.5)
print(f"\nclosed-form step norm {np.linalg.norm(sol.step):.6f}")
print(f"model value {sol.model_value:.10f}  (predicted reduction {sol.pred_reduction:.6f})")
print(f"perpendicular scale alpha = {sol.alpha_star:.6f}, ||g_perp|| = {sol.g_perp_norm:.6f}")

B = memory.dense_b(eig)
s_ref, v_ref = oracles.dense_cubic_solution(g, B, eig.delta, 0.5)
print(f"\ndense grid oracle: model value {v_ref:.10f}, step difference {np.abs(sol.step - s_ref).max():.2e}")
