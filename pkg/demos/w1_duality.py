"""Exact Wasserstein-1 between random distributions: primal transport cost
next to the Kantorovich dual value and the optimal potential."""
import numpy as np

from mcmc_cert.core import FiniteDistribution, FiniteMetricSpace
from mcmc_cert.transport import kantorovich_dual, wasserstein1

rng = np.random.default_rng(0)
pts = rng.uniform(size=(7, 2))
space = FiniteMetricSpace.from_matrix(np.linalg.norm(pts[:, None] - pts[None], axis=-1))
mu = FiniteDistribution.from_dense(rng.dirichlet(np.ones(7)))
nu = FiniteDistribution.from_dense(rng.dirichlet(np.ones(7)))

value, plan = wasserstein1(mu, nu, space)
dual, pot = kantorovich_dual(mu, nu, space)
print(f"primal={value:.15f}\ndual  ={dual:.15f}")
print("plan (source, target, mass):")
for s, t, m in plan.pairs:
    print(f"  {s} -> {t}  {m:.6f}")
print("potential:", np.round(pot.values, 6))
