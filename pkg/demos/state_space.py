"""Nonlinear autoregression X' = r tanh(X) + W: contraction spot check and
variance certificate against simulation."""
import numpy as np

from mcmc_cert import bounds as B
from mcmc_cert import chains
from mcmc_cert.core import LipschitzObservable
from mcmc_cert.harness import run_ensemble

r, s = 0.6, 0.5


def F(X, W):
    return r * np.tanh(X) + W


def noise(rng, n):
    return s * rng.standard_normal((n, 1))


k = chains.state_space_model(F, noise, r_decl=r, L_decl=1.0, dim=1)
f = LipschitzObservable(1.0, func=lambda X: X[:, 0])
# S is the variance of one noise step divided by 1 - r
mean_S = s ** 2 / (1 - r)
for T in (50, 200, 800):
    plan = B.RunPlan(T, 0, 1.0, [0.0])
    bound = chains.state_space_variance_bound(plan, r, 0.0, mean_S, 0.0).value
    ens = run_ensemble(k, f, plan, 10_000, seed=T, threads=4)
    print(f"T={T:>4}  variance={ens.empirical_variance:.5f}  bound={bound:.5f}")
