"""Euler scheme for dX = -X dt + sqrt(2) dW: sampled curvature, and tail
frequencies of the time average against the diffusion concentration bound."""
import math

import numpy as np

from mcmc_cert import bounds as B
from mcmc_cert import chains
from mcmc_cert.core import LipschitzObservable
from mcmc_cert.diagnostics import sampled_curvature
from mcmc_cert.harness import run_ensemble

rng = np.random.default_rng(1)
for dt in (1e-1, 1e-2, 1e-3):
    k = chains.ornstein_uhlenbeck(2, dt)
    pairs = [(rng.normal(size=2), rng.normal(size=2)) for _ in range(20)]
    kappa, _ = sampled_curvature(k, pairs, rng=0)
    print(f"dt={dt:g}  kappa={kappa:.6g}  kappa/dt={kappa / dt:.6f}")

dt, T = 0.01, 2000
k = chains.ornstein_uhlenbeck(1, dt)
f = LipschitzObservable(1.0, func=lambda X: X[:, 0])
plan = B.RunPlan(T, 0, 1.0, [0.0])
t = T * dt
mean_S = float(k.meta["S"](np.zeros((1, 1)))[0])
V = math.sqrt(mean_S / t)
radii = [c * V for c in (0.5, 1, 2, 3, 4)]
ens = run_ensemble(k, f, plan, 10_000, seed=3, radii=radii, center=0.0, threads=4)
print(f"\nt={t}  V={V:.4f}  empirical sd={math.sqrt(ens.empirical_variance):.4f}")
for r in radii:
    bound = chains.diffusion_tail_bound(r, 1.0, t, mean_S, 0.0, 0.0).value
    print(f"  r={r:.3f}  freq={ens.tail(r):.4f}  bound={bound:.4f}")
