"""Lazy walk on the discrete cube {0,1}^N: curvature, eccentricity and the
certified confidence radius for the fraction of zero bits, checked against
an ensemble of independent runs."""
import math

import numpy as np

from mcmc_cert import bounds as B
from mcmc_cert import chains
from mcmc_cert.diagnostics import diagnose
from mcmc_cert.harness import exact_moments, run_ensemble

N = 6
kernel = chains.hypercube(N)
bundle = diagnose(kernel, "neighbors", n_mode="moment")
print(f"N={N}  kappa={bundle.kappa:.6f}  E(x)={bundle.ecc[0]:.3f}  "
      f"sup sigma^2/(n kappa)={bundle.sup_ratio:.3f}")

f = chains.fraction_zero(N)
print(f"\n{'T':>6} {'T0':>4} {'radius(95%)':>12} {'exact sd':>10} {'empirical q95':>14}")
for T in (100, 400, 1600):
    T0 = int(round(math.log(N) * N))
    plan = B.RunPlan(T, T0, f.lip_norm, 0)
    radius = B.confidence_radius(plan, bundle, alpha=0.05).value
    mean, var = exact_moments(kernel, f, plan)
    ens = run_ensemble(kernel, f, plan, 20_000, seed=T, threads=4)
    q95 = np.quantile(np.abs(ens.estimates - 0.5), 0.95)
    print(f"{T:>6} {T0:>4} {radius:>12.4f} {math.sqrt(var):>10.4f} {q95:>14.4f}")
