"""Heat-bath dynamics for the Ising model on a cycle: exact coarse Ricci
curvature as the inverse temperature grows, next to the valency lower bound."""
import math

from mcmc_cert import chains
from mcmc_cert.diagnostics import coarse_ricci

n = 6
edges = chains.cycle_graph(n)
print(f"{'beta':>6} {'kappa':>10} {'lower':>10}")
for beta in (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6):
    kappa = coarse_ricci(chains.ising_heat_bath(edges, beta), "neighbors").kappa
    lower = (1 - 2 * math.tanh(beta)) / n
    print(f"{beta:>6.2f} {kappa:>10.5f} {lower:>10.5f}")
# past tanh(beta) = 1/2 the lower bound is no longer positive
