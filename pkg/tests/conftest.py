import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from mcmc_cert import chains
from mcmc_cert.core import FiniteDistribution, FiniteMetricSpace, LipschitzObservable, lipschitz_constant


def random_metric(rng, n):
    """Shortest-path metric of a random weighted complete graph."""
    w = rng.uniform(0.1, 3.0, size=(n, n))
    d = np.minimum(w, w.T)
    np.fill_diagonal(d, 0.0)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return FiniteMetricSpace.from_matrix(d)


def random_dist(rng, n, k=None):
    k = k or rng.integers(1, n + 1)
    support = np.sort(rng.choice(n, size=k, replace=False))
    w = rng.dirichlet(np.ones(k))
    w[-1] = 1.0 - w[:-1].sum()
    if w[-1] < 0:
        w = np.full(k, 1.0 / k)
    return FiniteDistribution(support, w)


def brute_force_w1(mu, nu, space):
    """LP over the full coupling polytope on the whole space."""
    n = space.n
    a, b = mu.to_dense(n), nu.to_dense(n)
    d = space.matrix
    A_eq = np.zeros((2 * n, n * n))
    for i in range(n):
        A_eq[i, i * n:(i + 1) * n] = 1.0
        A_eq[n + i, i::n] = 1.0
    res = linprog(d.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None),
                  method="highs")
    assert res.status == 0
    return res.fun


def random_lipschitz(rng, space, scale=1.0):
    """Random function normalized to Lipschitz seminorm ``scale``."""
    v = rng.normal(size=space.n)
    lip = lipschitz_constant(v, space)
    if lip == 0:
        v = np.zeros(space.n)
        return LipschitzObservable(scale, values=v)
    return LipschitzObservable(scale, values=v * scale / lip)


def enumerate_hypercube(N):
    """Dense transition matrix of the lazy bit-resampling walk, by enumeration
    over bit tuples (bit i of the code is tuple entry i)."""
    states = list(itertools.product((0, 1), repeat=N))
    code = {s: sum(b << i for i, b in enumerate(s)) for s in states}
    P = np.zeros((2 ** N, 2 ** N))
    for s in states:
        for i in range(N):
            for b in (0, 1):
                t = list(s)
                t[i] = b
                P[code[s], code[tuple(t)]] += 1 / (2 * N)
    return P


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def zoo():
    """Exact-mode chains used across test modules."""
    return {
        "hypercube3": chains.hypercube(3),
        "hypercube4": chains.hypercube(4),
        "binomial8": chains.binomial_chain(8, 3.0),
        "binomial10": chains.binomial_chain(10, 3.0),
        "ising4": chains.ising_heat_bath(chains.cycle_graph(4), 0.2),
        "uniform5": chains.uniform_reset(5),
    }
