import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcmc_cert import chains
from mcmc_cert.core import (
    EuclideanSpace,
    FiniteDistribution,
    FiniteMetricSpace,
    LipschitzObservable,
    MarkovKernel,
    averaged_observable,
    discrete,
    iterate_kernel,
    lipschitz_constant,
    total_variation,
)
from mcmc_cert.errors import EmptyDistribution, ExactModeRequired, McmcCertError

from conftest import enumerate_hypercube, random_lipschitz, random_metric


def test_metric_axioms_on_chain_spaces(zoo):
    for kernel in zoo.values():
        assert kernel.space.check_metric(rng=0, n_triples=500)


def test_neighbor_pairs_generate_metric(zoo):
    for name in ("hypercube4", "binomial10", "ising4"):
        assert zoo[name].space.check_neighbor_generation()


def test_neighbor_generation_detects_missing_edges():
    d = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], float)
    space = FiniteMetricSpace.from_matrix(d, neighbor_pairs=[[0, 1], [1, 2]])
    assert not space.check_neighbor_generation()


def test_check_metric_rejects_triangle_violation():
    d = np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], float)
    with pytest.raises(McmcCertError):
        FiniteMetricSpace.from_matrix(d).check_metric(rng=1, n_triples=2000)


def test_distribution_validation():
    with pytest.raises(McmcCertError):
        FiniteDistribution([0, 1], [0.5, 0.6])
    with pytest.raises(McmcCertError):
        FiniteDistribution([0, 0], [0.5, 0.5])
    with pytest.raises(McmcCertError):
        FiniteDistribution([0, 1], [1.5, -0.5])
    with pytest.raises(EmptyDistribution):
        FiniteDistribution([], [])


def test_kernel_rejects_bad_rows():
    space = FiniteMetricSpace.from_matrix([[0, 1], [1, 0]])
    with pytest.raises(McmcCertError):
        MarkovKernel.from_dense([[0.5, 0.4], [0, 1]], space)
    with pytest.raises(McmcCertError):
        MarkovKernel.from_dense([[1.5, -0.5], [0, 1]], space)


def test_iterate_identity_case(zoo, rng):
    for kernel in zoo.values():
        mu = FiniteDistribution.from_dense(rng.dirichlet(np.ones(kernel.n)))
        out = iterate_kernel(kernel, mu, 0)
        assert np.array_equal(out.to_dense(kernel.n), mu.to_dense(kernel.n))


def test_iterate_two_bit_cube_one_step():
    # by enumeration: stay with prob 1/2, each of the two flips with prob 1/4
    P = enumerate_hypercube(2)
    assert P[0].tolist() == [0.5, 0.25, 0.25, 0.0]
    out = iterate_kernel(chains.hypercube(2), FiniteDistribution.delta(0), 1)
    assert np.allclose(out.to_dense(4), [0.5, 0.25, 0.25, 0.0], atol=1e-15)


def test_iterate_uniform_reset_one_step():
    k = chains.uniform_reset(6)
    out = iterate_kernel(k, FiniteDistribution.delta(3), 1)
    assert np.allclose(out.to_dense(6), np.full(6, 1 / 6), atol=1e-15)


def test_iterate_requires_exact_mode():
    k = chains.ornstein_uhlenbeck(1, 0.1)
    with pytest.raises(ExactModeRequired):
        k.require_exact()
    with pytest.raises(ExactModeRequired):
        averaged_observable(k, np.zeros(1), 1)


@settings(max_examples=30, deadline=None)
@given(a=st.integers(0, 12), b=st.integers(0, 12), seed=st.integers(0, 2 ** 32 - 1))
def test_semigroup_bit_identical(a, b, seed):
    rng = np.random.default_rng(seed)
    k = chains.binomial_chain(6, 2.5)
    mu = FiniteDistribution.from_dense(rng.dirichlet(np.ones(7)))
    direct = iterate_kernel(k, mu, a + b).to_dense(7)
    split = iterate_kernel(k, iterate_kernel(k, mu, a), b).to_dense(7)
    assert np.array_equal(direct, split)
    assert abs(math.fsum(direct) - 1) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 15), seed=st.integers(0, 2 ** 32 - 1))
def test_duality_of_averaging_and_iteration(n, seed):
    rng = np.random.default_rng(seed)
    k = chains.hypercube(3)
    mu = FiniteDistribution.from_dense(rng.dirichlet(np.ones(8)))
    f = rng.normal(size=8)
    lhs = mu.expect(averaged_observable(k, f, n))
    rhs = iterate_kernel(k, mu, n).expect(f)
    assert abs(lhs - rhs) <= 1e-10


def test_averaged_observable_cases():
    k = chains.hypercube(3)
    f = chains.fraction_zero(3)
    assert np.array_equal(averaged_observable(k, f, 0), f.values)
    brute = enumerate_hypercube(3) @ f.values
    assert np.allclose(averaged_observable(k, f, 1), brute, atol=1e-15)
    u = chains.uniform_reset(5)
    g = np.arange(5.0) ** 2
    assert np.allclose(averaged_observable(u, g, 1), g.mean(), atol=1e-15)


def test_averaging_contracts_lipschitz_norm(zoo, rng):
    kappas = {"hypercube4": 0.25, "binomial10": 0.1}
    for name, kappa in kappas.items():
        k = zoo[name]
        for _ in range(5):
            f = random_lipschitz(rng, k.space)
            for n in (1, 3, 7):
                lip = lipschitz_constant(averaged_observable(k, f, n), k.space)
                assert lip <= (1 - kappa) ** n + 1e-10


def test_lipschitz_observable_verification(rng):
    space = random_metric(rng, 6)
    v = rng.normal(size=6)
    lip = lipschitz_constant(v, space)
    LipschitzObservable(lip, values=v).verify(space)
    with pytest.raises(McmcCertError):
        LipschitzObservable(0.9 * lip, values=v).verify(space)
    obs = LipschitzObservable.from_table(v, space)
    assert obs.lip_norm == pytest.approx(lip)


def test_lipschitz_neighbor_scan_matches_all_pairs(rng):
    space = chains.hypercube(4).space
    v = rng.normal(size=16)
    assert lipschitz_constant(v, space, "neighbors") == pytest.approx(
        lipschitz_constant(v, space), rel=1e-12)


def test_implicit_observable_sampled_check():
    space = EuclideanSpace(2)
    LipschitzObservable(1.0, func=lambda X: X[:, 0]).verify(space, rng=0)
    with pytest.raises(McmcCertError):
        LipschitzObservable(0.5, func=lambda X: X[:, 0]).verify(space, rng=0)


def test_sampler_matches_exact_law():
    """Empirical one-step law vs at(x) in total variation."""
    k = chains.binomial_chain(10, 3.0)
    rng = np.random.default_rng(7)
    n, delta = 200_000, 1e-3
    for x in (0, 4, 10):
        out = k.step(np.full(n, x), rng)
        emp = FiniteDistribution.from_dense(np.bincount(out, minlength=11) / n)
        tv = total_variation(emp, k.at(x), 11)
        assert tv <= 3 * math.sqrt(math.log(2 / delta) / (2 * n))


def test_coupled_step_marginals():
    k = chains.hypercube(3)
    rng = np.random.default_rng(3)
    n = 100_000
    x, y = k.coupled_step(np.zeros(n, np.int64), np.full(n, 7), rng)
    for s, start in ((x, 0), (y, 7)):
        emp = FiniteDistribution.from_dense(np.bincount(s, minlength=8) / n)
        assert total_variation(emp, k.at(start), 8) < 0.01


def test_discrete_metric_total_variation(rng):
    pts = np.arange(5)[:, None]
    space = FiniteMetricSpace(pts, discrete)
    assert np.array_equal(space.matrix, 1 - np.eye(5))
