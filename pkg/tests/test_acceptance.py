"""Acceptance suite: nine end-to-end criteria, one PASS/FAIL line each.

Every test wraps its body in ``criterion`` which times it, enforces the
runtime budget and prints the verdict even under pytest's output capture.
"""
import contextlib
import dataclasses
import math
import time

import numpy as np
import pytest

from mcmc_cert import bounds as B
from mcmc_cert import chains
from mcmc_cert.core import LipschitzObservable, iterate_kernel, total_variation
from mcmc_cert.diagnostics import (
    SSpec,
    coarse_ricci,
    diagnose,
    eccentricity,
    eccentricity_apriori,
    sampled_curvature,
    stationary_dist,
)
from mcmc_cert.harness import exact_moment_tables, exact_moments, run_ensemble
from mcmc_cert.transport import kantorovich_dual, wasserstein1

from conftest import brute_force_w1, random_dist, random_lipschitz, random_metric


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def run(number, title, budget):
        t0 = time.perf_counter()
        info = {}
        ok = False
        try:
            yield info
            ok = True
        finally:
            dt = time.perf_counter() - t0
            if ok and dt > budget:
                ok = False
                info["runtime"] = f"{dt:.1f}s over the {budget}s budget"
            extra = ", ".join(f"{k}={v}" for k, v in info.items())
            with capsys.disabled():
                print(f"\nCRITERION {number} {'PASS' if ok else 'FAIL'}: {title} "
                      f"[{dt:.2f}s{'; ' + extra if extra else ''}]")
        if dt > budget:
            pytest.fail(f"criterion {number} took {dt:.1f}s, budget {budget}s")
    return run


def _with_S(kernel, bundle):
    if bundle.S_spec is None:
        S = SSpec.exact(bundle.ratio_table, kernel.space, bundle.pi)
        bundle = dataclasses.replace(bundle, S_spec=S)
    return bundle


def _bundle(kernel, pairs="all", n_mode="one"):
    S = chains.binomial_S(kernel) if kernel.meta.get("family") == "binomial" else None
    return _with_S(kernel, diagnose(kernel, pairs, S=S, n_mode=n_mode))


def test_criterion_1_exact_curvature(criterion):
    with criterion(1, "exact curvature on hypercube N=2..8 and binomial d=5,10,20", 30) as info:
        worst = 0.0
        for N in range(2, 9):
            kappa = coarse_ricci(chains.hypercube(N), "neighbors").kappa
            worst = max(worst, abs(kappa - 1 / N))
        for d in (5, 10, 20):
            kappa = coarse_ricci(chains.binomial_chain(d, d / 3), "neighbors").kappa
            worst = max(worst, abs(kappa - 1 / d))
        info["max_err"] = f"{worst:.1e}"
        assert worst <= 1e-12


def test_criterion_2_w1_oracles(criterion):
    with criterion(2, "W1 flow vs brute-force LP vs dual on 200 random pairs", 60) as info:
        rng = np.random.default_rng(20240501)
        worst_lp = worst_dual = 0.0
        for _ in range(200):
            n = int(rng.integers(2, 9))
            space = random_metric(rng, n)
            mu, nu = random_dist(rng, n), random_dist(rng, n)
            flow = wasserstein1(mu, nu, space)[0]
            worst_lp = max(worst_lp, abs(flow - brute_force_w1(mu, nu, space)))
            worst_dual = max(worst_dual, abs(flow - kantorovich_dual(mu, nu, space)[0]))
        info["lp_err"] = f"{worst_lp:.1e}"
        info["dual_err"] = f"{worst_dual:.1e}"
        assert worst_lp <= 1e-8 and worst_dual <= 1e-8


def test_criterion_3_eccentricity(criterion, zoo):
    with criterion(3, "hypercube eccentricity N/2 and a-priori domination", 60) as info:
        worst = 0.0
        for N in range(1, 9):
            k = chains.hypercube(N)
            worst = max(worst, np.max(np.abs(eccentricity(k, stationary_dist(k)) - N / 2)))
        assert worst <= 1e-12
        checked = 0
        for name, k in zoo.items():
            kappa = coarse_ricci(k, "all").kappa
            ecc = eccentricity(k, stationary_dist(k))
            for x in range(k.n):
                exact = ecc[x]
                for opt, kw in (("diameter", {}), ("local", {"kappa": kappa}),
                                ("anchor", {"anchor": 0, "anchor_ecc": ecc[0]})):
                    assert eccentricity_apriori(k, x, opt, **kw) >= exact - 1e-12, (name, x, opt)
                    checked += 1
        info["ecc_err"] = f"{worst:.1e}"
        info["apriori_checks"] = checked


def test_criterion_4_bounds_vs_exact_oracle(criterion):
    with criterion(4, "bias and variance certificates vs exact moments", 300) as info:
        rng = np.random.default_rng(4)
        checks = violations = 0
        for k in (chains.hypercube(4), chains.binomial_chain(10, 3.0)):
            bundle = _bundle(k, "neighbors")
            pi = bundle.pi.to_dense(k.n)
            for _ in range(20):
                f = random_lipschitz(rng, k.space, float(rng.uniform(0.1, 3.0)))
                pi_f = pi @ f.values
                for T in (10, 100, 1000):
                    for T0 in (0, 5, 20):
                        mean, var = exact_moment_tables(k, f, T, T0)
                        for x in range(k.n):
                            plan = B.RunPlan(T, T0, f.lip_norm, x)
                            bias = B.bias_bound(plan, bundle.kappa, bundle.ecc[x]).value
                            v2 = B.variance_bound_uniform(plan, bundle.kappa,
                                                          bundle.sup_ratio).value
                            v3 = B.variance_bound_S(plan, bundle.kappa, bundle.S_spec,
                                                    bundle.ecc[x]).value
                            bad = (abs(mean[x] - pi_f) > bias * (1 + 1e-12)
                                   or var[x] > v2 * (1 + 1e-12) or var[x] > v3 * (1 + 1e-12))
                            violations += bad
                            checks += 3
        info["checks"] = checks
        info["violations"] = violations
        assert violations == 0


def _tail_study(kernel, f, plan, certs_by_V2, replicas, seed):
    mean, _ = exact_moments(kernel, f, plan)
    radii = sorted({c * math.sqrt(V2) for V2 in certs_by_V2 for c in (0.5, 1.0, 1.5, 2.0)})
    ens = run_ensemble(kernel, f, plan, replicas, seed, radii=radii, center=mean, threads=4)
    rows = []
    for V2, make in certs_by_V2.items():
        for c in (0.5, 1.0, 1.5, 2.0):
            r = c * math.sqrt(V2)
            bound = make(r).value
            freq = ens.tail(r)
            se = math.sqrt(bound * (1 - bound) / replicas)
            rows.append((r, freq, bound, freq <= bound + 3 * se))
    return rows


def test_criterion_5_concentration_vs_simulation(criterion):
    with criterion(5, "tail frequencies vs concentration certificates", 600) as info:
        rows = []
        N = 4
        k = chains.hypercube(N)
        bundle = _bundle(k, "neighbors", n_mode="moment")
        plan = B.RunPlan(200, 0, 1 / N, 0)
        V2u = B.uniform_V2(plan, bundle.kappa, bundle.sup_ratio)
        V2s = B.S_V2(plan, bundle.kappa, bundle.S_spec, bundle.ecc[0])
        rows += _tail_study(k, chains.fraction_zero(N), plan, {
            V2u: lambda r: B.concentration_uniform(plan, bundle.kappa, bundle.sup_ratio,
                                                   bundle.sigma_inf, r),
            V2s: lambda r: B.concentration_S(plan, bundle.kappa, bundle.S_spec, bundle.ecc[0],
                                             bundle.sigma_inf, r),
        }, 100_000, 5)

        b = chains.binomial_chain(10, 3.0)
        bb = _bundle(b, "neighbors")
        bplan = B.RunPlan(200, 0, 1.0, 0)
        V2u = B.uniform_V2(bplan, bb.kappa, bb.sup_ratio)
        V2s = B.S_V2(bplan, bb.kappa, bb.S_spec, bb.ecc[0])
        rows += _tail_study(b, chains.identity_observable(b.space), bplan, {
            V2u: lambda r: B.concentration_uniform(bplan, bb.kappa, bb.sup_ratio, bb.sigma_inf, r),
            V2s: lambda r: B.concentration_S(bplan, bb.kappa, bb.S_spec, bb.ecc[0],
                                             bb.sigma_inf, r),
        }, 100_000, 6)
        info["points"] = len(rows)
        info["violations"] = sum(not ok for *_, ok in rows)
        assert all(ok for *_, ok in rows)

        # the certificate reproduces 2 exp(-T r^2 / (8 N^2 ||f||^2)) for hypercube inputs
        assert bundle.sup_ratio == pytest.approx(N / 2, rel=1e-12)
        worst = 0.0
        for T in (50, 200, 1000):
            for lip in (0.25, 1.0):
                p = B.RunPlan(T, 0, lip, 0)
                for r_abs in np.linspace(0.05, 2.0, 12):
                    cert = B.concentration_uniform(p, 1 / N, N / 2, 1.0, r_abs / lip)
                    if cert.regime != "gaussian":
                        continue
                    sym = math.log(2) - T * r_abs ** 2 / (8 * N ** 2 * lip ** 2)
                    worst = max(worst, abs(math.log(cert.raw_value) - sym) / abs(sym))
        info["symbolic_err"] = f"{worst:.1e}"
        assert worst <= 1e-12


def test_criterion_6_lemma_suites(criterion):
    with criterion(6, "pointwise variance and Laplace lemmas", 300) as info:
        rng = np.random.default_rng(6)
        checks = violations = 0
        for k in (chains.hypercube(3), chains.binomial_chain(8, 3.0),
                  chains.ising_heat_bath(chains.cycle_graph(4), 0.2)):
            bundle = _bundle(k)
            P = k.matrix.toarray()
            powers = [np.linalg.matrix_power(P, n) for n in range(7)]
            T = 40
            plan = B.RunPlan(T, 0, 1.0, 0)
            lam_max = B.laplace_lambda_max(bundle.kappa, T, bundle.S_spec.C, bundle.sigma_inf)
            grid = lam_max * np.arange(1, 11) / 11
            for _ in range(100):
                g = random_lipschitz(rng, k.space).values
                f = random_lipschitz(rng, k.space, 2 / (bundle.kappa * T)).values
                for N in range(1, 7):
                    PN = powers[N]
                    var = PN @ g ** 2 - (PN @ g) ** 2
                    rhs = B.lemma_variance_rhs(k, 1.0, N, bundle)
                    violations += int(np.any(var > rhs + 1e-10))
                    checks += 1
                    for lam in grid:
                        lhs = PN @ np.exp(lam * f)
                        rhs = B.lemma_laplace_rhs(k, f, lam, N, bundle.S_spec, plan,
                                                  bundle.kappa, bundle.sigma_inf)
                        violations += int(np.any(lhs > rhs * (1 + 1e-8)))
                        checks += 1
        info["checks"] = checks
        info["violations"] = violations
        assert violations == 0


def test_criterion_7_ising(criterion):
    with criterion(7, "Ising heat bath: free case, curvature bound, Gibbs law", 120) as info:
        free = chains.ising_heat_bath(chains.cycle_graph(4), 0.0)
        assert np.array_equal(free.matrix.toarray(), chains.hypercube(4).matrix.toarray())
        worst_tv = 0.0
        for beta in (0.1, 0.2):
            k = chains.ising_heat_bath(chains.cycle_graph(4), beta)
            kappa = coarse_ricci(k, "all").kappa
            lower = (1 - 2 * math.tanh(beta)) / 4
            info[f"kappa(beta={beta})"] = f"{kappa:.4f}>={lower:.4f}"
            assert kappa >= lower - 1e-12
            gibbs = chains.gibbs_distribution(chains.cycle_graph(4), 4, beta, 0.0)
            worst_tv = max(worst_tv, total_variation(iterate_kernel(k, gibbs, 1), gibbs, k.n))
        info["tv"] = f"{worst_tv:.1e}"
        assert worst_tv <= 1e-10


def test_criterion_8_regime_continuity(criterion):
    with criterion(8, "Gaussian and exponential branches meet at r_max", 60) as info:
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(1000):
            T = int(rng.integers(1, 5000))
            plan = B.RunPlan(T, int(rng.integers(0, T + 1)), 1.0, 0)
            kappa = float(rng.uniform(1e-3, 1.0))
            sigma = float(10 ** rng.uniform(-1, 1))
            sup = float(10 ** rng.uniform(-2, 2))
            C = float(rng.choice([0.0, 10 ** rng.uniform(-2, 1)]))
            E = float(10 ** rng.uniform(-1, 2))
            for cert_at in (
                lambda r: B.concentration_uniform(plan, kappa, sup, sigma, r),
                lambda r: B.concentration_S(plan, kappa, SSpec(C, sup), E, sigma, r),
            ):
                probe = cert_at(1.0)
                r_max, V2 = probe.r_max, probe.inputs["V2"]
                at = cert_at(r_max)
                assert at.regime == "exponential"
                below = cert_at(r_max * (1 - 2 ** -52))
                assert below.regime == "gaussian"
                gauss = 2 * math.exp(-r_max ** 2 / (16 * V2))
                if gauss > 1e-290:
                    worst = max(worst, abs(at.raw_value - gauss) / gauss,
                                abs(below.raw_value - at.raw_value) / gauss)
        info["max_rel_gap"] = f"{worst:.1e}"
        assert worst <= 1e-12


def test_criterion_9_ou_euler(criterion):
    with criterion(9, "Ornstein-Uhlenbeck Euler scheme study", 600) as info:
        rng = np.random.default_rng(9)
        estimates = {}
        for dt in (1e-1, 1e-2, 1e-3):
            k = chains.ornstein_uhlenbeck(2, dt)
            pairs = [(rng.normal(size=2) * 3, rng.normal(size=2) * 3) for _ in range(50)]
            kappa, ratios = sampled_curvature(k, pairs, rng=int(rng.integers(1 << 31)))
            assert np.max(np.abs(ratios - (1 - dt))) <= 1e-12
            estimates[dt] = kappa
        rel = abs(estimates[1e-3] - 1e-3) / 1e-3
        slope = np.polyfit(np.log(list(estimates)), np.log(list(estimates.values())), 1)[0]
        info["rel_err(dt=1e-3)"] = f"{rel:.1e}"
        info["log_slope"] = f"{slope:.4f}"
        assert rel < 0.05

        # tails of the time average against the diffusion tail bound with C = 0
        dt, T = 0.01, 1000
        k = chains.ornstein_uhlenbeck(1, dt)
        f = LipschitzObservable(1.0, func=lambda X: X[:, 0])
        plan = B.RunPlan(T, 0, 1.0, [0.0])
        mean_S = float(k.meta["S"](np.zeros((1, 1)))[0])
        t = T * dt
        V2 = mean_S / t
        radii = [c * math.sqrt(V2) for c in (0.5, 1.0, 1.5, 2.0, 3.0)]
        ens = run_ensemble(k, f, plan, 20_000, 9, radii=radii, center=0.0, threads=4)
        worst = -math.inf
        for r in radii:
            cert = chains.diffusion_tail_bound(r, 1.0, t, mean_S, 0.0, 0.0, plan)
            assert cert.r_max == math.inf and cert.regime == "gaussian"
            se = math.sqrt(cert.value * (1 - cert.value) / ens.replicas)
            worst = max(worst, ens.tail(r) - cert.value - 3 * se)
        info["max_excess"] = f"{worst:.3f}"
        assert worst <= 0
