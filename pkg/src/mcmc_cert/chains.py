"""Example chains with their analytic diagnostics attached in ``kernel.meta``.

Finite families (hypercube, Ising heat bath, binomial, discretized
M/M/infinity, uniform reset) are exact-mode kernels; the Euler scheme and
the nonlinear state-space model are sampler-mode kernels on R^dim.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import expit, logsumexp
from scipy.stats import binom

from . import bounds
from .core import (
    EuclideanSpace,
    FiniteDistribution,
    FiniteMetricSpace,
    LipschitzObservable,
    MarkovKernel,
    hamming_codes,
    manhattan,
)
from .diagnostics import SSpec
from .errors import ContractionViolated, InvalidRate, McmcCertError, StabilityViolated

EXACT_BITS_CAP = 16


# ---------------------------------------------------------------------------
# binary product spaces
# ---------------------------------------------------------------------------

def _bits(n_sites):
    codes = np.arange(2 ** n_sites, dtype=np.int64)
    return codes, (codes[:, None] >> np.arange(n_sites)) & 1


def _cube_space(n_sites, with_neighbors=True, name=""):
    codes = np.arange(2 ** n_sites, dtype=np.int64)
    pairs = None
    if with_neighbors:
        a = np.concatenate([codes[(codes >> i) & 1 == 0] for i in range(n_sites)])
        i = np.concatenate([np.full(2 ** (n_sites - 1), i) for i in range(n_sites)])
        pairs = np.stack([a, a | (1 << i)], axis=1)
    return FiniteMetricSpace(codes[:, None], hamming_codes, pairs, name=name)


def single_site_matrix(n_sites, up_prob):
    """Pick a site uniformly, then set it to 1 with probability
    ``up_prob(bits, site)`` (a vector over all configurations)."""
    codes, bits = _bits(n_sites)
    rows, cols, vals = [], [], []
    for i in range(n_sites):
        p = np.asarray(up_prob(bits, i), dtype=float)
        rows += [codes, codes]
        cols += [codes | (1 << i), codes & ~np.int64(1 << i)]
        vals += [p / n_sites, (1 - p) / n_sites]
    size = 2 ** n_sites
    m = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(size, size))
    return m.tocsr()


def hypercube(N, exact=None):
    """Lazy single-bit resampling walk on {0,1}^N with the Hamming metric.

    P_x(x) = 1/2 and each single-bit flip has probability 1/(2N).  States are
    integer codes whose binary digits are the bits.
    """
    if not 1 <= N <= 20:
        raise McmcCertError("hypercube needs 1 <= N <= 20")
    exact = N <= EXACT_BITS_CAP if exact is None else exact
    space = _cube_space(N, with_neighbors=exact, name=f"hypercube{N}")
    meta = {
        "family": "hypercube", "N": N,
        "kappa": 1.0 / N, "ecc": N / 2.0, "sigma_inf": 1.0,
        "sigma2": 0.75 - 0.5 / N, "rate_bound": 0.5,
    }
    if exact:
        matrix = single_site_matrix(N, lambda bits, i: np.full(len(bits), 0.5))
        return MarkovKernel(space, matrix, label=f"hypercube(N={N})", meta=meta)

    def sampler(states, rng):
        site = rng.integers(0, N, size=len(states))
        bit = rng.integers(0, 2, size=len(states))
        return (states & ~(np.int64(1) << site)) | (bit << site)

    return MarkovKernel(space, sampler=sampler, label=f"hypercube(N={N})", meta=meta)


def fraction_zero(N):
    """Proportion of 0 bits, 1/N-Lipschitz for the Hamming metric."""
    codes = np.arange(2 ** N, dtype=np.int64)
    values = (N - np.bitwise_count(codes.astype(np.uint64)).astype(float)) / N
    return LipschitzObservable(1.0 / N, values=values, name="fraction_zero")


def magnetization(n_vertices):
    """Mean spin, 2/|G|-Lipschitz for d(s, s') = number of differing sites."""
    codes = np.arange(2 ** n_vertices, dtype=np.int64)
    ones = np.bitwise_count(codes.astype(np.uint64)).astype(float)
    return LipschitzObservable(2.0 / n_vertices, values=(2 * ones - n_vertices) / n_vertices,
                               name="magnetization")


def _vertex_count(edges, n_vertices):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    n = int(edges.max()) + 1 if n_vertices is None else int(n_vertices)
    return edges, n


def ising_energy(edges, n_vertices, h=0.0):
    """U(s) = -sum_{edges} s(x)s(y) - h sum_x s(x) on all 2^|G| states."""
    edges, n = _vertex_count(edges, n_vertices)
    _, bits = _bits(n)
    spins = 2 * bits - 1
    return -(spins[:, edges[:, 0]] * spins[:, edges[:, 1]]).sum(axis=1) - h * spins.sum(axis=1)


def gibbs_distribution(edges, n_vertices, beta, h=0.0):
    logw = -beta * ising_energy(edges, n_vertices, h)
    return FiniteDistribution.from_dense(np.exp(logw - logsumexp(logw)))


def ising_heat_bath(edges, beta, h=0.0, n_vertices=None):
    """Glauber (heat bath) dynamics for the Ising model on a graph.

    A uniform vertex is resampled from its conditional law, +1 with
    probability expit(2 beta (m + h)) where m is the sum of neighbor spins.
    Spin +1 is bit 1, so at beta = 0 the kernel is the hypercube walk.
    """
    edges, n = _vertex_count(edges, n_vertices)
    if n > EXACT_BITS_CAP:
        raise McmcCertError(f"exact Ising kernel capped at {EXACT_BITS_CAP} vertices")
    if beta < 0:
        raise McmcCertError("beta must be nonnegative")
    adj = np.zeros((n, n))
    adj[edges[:, 0], edges[:, 1]] = 1
    adj[edges[:, 1], edges[:, 0]] = 1
    v_max = int(adj.sum(axis=0).max()) if len(edges) else 0

    def up_prob(bits, i):
        field_i = (2 * bits - 1) @ adj[:, i]
        return expit(2 * beta * (field_i + h))

    space = _cube_space(n, name=f"ising{n}")
    gamma = 1 - v_max * math.tanh(beta)
    meta = {
        "family": "ising", "n_vertices": n, "beta": beta, "h": h, "v_max": v_max,
        "edges": edges.tolist(), "kappa_lower": gamma / n, "sigma_inf": 1.0,
    }
    return MarkovKernel(space, single_site_matrix(n, up_prob),
                        label=f"ising(|G|={n}, beta={beta}, h={h})", meta=meta)


def cycle_graph(n):
    return [(i, (i + 1) % n) for i in range(n)]


# ---------------------------------------------------------------------------
# birth-death chains
# ---------------------------------------------------------------------------

def _line_space(size, name=""):
    pts = np.arange(size)
    return FiniteMetricSpace(pts[:, None], manhattan, np.stack([pts[:-1], pts[1:]], axis=1),
                             name=name)


def binomial_transitions(d, lam):
    """(up, down, stay) probability vectors of the binomial chain on {0..d}."""
    x = np.arange(d + 1, dtype=float)
    up = lam / d * (1 - x / d)
    down = (1 - lam / d) * x / d
    stay = lam * x / d ** 2 + (1 - lam / d) * (1 - x / d)
    return up, down, stay


def _tridiagonal(up, down, stay):
    size = len(stay)
    return sparse.diags([down[1:], stay, up[:-1]], [-1, 0, 1], shape=(size, size)).tocsr()


def binomial_chain(d, lam):
    """Binomial chain on {0, ..., d}; invariant law Binomial(d, lam/d)."""
    if int(d) != d or d < 1:
        raise McmcCertError("d must be a positive integer")
    if not 0 < lam < d:
        raise InvalidRate(f"need 0 < lambda < d, got lambda={lam}, d={d}")
    d = int(d)
    up, down, stay = binomial_transitions(d, lam)
    x = np.arange(d + 1, dtype=float)
    meta = {
        "family": "binomial", "d": d, "lam": lam, "kappa": 1.0 / d, "sigma_inf": 1.0,
        "sigma2_bound": (lam + x) / d, "S_values": lam + x, "S_C": 1.0, "S_mean": 2.0 * lam,
        "pi": binom.pmf(np.arange(d + 1), d, lam / d),
    }
    return MarkovKernel(_line_space(d + 1, f"line{d + 1}"), _tridiagonal(up, down, stay),
                        label=f"binomial(d={d}, lambda={lam})", meta=meta)


def binomial_S(kernel):
    """S(x) = lambda + x, 1-Lipschitz, E_pi S = 2 lambda (binomial chain)."""
    m = kernel.meta
    return SSpec(m["S_C"], m["S_mean"], values=np.asarray(m["S_values"]), mean_source="exact")


def uniform_reset(m, space=None):
    """Every point jumps to the uniform law: kappa = 1, plain Monte Carlo."""
    space = space or _line_space(m, f"line{m}")
    P = np.full((space.n, space.n), 1.0 / space.n)
    return MarkovKernel.from_dense(P, space, label=f"uniform_reset(m={space.n})",
                                   meta={"family": "uniform_reset", "kappa": 1.0})


def identity_observable(space):
    """f(x) = x on an integer line space (1-Lipschitz)."""
    return LipschitzObservable(1.0, values=space.points[:, 0].astype(float), name="identity")


@dataclass(frozen=True, eq=False)
class MMInfinityAdapter:
    """Binomial chain run as a lazy discretization of the sped-up process.

    One step is a jump attempt with probability eps = t d / steps, so
    ``steps`` steps cover time t of the M/M/infinity approximation.
    """

    kernel: MarkovKernel
    lam: float
    d: int
    t: float
    steps: int

    @property
    def eps(self):
        return self.t * self.d / self.steps

    @property
    def kappa(self):
        return self.eps / self.d

    def plan(self, x):
        return bounds.RunPlan(self.steps, 0, 1.0, int(x))

    def continuous_r_max(self, x):
        return (8 * self.lam * self.t + 4 * (self.lam + x)) / (3 * self.t)

    def continuous_bound(self, r, x):
        """Limit-process deviation bound for a 1-Lipschitz f started at x."""
        if not r > 0:
            raise McmcCertError("r must be positive")
        r_max = self.continuous_r_max(x)
        t, lam = self.t, self.lam
        if r < r_max:
            log_raw, regime = math.log(2) - t * r * r / (16 * (2 * lam + (lam + x) / t)), "gaussian"
        else:
            log_raw, regime = math.log(2) - t * r / 12, "exponential"
        inputs = {"plan": self.plan(x).to_dict(), "lam": lam, "t": t, "x": x, "d": self.d,
                  "steps": self.steps}
        return bounds._prob_cert("concentration", "mm_infty_continuous", log_raw, inputs,
                                 regime, r, r_max)

    def S_spec(self):
        return SSpec(1.0, 2.0 * self.lam, values=self.lam + np.arange(self.d + 1.0),
                     mean_source="exact")

    def discrete_bound(self, r, x):
        """The general S-form concentration bound for the discretized chain
        with kappa = eps/d, S(x) = lambda + x, E(x) <= x + lambda, sigma_inf = 1."""
        return bounds.concentration_S(self.plan(x), self.kappa, self.S_spec(),
                                      x + self.lam, 1.0, r)


def mm_infty_discrete(lam, d, t, steps):
    if not 0 < lam < d:
        raise InvalidRate(f"need 0 < lambda < d, got lambda={lam}, d={d}")
    eps = t * d / steps
    if not 0 < eps <= 1:
        raise McmcCertError(f"need steps >= t d, got eps = {eps}")
    up, down, stay = binomial_transitions(d, lam)
    up, down = eps * up, eps * down
    stay = 1 - up - down
    kernel = MarkovKernel(_line_space(d + 1, f"line{d + 1}"), _tridiagonal(up, down, stay),
                          label=f"mm_infty(lambda={lam}, d={d}, t={t}, steps={steps})",
                          meta={"family": "mm_infty_discrete", "lam": lam, "d": d, "t": t,
                                "steps": steps, "kappa_lower": eps / d, "sigma_inf": 1.0})
    return kernel, MMInfinityAdapter(kernel, lam, int(d), t, int(steps))


# ---------------------------------------------------------------------------
# Euler scheme for diffusions on R^dim
# ---------------------------------------------------------------------------

def truncated_gaussian(rng, n, dim, radius):
    """Standard Gaussian vectors conditioned on norm <= radius (rejection)."""
    out = rng.standard_normal((n, dim))
    bad = np.flatnonzero(np.linalg.norm(out, axis=1) > radius)
    while len(bad):
        out[bad] = rng.standard_normal((len(bad), dim))
        bad = bad[np.linalg.norm(out[bad], axis=1) > radius]
    return out


def _rho_batch(rho, X):
    if callable(rho):
        return np.asarray(rho(X), dtype=float)
    return np.broadcast_to(np.asarray(rho, dtype=float), (len(X),) + np.shape(rho))


def euler_sde(b, rho, dim, dt, alpha, trunc_R=6.0, rho_op_sup=None, S_C=None,
              check_box=3.0, n_check=200, rng=0):
    """Euler scheme X' = X + b(X) dt + sqrt(2 dt) rho(X) Y, Y truncated Gaussian.

    ``alpha`` is the declared dissipativity constant of
    ||rho(x)-rho(y)||_HS^2 + <x-y, b(x)-b(y)> <= -alpha ||x-y||^2; it is
    spot-checked on random pairs in [-check_box, check_box]^dim together
    with the one-step coupled contraction.  Analytic diagnostics land in
    ``meta``: first-order curvature alpha dt, sigma(x)^2 = 2 dt ||rho||_HS^2,
    n_x = ||rho||_HS^2 / ||rho||_op^2, sigma_inf = R sqrt(2 dt) sup||rho||_op
    and S(x) = (2/alpha) ||rho(x)||_op^2.
    """
    if not alpha > 0:
        raise StabilityViolated(f"alpha must be positive, got {alpha}")
    space = EuclideanSpace(dim)
    const_rho = not callable(rho)
    gen = np.random.default_rng(rng)
    x = gen.uniform(-check_box, check_box, size=(n_check, dim))
    y = gen.uniform(-check_box, check_box, size=(n_check, dim))
    dx = x - y
    db = np.asarray(b(x)) - np.asarray(b(y))
    drho = _rho_batch(rho, x) - _rho_batch(rho, y)
    hs = (drho ** 2).sum(axis=(1, 2))
    d2 = (dx ** 2).sum(axis=1)
    lhs = hs + (dx * db).sum(axis=1)
    bad = np.flatnonzero(lhs > -alpha * d2 + 1e-12 * (1 + d2))
    if len(bad):
        k = bad[0]
        raise StabilityViolated("dissipativity condition fails", witness=(x[k].tolist(), y[k].tolist()))
    coupled = ((dx + dt * db) ** 2).sum(axis=1) + 2 * dt * hs
    bad = np.flatnonzero(coupled > (1 - alpha * dt / 2) ** 2 * d2 * (1 + 1e-12))
    if len(bad):
        k = bad[0]
        raise StabilityViolated("coupled one-step contraction fails",
                                witness=(x[k].tolist(), y[k].tolist()))

    scale = math.sqrt(2 * dt)

    def move(X, Y):
        r = _rho_batch(rho, X)
        return X + np.asarray(b(X)) * dt + scale * np.einsum("nij,nj->ni", r, Y)

    def sampler(X, rng):
        X = np.asarray(X, dtype=float).reshape(-1, dim)
        return move(X, truncated_gaussian(rng, len(X), dim, trunc_R))

    def coupler(X, Z, rng):
        X = np.asarray(X, dtype=float).reshape(-1, dim)
        Z = np.asarray(Z, dtype=float).reshape(-1, dim)
        Y = truncated_gaussian(rng, len(X), dim, trunc_R)
        return move(X, Y), move(Z, Y)

    def op2(X):
        return np.linalg.norm(_rho_batch(rho, np.atleast_2d(X)), ord=2, axis=(1, 2)) ** 2

    def hs2(X):
        return (_rho_batch(rho, np.atleast_2d(X)) ** 2).sum(axis=(1, 2))

    if const_rho:
        rho_op_sup = float(np.linalg.norm(np.asarray(rho, float), ord=2))
        S_C = 0.0 if S_C is None else S_C
    support_radius = None if rho_op_sup is None else trunc_R * scale * rho_op_sup
    S_func = (lambda X: 2.0 / alpha * op2(X))
    meta = {
        "family": "euler_sde", "dim": dim, "dt": dt, "alpha": alpha, "trunc_R": trunc_R,
        "kappa_lower": alpha * dt,
        "sigma2": lambda X: 2 * dt * hs2(X),
        "n_x": (lambda X: float(hs2(X)[0] / op2(X)[0])),
        "support_radius": support_radius,
        "S": S_func, "S_C": S_C,
    }
    return MarkovKernel(space, sampler=sampler, coupler=coupler,
                        label=f"euler(dim={dim}, dt={dt})", meta=meta)


def ornstein_uhlenbeck(dim=1, dt=0.01, trunc_R=6.0):
    """Euler scheme of dX = -X dt + sqrt(2) dW (alpha = 1, rho = Id)."""
    return euler_sde(lambda X: -np.asarray(X), np.eye(dim), dim, dt, 1.0, trunc_R)


def diffusion_tail_bound(r, alpha, t, mean_S, C, ecc_x, plan=None):
    """Continuous-time concentration bound for the diffusion's time average.

    V^2 = E_pi S/(alpha t) + C E(x)/(alpha t)^2; Gaussian below
    r_max = 2 V^2 alpha t / C (infinite when C = 0), exponential
    2 exp(-alpha t r / (8C)) above.
    """
    if not r > 0:
        raise McmcCertError("r must be positive")
    at = alpha * t
    V2 = mean_S / at + C * ecc_x / at ** 2
    r_max = 2 * V2 * at / C if C > 0 else math.inf
    rate = at / (8 * C) if C > 0 else math.inf
    log_raw, regime = bounds._gauss_exp(r, V2, r_max, rate)
    inputs = {"alpha": alpha, "t": t, "mean_S": mean_S, "C": C, "ecc_x": ecc_x, "V2": V2}
    if plan is not None:
        inputs["plan"] = plan.to_dict()
    return bounds._prob_cert("concentration", "diffusion_tail", log_raw, inputs, regime,
                             r, r_max)


# ---------------------------------------------------------------------------
# nonlinear state-space models
# ---------------------------------------------------------------------------

def state_space_model(F, noise, r_decl, L_decl, dim=1, probe=None, n_noise=10_000,
                      n_pairs=20, rng=0, support_radius=None):
    """X' = F(X, W) with i.i.d. noise W = noise(rng, n).

    The declared mean contraction E d(F(x,W), F(y,W)) <= r d(x, y) is
    spot-checked on ``n_pairs`` pairs drawn by ``probe(rng)`` (default: two
    N(0, 9 I) points) with ``n_noise`` shared draws each; a ratio above
    r + 3 standard errors raises ContractionViolated.
    """
    if not 0 <= r_decl < 1:
        raise McmcCertError("declared contraction must be in [0, 1)")
    space = EuclideanSpace(dim)
    gen = np.random.default_rng(rng)
    probe = probe or (lambda g: (3 * g.standard_normal(dim), 3 * g.standard_normal(dim)))
    for _ in range(n_pairs):
        x, y = (np.asarray(v, float).reshape(dim) for v in probe(gen))
        d0 = float(space.dist(x, y))
        if d0 == 0:
            continue
        W = noise(gen, n_noise)
        ratios = space.dist(F(np.tile(x, (n_noise, 1)), W), F(np.tile(y, (n_noise, 1)), W)) / d0
        se = ratios.std(ddof=1) / math.sqrt(n_noise)
        if ratios.mean() > r_decl + 3 * se + 1e-12:
            raise ContractionViolated(f"mean contraction {ratios.mean():.6g} > {r_decl}",
                                      witness=(x.tolist(), y.tolist()))

    def sampler(X, rng):
        X = np.asarray(X, dtype=float).reshape(-1, dim)
        return F(X, noise(rng, len(X)))

    def coupler(X, Z, rng):
        X = np.asarray(X, dtype=float).reshape(-1, dim)
        Z = np.asarray(Z, dtype=float).reshape(-1, dim)
        W = noise(rng, len(X))
        return F(X, W), F(Z, W)

    meta = {
        "family": "state_space", "dim": dim, "r": r_decl, "L": L_decl,
        "kappa_lower": 1 - r_decl, "S_C": L_decl ** 2 / (2 * (1 - r_decl)),
        "support_radius": support_radius, "F": F, "noise": noise,
    }
    return MarkovKernel(space, sampler=sampler, coupler=coupler,
                        label=f"state_space(r={r_decl})", meta=meta)


def state_space_S(kernel, x, n_samples=100_000, rng=None):
    """S(x) = E d(F(x,W1), F(x,W2))^2 / (2(1-r)), by Monte Carlo."""
    m = kernel.meta
    gen = np.random.default_rng(rng)
    X = np.tile(np.asarray(x, float).reshape(1, -1), (n_samples, 1))
    a = m["F"](X, m["noise"](gen, n_samples))
    c = m["F"](X, m["noise"](gen, n_samples))
    return float(np.mean(kernel.space.dist(a, c) ** 2)) / (2 * (1 - m["r"]))


def linear_state_space(r, noise_scale=1.0, dim=1, **kw):
    """F(x, w) = r x + w with Gaussian noise: contraction exactly r and
    S(x) = dim noise_scale^2 / (1 - r) constant (L = 0)."""
    def F(X, W):
        return r * X + W

    def noise(g, n):
        return noise_scale * g.standard_normal((n, dim))

    kernel = state_space_model(F, noise, r, 0.0, dim=dim, **kw)
    kernel.meta["S_const"] = dim * noise_scale ** 2 / (1 - r)
    return kernel


def state_space_variance_bound(plan, r, L, mean_S, ecc_x):
    """The S-form variance bound with kappa = 1 - r and C = L^2 / (2(1-r))."""
    S = SSpec(L ** 2 / (2 * (1 - r)), mean_S)
    return bounds.variance_bound_S(plan, 1 - r, S, ecc_x)
