"""Curvature and the local quantities every bound consumes.

kappa (coarse Ricci curvature), eccentricity E(x), diffusion constant
sigma(x)^2, a certified lower bound on the local dimension n_x, granularity
sigma_inf and the stationary distribution.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import DENSE_CAP, FiniteDistribution, lipschitz_constant
from .errors import (
    ExactModeRequired,
    InvalidDimension,
    McmcCertError,
    MissingSFunction,
    NonPositiveCurvature,
    StationarySolveFailed,
    UnboundedDiffusion,
    UnboundedSpace,
    UnboundedSupport,
)
from .transport import w1_value

ALL_PAIRS_CAP = 2048
KAPPA_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class CurvatureReport:
    kappa: float
    witness_pair: tuple
    pairs: np.ndarray
    ratios: np.ndarray
    mode: str

    def to_dict(self):
        return {
            "kappa": self.kappa,
            "witness_pair": [int(v) for v in self.witness_pair],
            "mode": self.mode,
            "max_ratio": float(self.ratios.max()) if len(self.ratios) else 0.0,
            "n_pairs": int(len(self.pairs)),
        }


@dataclass(frozen=True, eq=False)
class SSpec:
    """A Lipschitz function S dominating sigma^2/(n kappa).

    ``mean_S`` is E_pi S or an upper bound on it; ``mean_source`` records
    whether it is ``"exact"``, ``"anchor"`` (S(x0) + C E(x0)) or
    ``"declared"``.
    """

    C: float
    mean_S: float
    values: Optional[np.ndarray] = None
    func: Optional[Callable] = None
    mean_source: str = "declared"

    def __call__(self, x):
        if self.values is not None:
            return self.values[np.asarray(x)]
        return self.func(x)

    @classmethod
    def exact(cls, values, space, pi):
        """S tabulated on a finite space; C and E_pi S computed exactly."""
        values = np.asarray(values, dtype=float)
        return cls(lipschitz_constant(values, space), pi.expect(values), values=values,
                   mean_source="exact")

    @classmethod
    def from_anchor(cls, C, x0_value, ecc_x0, values=None, func=None):
        return cls(C, x0_value + C * ecc_x0, values=values, func=func, mean_source="anchor")

    def to_dict(self):
        return {"C": self.C, "mean_S": self.mean_S, "mean_source": self.mean_source}


@dataclass(frozen=True, eq=False)
class DiagnosticsBundle:
    kappa: float
    ecc: np.ndarray
    sigma2: np.ndarray
    n_lower: np.ndarray
    sigma_inf: float
    pi: Optional[FiniteDistribution] = None
    S_spec: Optional[SSpec] = None
    report: Optional[CurvatureReport] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.sigma2 < 0) or np.any(self.n_lower < 1) or self.sigma_inf < 0:
            raise McmcCertError("diagnostics out of range")

    @property
    def ratio_table(self):
        return self.sigma2 / (self.n_lower * self.kappa)

    @property
    def sup_ratio(self):
        """sup_x sigma(x)^2 / (n_x kappa); raises UnboundedDiffusion if infinite."""
        value = float(np.max(self.ratio_table))
        if not math.isfinite(value):
            raise UnboundedDiffusion("sup sigma^2/(n kappa) is not finite")
        return value

    def require_S(self):
        if self.S_spec is None:
            raise MissingSFunction("no S function supplied")
        return self.S_spec

    def to_dict(self):
        out = {
            "kappa": self.kappa,
            "ecc": self.ecc.tolist(),
            "sigma2": self.sigma2.tolist(),
            "n_lower": self.n_lower.tolist(),
            "sigma_inf": self.sigma_inf,
            "sup_ratio": self.sup_ratio,
        }
        if self.pi is not None:
            out["pi"] = {"support": self.pi.support.tolist(), "weights": self.pi.weights.tolist()}
        if self.S_spec is not None:
            out["S"] = self.S_spec.to_dict()
        if self.report is not None:
            out["curvature"] = self.report.to_dict()
        return out


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------

def _ratio_chunk(kernel, pairs):
    m = kernel.matrix
    space = kernel.space
    out = np.empty(len(pairs))
    for k, (x, y) in enumerate(pairs):
        sx = m.indices[m.indptr[x]:m.indptr[x + 1]]
        wx = m.data[m.indptr[x]:m.indptr[x + 1]]
        sy = m.indices[m.indptr[y]:m.indptr[y + 1]]
        wy = m.data[m.indptr[y]:m.indptr[y + 1]]
        out[k] = w1_value(sx, wx, sy, wy, space) / space.dist(x, y)
    return out


def coarse_ricci(kernel, pairs="all", threads=1, chunk=256):
    """Best constant kappa with W1(P_x, P_y) <= (1 - kappa) d(x, y).

    ``pairs="neighbors"`` scans only the declared adjacent pairs, which gives
    the global constant on geodesic spaces.  Pairs are split into fixed
    chunks and the max is reduced in pair order, so the witness does not
    depend on ``threads``.
    """
    kernel.require_exact()
    space = kernel.space
    if pairs == "neighbors":
        if space.neighbor_pairs is None:
            raise McmcCertError("neighbor mode needs space.neighbor_pairs")
        plist = np.asarray(space.neighbor_pairs)
    elif pairs == "all":
        if space.n > ALL_PAIRS_CAP:
            raise McmcCertError(f"all-pairs mode capped at {ALL_PAIRS_CAP} points; use neighbors")
        i, j = np.triu_indices(space.n, k=1)
        plist = np.stack([i, j], axis=1)
    else:
        raise McmcCertError(f"unknown pairs mode {pairs!r}")
    if len(plist) == 0:
        return CurvatureReport(1.0, (0, 0), plist, np.zeros(0), pairs)
    chunks = [plist[s:s + chunk] for s in range(0, len(plist), chunk)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda c: _ratio_chunk(kernel, c), chunks))
    else:
        parts = [_ratio_chunk(kernel, c) for c in chunks]
    ratios = np.concatenate(parts)
    w = int(np.argmax(ratios))
    witness = (int(plist[w, 0]), int(plist[w, 1]))
    kappa = 1.0 - float(ratios[w])
    if kappa <= KAPPA_FLOOR:
        raise NonPositiveCurvature(
            f"max contraction ratio {float(ratios[w])!r} at pair {witness}", witness=witness,
            ratio=float(ratios[w]))
    return CurvatureReport(min(kappa, 1.0), witness, plist, ratios, pairs)


# ---------------------------------------------------------------------------
# local quantities
# ---------------------------------------------------------------------------

def eccentricity(kernel, pi):
    """E(x) = sum_y d(x, y) pi(y) for every point x."""
    space = kernel.space
    out = np.empty(space.n)
    idx = np.arange(space.n)
    for start in range(0, space.n, 512):
        blk = idx[start:start + 512]
        out[blk] = space.pairwise(blk, pi.support) @ pi.weights
    return out


def eccentricity_apriori(kernel, x, option, *, kappa=None, anchor=None, anchor_ecc=None,
                         n_samples=20_000, rng=None):
    """Upper bound on E(x) that does not need the stationary law.

    option : ``"diameter"`` (diam X), ``"anchor"`` (E(x0) + d(x, x0)) or
    ``"local"`` ((1/kappa) E_{P_x} d(x, .)).  In sampler mode the local bound
    is a Monte Carlo estimate plus three standard errors.
    """
    space = kernel.space
    if option == "diameter":
        if not space.bounded:
            raise UnboundedSpace("diameter bound needs a bounded space")
        return float(space.diameter)
    if option == "anchor":
        if anchor is None or anchor_ecc is None:
            raise McmcCertError("anchor option needs anchor and anchor_ecc")
        if kernel.exact:
            return float(anchor_ecc + space.dist(x, anchor))
        return float(anchor_ecc + space.dist(np.asarray(x, float), np.asarray(anchor, float)))
    if option == "local":
        if kappa is None or kappa <= 0:
            raise McmcCertError("local option needs kappa > 0")
        if kernel.exact:
            s, w = kernel.row(x)
            return float(space.pairwise([x], s)[0] @ w) / kappa
        rng = np.random.default_rng(rng)
        x0 = np.broadcast_to(np.asarray(x, float), (n_samples, space.dim))
        d = space.dist(kernel.step(x0.copy(), rng), x0)
        return float(d.mean() + 3 * d.std(ddof=1) / math.sqrt(n_samples)) / kappa
    raise McmcCertError(f"unknown option {option!r}")


def diffusion_constant(kernel, x, n_samples=20_000, rng=None):
    """sigma(x)^2 = 1/2 E d(Y, Z)^2 for Y, Z independent draws from P_x."""
    if kernel.exact:
        s, w = kernel.row(x)
        d = kernel.space.pairwise(s, s)
        return 0.5 * float(w @ (d * d) @ w)
    rng = np.random.default_rng(rng)
    x0 = np.broadcast_to(np.asarray(x, float), (n_samples, kernel.space.dim))
    y = kernel.step(x0.copy(), rng)
    z = kernel.step(x0.copy(), rng)
    return 0.5 * float(np.mean(kernel.space.dist(y, z) ** 2))


def diffusion_table(kernel):
    return np.array([diffusion_constant(kernel, x) for x in range(kernel.n)])


def _moment_dimension(kernel, x):
    # any 1-Lipschitz f has Var_{P_x} f <= E d(Y, z)^2 for every anchor z
    s, w = kernel.row(x)
    d = kernel.space.pairwise(s, s)
    m2 = float(((d * d) @ w).min())
    if m2 == 0:
        return 1.0
    return max(1.0, diffusion_constant(kernel, x) / m2)


def local_dimension_lower(kernel, x, mode="one", declared=None):
    """Certified lower bound on the local dimension n_x.

    mode ``"one"`` returns the universal bound 1.  ``"declared"`` accepts a
    caller value >= 1; for kernels carrying an analytic ``n_x`` (Gaussian
    Euler kernels) the declaration must not exceed it; on finite kernels it
    is rejected if a distance function d(., z) refutes it.  ``"moment"``
    returns
    max(1, sigma(x)^2 / min_z E_{P_x} d(Y, z)^2), valid because
    Var_{P_x} f <= E (f(Y) - f(z))^2 <= E d(Y, z)^2 for 1-Lipschitz f.
    """
    if mode == "one":
        return 1.0
    if mode == "moment":
        kernel.require_exact()
        return _moment_dimension(kernel, x)
    if mode != "declared":
        raise McmcCertError(f"unknown mode {mode!r}")
    if declared is None or declared < 1:
        raise InvalidDimension(f"declared local dimension {declared!r} < 1")
    analytic = kernel.meta.get("n_x")
    if analytic is not None:
        bound = analytic(x) if callable(analytic) else analytic
        if declared > bound * (1 + 1e-12):
            raise InvalidDimension(f"declared {declared} exceeds analytic n_x {bound}")
    elif kernel.exact:
        # falsification: distance functions are 1-Lipschitz witnesses
        s, w = kernel.row(x)
        d = kernel.space.pairwise(s, s)
        var = (d * d) @ w - (d @ w) ** 2
        sigma2 = diffusion_constant(kernel, x)
        if var.max() > 0 and declared > sigma2 / var.max() * (1 + 1e-12):
            raise InvalidDimension(f"declared {declared} refuted by a distance function")
    return float(declared)


def granularity(kernel, declared_radius=None):
    """sigma_inf = 1/2 sup_x diam supp P_x."""
    if kernel.exact:
        m = kernel.matrix
        best = 0.0
        for x in range(kernel.n):
            s = m.indices[m.indptr[x]:m.indptr[x + 1]]
            if len(s) > 1:
                best = max(best, float(kernel.space.pairwise(s, s).max()))
        return 0.5 * best
    radius = declared_radius if declared_radius is not None else kernel.meta.get("support_radius")
    if radius is None or not math.isfinite(radius):
        raise UnboundedSupport("sampler kernel without a declared support radius")
    return float(radius)


def stationary_dist(kernel, tol=1e-12, max_iter=1_000_000):
    """The invariant law pi = pi P (direct solve up to 4096 points)."""
    m = kernel.require_exact()
    n = kernel.n

    def residual(p):
        return 0.5 * float(np.abs(m.T @ p - p).sum())

    p = None
    if n <= DENSE_CAP:
        a = m.T.toarray() - np.eye(n)
        a[-1, :] = 1.0
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        try:
            p = np.linalg.solve(a, rhs)
        except np.linalg.LinAlgError:
            p = None
        if p is not None:
            p = np.where(p < 0, 0.0, p)
            p /= p.sum()
            if residual(p) > tol:
                p = None
    if p is None:
        p = np.full(n, 1.0 / n)
        mt = m.T.tocsr()
        for _ in range(max_iter):
            q = mt @ p
            q /= q.sum()
            if 0.5 * np.abs(q - p).sum() <= tol * 0.1:
                p = q
                break
            p = q
        if residual(p) > tol:
            raise StationarySolveFailed("power iteration did not converge")
    return FiniteDistribution.from_dense(p)


# ---------------------------------------------------------------------------
# bundle
# ---------------------------------------------------------------------------

def diagnose(kernel, pairs="all", S=None, n_mode="one", n_declared=None, threads=1,
             report=None):
    """Compute every finite-mode diagnostic in one pass.

    ``S`` may be an ``SSpec`` or a table (C and E_pi S then computed
    exactly).  ``S`` is checked to dominate sigma^2/(n kappa) at every point.
    """
    kernel.require_exact()
    report = report or coarse_ricci(kernel, pairs=pairs, threads=threads)
    kappa = report.kappa
    pi = stationary_dist(kernel)
    ecc = eccentricity(kernel, pi)
    sigma2 = diffusion_table(kernel)
    if n_mode == "declared":
        decl = np.broadcast_to(np.asarray(n_declared, float), (kernel.n,))
        n_lower = np.array([local_dimension_lower(kernel, x, "declared", decl[x])
                            for x in range(kernel.n)])
    else:
        n_lower = np.array([local_dimension_lower(kernel, x, n_mode) for x in range(kernel.n)])
    if S is not None and not isinstance(S, SSpec):
        S = SSpec.exact(S, kernel.space, pi)
    bundle = DiagnosticsBundle(kappa, ecc, sigma2, n_lower, granularity(kernel), pi, S, report)
    if S is not None:
        check_S(bundle, np.arange(kernel.n))
    return bundle


def check_S(bundle, points, tol=1e-12):
    """S(x) >= sigma(x)^2 / (n_x kappa) at the given points."""
    S = bundle.require_S()
    need = bundle.ratio_table[points]
    have = np.asarray(S(points), dtype=float)
    bad = np.flatnonzero(have < need * (1 - tol) - tol)
    if len(bad):
        x = int(np.asarray(points)[bad[0]])
        raise McmcCertError(f"S({x}) = {have[bad[0]]} < sigma^2/(n kappa) = {need[bad[0]]}")
    return True


def sampled_curvature(kernel, pairs, n_coupled=1, rng=None):
    """Upper-bound certificate on W1(P_x,P_y)/d(x,y) from the kernel's coupling.

    Returns ``(kappa_lower, ratios)`` where each ratio is the mean coupled
    distance after one step divided by d(x, y).  With a deterministic
    synchronous coupling (constant diffusion) one draw is exact.
    """
    if kernel.coupler is None and not kernel.exact:
        raise ExactModeRequired("kernel has no coupling")
    rng = np.random.default_rng(rng)
    space = kernel.space
    ratios = []
    for x, y in pairs:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        xs = np.broadcast_to(x, (n_coupled,) + x.shape).copy()
        ys = np.broadcast_to(y, (n_coupled,) + y.shape).copy()
        x1, y1 = kernel.coupled_step(xs, ys, rng)
        ratios.append(float(np.mean(space.dist(x1, y1))) / float(space.dist(x, y)))
    ratios = np.array(ratios)
    return 1.0 - float(ratios.max()), ratios
