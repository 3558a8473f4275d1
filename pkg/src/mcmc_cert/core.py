"""Metric spaces, transition kernels, finite distributions and observables.

Finite state spaces use dense integer indices ``0..n-1``; a point is its
index and the coordinates in ``FiniteMetricSpace.points`` are only used to
evaluate the metric.  Continuous spaces (``EuclideanSpace``) hold raw
coordinate vectors and only support sampler-mode kernels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import shortest_path

from .errors import EmptyDistribution, ExactModeRequired, McmcCertError

DENSE_CAP = 4096
MASS_TOL = 1e-12


# ---------------------------------------------------------------------------
# metrics on coordinate arrays
# ---------------------------------------------------------------------------

def hamming_codes(a, b):
    """Hamming distance between integer bit codes (shape (n,1) and (m,1))."""
    x = np.bitwise_xor(a[:, 0][:, None].astype(np.uint64), b[:, 0][None, :].astype(np.uint64))
    return np.bitwise_count(x).astype(float)


def manhattan(a, b):
    return np.abs(a[:, None, :] - b[None, :, :]).sum(axis=-1).astype(float)


def euclidean(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def discrete(a, b):
    """The trivial metric 1_{x != y}, under which W1 is total variation."""
    return np.any(a[:, None, :] != b[None, :, :], axis=-1).astype(float)


class FiniteMetricSpace:
    """A finite metric space with points indexed ``0..n-1``.

    Parameters
    ----------
    points : array_like, shape (n, k)
        Coordinates handed to ``metric``.
    metric : callable
        ``metric(A, B)`` returns the ``len(A) x len(B)`` distance matrix.
    neighbor_pairs : array_like of shape (p, 2), optional
        Declared adjacent pairs; the metric must be the shortest-path metric
        of the weighted graph they span (geodesic mode).
    """

    def __init__(self, points, metric, neighbor_pairs=None, name=""):
        pts = np.asarray(points)
        if pts.ndim == 1:
            pts = pts[:, None]
        pts.setflags(write=False)
        self.points = pts
        self.metric = metric
        self.name = name
        if neighbor_pairs is not None:
            neighbor_pairs = np.asarray(neighbor_pairs, dtype=np.int64).reshape(-1, 2)
            neighbor_pairs.setflags(write=False)
        self.neighbor_pairs = neighbor_pairs

    bounded = True

    @classmethod
    def from_matrix(cls, dist, neighbor_pairs=None, name=""):
        dist = np.array(dist, dtype=float)
        dist.setflags(write=False)

        def lookup(a, b):
            return dist[np.ix_(a[:, 0], b[:, 0])]

        space = cls(np.arange(len(dist))[:, None], lookup, neighbor_pairs, name)
        space.__dict__["matrix"] = dist
        return space

    @property
    def n(self):
        return len(self.points)

    def __len__(self):
        return self.n

    def pairwise(self, idx_a, idx_b):
        idx_a = np.atleast_1d(np.asarray(idx_a, dtype=np.int64))
        idx_b = np.atleast_1d(np.asarray(idx_b, dtype=np.int64))
        if "matrix" in self.__dict__:
            return self.matrix[np.ix_(idx_a, idx_b)]
        return self.metric(self.points[idx_a], self.points[idx_b])

    def dist(self, i, j):
        return float(self.pairwise([i], [j])[0, 0])

    @cached_property
    def matrix(self):
        if self.n > DENSE_CAP:
            raise McmcCertError(f"dense distance matrix disabled above {DENSE_CAP} points")
        m = self.metric(self.points, self.points).astype(float)
        m.setflags(write=False)
        return m

    @cached_property
    def diameter(self):
        if self.n <= DENSE_CAP:
            return float(self.matrix.max())
        idx = np.arange(self.n)
        best = 0.0
        for start in range(0, self.n, 512):
            best = max(best, float(self.pairwise(idx[start:start + 512], idx).max()))
        return best

    def check_metric(self, rng=None, n_triples=1000, tol=1e-12):
        """Spot-check the metric axioms on random triples; raises on failure."""
        rng = np.random.default_rng(rng)
        x, y, z = rng.integers(0, self.n, size=(3, n_triples))
        dxy = np.array([self.dist(a, b) for a, b in zip(x, y)])
        dyx = np.array([self.dist(b, a) for a, b in zip(x, y)])
        dxz = np.array([self.dist(a, c) for a, c in zip(x, z)])
        dzy = np.array([self.dist(c, b) for c, b in zip(z, y)])
        dxx = np.array([self.dist(a, a) for a in x])
        if np.any(np.abs(dxx) > tol):
            raise McmcCertError("dist(x, x) != 0")
        if np.any(np.abs(dxy - dyx) > tol):
            raise McmcCertError("metric is not symmetric")
        if np.any(dxy > dxz + dzy + tol):
            raise McmcCertError("triangle inequality fails")
        if np.any((dxy <= 0) & (x != y)):
            raise McmcCertError("distinct points at distance 0")
        return True

    def check_neighbor_generation(self, tol=1e-12):
        """True if the neighbor graph's shortest-path metric equals ``dist``."""
        if self.neighbor_pairs is None:
            raise McmcCertError("space has no neighbor_pairs")
        a, b = self.neighbor_pairs.T
        w = np.array([self.dist(i, j) for i, j in zip(a, b)])
        g = sparse.coo_matrix((w, (a, b)), shape=(self.n, self.n)).tocsr()
        sp = shortest_path(g, directed=False)
        return bool(np.all(np.abs(sp - self.matrix) <= tol))


class EuclideanSpace:
    """R^dim with the Euclidean metric; points are coordinate vectors."""

    bounded = False
    neighbor_pairs = None

    def __init__(self, dim, name=""):
        self.dim = int(dim)
        self.name = name or f"R^{dim}"
        self.diameter = math.inf

    def dist(self, x, y):
        return np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1)


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """Probability weights on distinct point indices of a finite space."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=np.int64).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if len(s) == 0:
            raise EmptyDistribution("distribution has empty support")
        if len(s) != len(w):
            raise McmcCertError("support and weights differ in length")
        if np.any(w < 0):
            raise McmcCertError("negative weight")
        if abs(math.fsum(w) - 1.0) > MASS_TOL:
            raise McmcCertError(f"weights sum to {math.fsum(w)!r}, not 1")
        if len(np.unique(s)) != len(s):
            raise McmcCertError("support points are not distinct")
        s.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "weights", w)

    @classmethod
    def delta(cls, i):
        return cls(np.array([i]), np.array([1.0]))

    @classmethod
    def uniform(cls, n):
        return cls(np.arange(n), np.full(n, 1.0 / n))

    @classmethod
    def from_dense(cls, p):
        p = np.asarray(p, dtype=float)
        nz = np.flatnonzero(p)
        return cls(nz, p[nz])

    def to_dense(self, n):
        out = np.zeros(n)
        out[self.support] = self.weights
        return out

    def expect(self, values):
        """Mean of a function given as a table over the whole space."""
        return float(np.dot(self.weights, np.asarray(values)[self.support]))

    def __len__(self):
        return len(self.support)


def total_variation(mu, nu, n=None):
    n = n or int(max(mu.support.max(), nu.support.max())) + 1
    return 0.5 * float(np.abs(mu.to_dense(n) - nu.to_dense(n)).sum())


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MarkovKernel:
    """Transition kernel in exact mode (row-stochastic sparse matrix over a
    finite space), sampler mode (``sampler(states, rng) -> states``), or both.

    ``coupler(x, y, rng)`` optionally advances two batches of states under a
    shared-noise coupling; ``meta`` carries family parameters and analytic
    diagnostics attached by the chain constructors.
    """

    space: object
    matrix: Optional[sparse.csr_matrix] = None
    sampler: Optional[Callable] = None
    coupler: Optional[Callable] = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.matrix is None and self.sampler is None:
            raise McmcCertError("kernel needs a transition matrix or a sampler")
        if self.matrix is not None:
            m = sparse.csr_matrix(self.matrix, dtype=float)
            m.sort_indices()
            n = self.space.n
            if m.shape != (n, n):
                raise McmcCertError("transition matrix shape does not match space")
            if m.nnz and m.data.min() < 0:
                raise McmcCertError("negative transition probability")
            rows = np.asarray(m.sum(axis=1)).ravel()
            if np.any(np.abs(rows - 1.0) > MASS_TOL):
                raise McmcCertError("transition rows do not sum to 1")
            m.eliminate_zeros()
            object.__setattr__(self, "matrix", m)

    @classmethod
    def from_dense(cls, P, space, label="", **kw):
        return cls(space, sparse.csr_matrix(np.asarray(P, dtype=float)), label=label, **kw)

    @property
    def exact(self):
        return self.matrix is not None

    def require_exact(self):
        if self.matrix is None:
            raise ExactModeRequired(f"kernel {self.label!r} is sampler-only")
        return self.matrix

    @property
    def n(self):
        return self.space.n

    def row(self, i):
        m = self.require_exact()
        lo, hi = m.indptr[i], m.indptr[i + 1]
        return m.indices[lo:hi], m.data[lo:hi]

    def at(self, i):
        s, w = self.row(i)
        return FiniteDistribution(s, w)

    @cached_property
    def _cdf(self):
        # row r occupies the interval [r, r+1) of one global cumulative array
        m = self.matrix
        counts = np.diff(m.indptr)
        rows = np.repeat(np.arange(m.shape[0]), counts)
        within = np.empty_like(m.data)
        for r in range(m.shape[0]):
            lo, hi = m.indptr[r], m.indptr[r + 1]
            within[lo:hi] = np.cumsum(m.data[lo:hi])
            within[hi - 1] = 1.0
        return rows + within

    def step(self, states, rng):
        """Advance a batch of states one step using ``rng``."""
        if self.sampler is not None:
            return self.sampler(states, rng)
        u = rng.random(len(states))
        pos = np.searchsorted(self._cdf, np.asarray(states) + u, side="right")
        pos = np.minimum(pos, self._row_end[np.asarray(states)])
        return self.matrix.indices[pos]

    @cached_property
    def _row_end(self):
        return self.matrix.indptr[1:] - 1

    def coupled_step(self, x, y, rng):
        """One step of a coupling of P_x and P_y (shared randomness)."""
        if self.coupler is not None:
            return self.coupler(x, y, rng)
        if self.matrix is None:
            raise ExactModeRequired(f"kernel {self.label!r} has no coupler")
        u = rng.random(len(x))
        out = []
        for s in (np.asarray(x), np.asarray(y)):
            pos = np.searchsorted(self._cdf, s + u, side="right")
            out.append(self.matrix.indices[np.minimum(pos, self._row_end[s])])
        return out[0], out[1]


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def lipschitz_constant(values, space, pairs="all"):
    """Exact Lipschitz seminorm of a function tabulated on a finite space.

    With ``pairs="neighbors"`` only declared adjacent pairs are scanned,
    which is exact on geodesic spaces.
    """
    values = np.asarray(values, dtype=float)
    if pairs == "neighbors":
        a, b = space.neighbor_pairs.T
        d = np.array([space.dist(i, j) for i, j in zip(a, b)])
        return float(np.max(np.abs(values[a] - values[b]) / d)) if len(a) else 0.0
    best = 0.0
    idx = np.arange(space.n)
    for start in range(0, space.n, 512):
        blk = idx[start:start + 512]
        d = space.pairwise(blk, idx)
        diff = np.abs(values[blk][:, None] - values[None, :])
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(d > 0, diff / np.where(d > 0, d, 1.0), 0.0)
        best = max(best, float(ratio.max()))
    return best


@dataclass(frozen=True, eq=False)
class LipschitzObservable:
    """A function with a declared Lipschitz seminorm.

    Finite mode stores ``values`` as a table over the point indices; implicit
    mode stores ``func`` acting on batches of coordinate vectors.
    """

    lip_norm: float
    values: Optional[np.ndarray] = None
    func: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.lip_norm < 0:
            raise McmcCertError("lip_norm must be nonnegative")
        if self.values is None and self.func is None:
            raise McmcCertError("observable needs values or func")
        if self.values is not None:
            v = np.array(self.values, dtype=float)
            v.setflags(write=False)
            object.__setattr__(self, "values", v)

    @classmethod
    def from_table(cls, values, space, lip_norm=None, name=""):
        if lip_norm is None:
            lip_norm = lipschitz_constant(values, space)
        obs = cls(float(lip_norm), values=values, name=name)
        obs.verify(space)
        return obs

    def __call__(self, states):
        if self.values is not None:
            return self.values[np.asarray(states)]
        return self.func(states)

    def verify(self, space, rng=None, n_pairs=2000, tol=1e-12):
        """Check |f(x)-f(y)| <= lip_norm d(x,y): exactly on finite spaces,
        on sampled pairs otherwise (``rng`` draws standard normal points)."""
        if self.values is not None:
            actual = lipschitz_constant(self.values, space)
            if actual > self.lip_norm * (1 + tol) + tol:
                raise McmcCertError(f"declared lip_norm {self.lip_norm} < actual {actual}")
            return True
        rng = np.random.default_rng(rng)
        x = rng.normal(size=(n_pairs, space.dim)) * 3
        y = x + rng.normal(size=(n_pairs, space.dim))
        lhs = np.abs(self.func(x) - self.func(y))
        rhs = self.lip_norm * space.dist(x, y)
        if np.any(lhs > rhs * (1 + tol) + tol):
            raise McmcCertError("Lipschitz check failed on a sampled pair")
        return True


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def iterate_kernel(kernel, dist, n):
    """The law mu P^n of the chain after ``n`` steps from ``dist``."""
    m = kernel.require_exact()
    if n < 0:
        raise McmcCertError("n must be nonnegative")
    p = dist.to_dense(kernel.n)
    mt = m.T.tocsr()
    for _ in range(n):
        p = mt @ p
    return FiniteDistribution.from_dense(p)


def averaged_observable(kernel, f, n):
    """Table of P^n f (x) = E_x f(X_n)."""
    m = kernel.require_exact()
    v = np.array(f.values if isinstance(f, LipschitzObservable) else f, dtype=float)
    for _ in range(n):
        v = m @ v
    return v
