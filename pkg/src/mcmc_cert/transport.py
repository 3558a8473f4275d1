"""Exact Wasserstein-1 distance on finite metric spaces.

The primal is solved as a min-cost flow (successive shortest paths with
Dijkstra on reduced costs) after scaling masses to integers with
denominator 2**48, so every pivot is exact integer arithmetic.  The
Kantorovich-Rubinstein dual is solved separately as a linear program over
1-Lipschitz potentials and serves as an independent check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import EmptyDistribution, McmcCertError, SupportTooLarge

MASS_SCALE = 2 ** 48
DEFAULT_SUPPORT_CAP = 20_000


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """A coupling given as (source, target, mass) triples and its cost."""

    sources: np.ndarray
    targets: np.ndarray
    masses: np.ndarray
    cost: float

    @property
    def pairs(self):
        return list(zip(self.sources.tolist(), self.targets.tolist(), self.masses.tolist()))

    def marginals(self, n):
        row = np.bincount(self.sources, weights=self.masses, minlength=n)
        col = np.bincount(self.targets, weights=self.masses, minlength=n)
        return row, col


@dataclass(frozen=True, eq=False)
class Potential:
    """A 1-Lipschitz function tabulated on the union of two supports."""

    support: np.ndarray
    values: np.ndarray

    def as_dict(self):
        return dict(zip(self.support.tolist(), self.values.tolist()))


def scale_masses(weights):
    """Integer masses summing exactly to MASS_SCALE; the rounding residual
    goes to the heaviest atom."""
    w = np.asarray(weights, dtype=float)
    a = np.floor(w * MASS_SCALE).astype(np.int64)
    a[int(np.argmax(w))] += MASS_SCALE - int(a.sum())
    return a


def _check(mu, nu, cap):
    if len(mu) == 0 or len(nu) == 0:
        raise EmptyDistribution("empty support")
    if len(mu) + len(nu) > cap:
        raise SupportTooLarge(f"combined support {len(mu) + len(nu)} exceeds cap {cap}")


def min_cost_flow(supply, demand, cost, max_iter=None):
    """Transportation problem with integer supplies/demands.

    Returns the integer flow matrix.  Successive shortest paths with node
    potentials; each augmentation saturates a supply, a demand or a reverse
    edge, so the loop is short on the tiny problems met here.
    """
    supply = np.array(supply, dtype=np.int64)
    demand = np.array(demand, dtype=np.int64)
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    flow = np.zeros((m, n), dtype=np.int64)
    if m == 1:
        flow[0] = demand
        return flow
    if n == 1:
        flow[:, 0] = supply
        return flow
    pot_u = np.zeros(m)
    pot_v = np.zeros(n)
    pot_t = 0.0
    max_iter = max_iter or 50 * (m + n) ** 2
    inf = math.inf
    for _ in range(max_iter):
        if not supply.any():
            return flow
        # Dijkstra from the super source over sources (u) and sinks (v).
        du = np.where(supply > 0, -pot_u, inf)
        dv = np.full(n, inf)
        pred_v = np.full(n, -1)  # source feeding sink j
        pred_u = np.full(m, -1)  # sink feeding source i via a reverse edge
        done_u = np.zeros(m, bool)
        done_v = np.zeros(n, bool)
        dt, pred_t = inf, -1
        while True:
            cu = np.where(done_u, inf, du)
            cv = np.where(done_v, inf, dv)
            iu, iv = int(np.argmin(cu)), int(np.argmin(cv))
            bu, bv = cu[iu], cv[iv]
            best = min(bu, bv)
            if best >= dt or best == inf:
                break
            if bu <= bv:
                done_u[iu] = True
                cand = bu + cost[iu] + pot_u[iu] - pot_v
                better = (cand < dv) & ~done_v
                dv[better] = cand[better]
                pred_v[better] = iu
            else:
                done_v[iv] = True
                back = flow[:, iv] > 0
                cand = bv - cost[:, iv] + pot_v[iv] - pot_u
                better = back & (cand < du) & ~done_u
                du[better] = cand[better]
                pred_u[better] = iv
                if demand[iv] > 0:
                    c = bv + pot_v[iv] - pot_t
                    if c < dt:
                        dt, pred_t = c, iv
        if pred_t < 0:
            raise McmcCertError("min-cost flow: demand unreachable")
        # potentials: phi += min(dist, dist_t)
        pot_u += np.minimum(du, dt)
        pot_v += np.minimum(dv, dt)
        pot_t += dt
        # walk back, find bottleneck
        path = []
        j = pred_t
        amount = int(demand[j])
        while True:
            i = int(pred_v[j])
            path.append((i, j))
            k = int(pred_u[i])
            if k < 0:
                amount = min(amount, int(supply[i]))
                break
            amount = min(amount, int(flow[i, k]))
            path.append((i, -k - 1))
            j = k
        for i, j in path:
            if j >= 0:
                flow[i, j] += amount
            else:
                flow[i, -j - 1] -= amount
        supply[path[-1][0]] -= amount
        demand[pred_t] -= amount
    raise McmcCertError("min-cost flow did not terminate")


def _w1_arrays(sa, wa, sb, wb, space):
    """W1 between (support, weight) arrays; returns (value, plan)."""
    union = np.union1d(sa, sb)
    a = np.zeros(len(union), np.int64)
    b = np.zeros(len(union), np.int64)
    a[np.searchsorted(union, sa)] = scale_masses(wa)
    b[np.searchsorted(union, sb)] = scale_masses(wb)
    # shared mass stays put: optimal for any metric cost
    common = np.minimum(a, b)
    a -= common
    b -= common
    src = np.flatnonzero(a)
    dst = np.flatnonzero(b)
    srcs, tgts, mass = [union[common > 0]], [union[common > 0]], [common[common > 0]]
    total = 0
    if len(src):
        cost = space.pairwise(union[src], union[dst])
        flow = min_cost_flow(a[src], b[dst], cost)
        ii, jj = np.nonzero(flow)
        srcs.append(union[src][ii])
        tgts.append(union[dst][jj])
        mass.append(flow[ii, jj])
        total = math.fsum((flow[ii, jj] * cost[ii, jj]).tolist())
    value = total / MASS_SCALE
    plan = TransportPlan(
        np.concatenate(srcs), np.concatenate(tgts),
        np.concatenate(mass).astype(float) / MASS_SCALE, value,
    )
    return value, plan


def wasserstein1(mu, nu, space, cap=DEFAULT_SUPPORT_CAP):
    """Exact W1(mu, nu) and an optimal transport plan."""
    _check(mu, nu, cap)
    return _w1_arrays(mu.support, mu.weights, nu.support, nu.weights, space)


def w1_value(sa, wa, sb, wb, space):
    """Unvalidated fast path used by the curvature sweep."""
    return _w1_arrays(sa, wa, sb, wb, space)[0]


def kantorovich_dual(mu, nu, space, cap=DEFAULT_SUPPORT_CAP):
    """max over 1-Lipschitz f of mu(f) - nu(f), solved as an LP over potentials.

    The LP solution is projected onto the 1-Lipschitz set by inf-convolution
    ``f(x) <- min_y f(y) + d(x, y)`` before the objective is evaluated, so the
    returned value is attained by a verified 1-Lipschitz potential.
    """
    _check(mu, nu, cap)
    union = np.union1d(mu.support, nu.support)
    k = len(union)
    diff = np.zeros(k)
    diff[np.searchsorted(union, mu.support)] += mu.weights
    diff[np.searchsorted(union, nu.support)] -= nu.weights
    d = space.pairwise(union, union)
    if k == 1:
        return 0.0, Potential(union, np.zeros(1))
    ii, jj = np.nonzero(~np.eye(k, dtype=bool))
    A = np.zeros((len(ii), k))
    A[np.arange(len(ii)), ii] = 1.0
    A[np.arange(len(ii)), jj] = -1.0
    bounds = [(0.0, 0.0)] + [(None, None)] * (k - 1)
    res = linprog(-diff, A_ub=A, b_ub=d[ii, jj], bounds=bounds, method="highs")
    if res.status != 0:
        raise McmcCertError(f"dual LP failed: {res.message}")
    f = (res.x[None, :] + d).min(axis=1)
    f = f - f[0]
    value = math.fsum((diff * f).tolist())
    return value, Potential(union, f)
