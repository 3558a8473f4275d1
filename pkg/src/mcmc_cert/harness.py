"""Ensemble simulation, exact moment oracles and certificate validation."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import RunPlan
from .core import FiniteDistribution, LipschitzObservable
from .diagnostics import stationary_dist
from .errors import McmcCertError, OracleTooLarge, PlanMismatch

ORACLE_CAP = 512
ORACLE_BUDGET = 10 ** 9
BLOCK_SIZE = 4096
SLACK_SE = 3.0
REL_TOL = 1e-9


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

def block_rng(seed, block):
    """Counter-based generator for replica block ``block``.

    Replica i lives in block i // block_size, so a result depends only on
    (seed, replicas, block_size) and never on how blocks are scheduled.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def _initial_states(kernel, start, count, rng):
    if start is None:
        raise McmcCertError("plan.start is required for simulation")
    if isinstance(start, FiniteDistribution):
        idx = rng.choice(len(start.support), size=count, p=start.weights)
        return np.asarray(start.support)[idx]
    if kernel.exact or np.ndim(start) == 0:
        return np.full(count, int(start), dtype=np.int64)
    x = np.asarray(start, dtype=float).reshape(1, -1)
    return np.repeat(x, count, axis=0)


def simulate_block(kernel, f, plan, count, rng):
    """Empirical means pihat(f) for ``count`` replicas driven by ``rng``."""
    states = _initial_states(kernel, plan.start, count, rng)
    for _ in range(plan.T0):
        states = kernel.step(states, rng)
    total = np.zeros(count)
    for _ in range(plan.T):
        states = kernel.step(states, rng)
        total += f(states)
    return total / plan.T


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Replica estimates of pihat(f) with summary statistics.

    ``tail_freq`` maps a normalized radius r (deviation / ||f||_Lip) to the
    fraction of replicas with |pihat(f) - center| >= r ||f||_Lip, where
    ``center`` is the exact E_x pihat(f) when supplied and the ensemble mean
    otherwise.
    """

    replicas: int
    plan: RunPlan
    estimates: np.ndarray
    center: float
    center_source: str
    empirical_mean_of_means: float
    empirical_variance: float
    empirical_bias: float | None
    tail_freq: dict
    seeds: dict

    @property
    def mean_se(self):
        return math.sqrt(self.empirical_variance / self.replicas)

    @property
    def variance_se(self):
        return self.empirical_variance * math.sqrt(2.0 / max(self.replicas - 1, 1))

    def tail(self, r):
        """Tail frequency at normalized radius r."""
        dev = np.abs(self.estimates - self.center)
        return float(np.count_nonzero(dev >= r * self.plan.lip_norm)) / self.replicas

    def to_dict(self):
        return {
            "replicas": self.replicas, "plan": self.plan.to_dict(),
            "empirical_mean_of_means": self.empirical_mean_of_means,
            "empirical_variance": self.empirical_variance,
            "empirical_bias": self.empirical_bias,
            "center": self.center, "center_source": self.center_source,
            "tail_freq": [[r, v] for r, v in self.tail_freq.items()],
            "seeds": self.seeds,
        }


def run_ensemble(kernel, f, plan, replicas, seed, radii=(), center=None, pi_f=None,
                 threads=1, block_size=BLOCK_SIZE):
    """Run ``replicas`` independent chains and summarize pihat(f).

    Blocks of ``block_size`` replicas each get their own Philox stream;
    results are concatenated in block order, so any thread count gives
    bit-identical output.
    """
    if replicas < 1:
        raise McmcCertError("replicas must be >= 1")
    sizes = [min(block_size, replicas - s) for s in range(0, replicas, block_size)]

    def work(b):
        return simulate_block(kernel, f, plan, sizes[b], block_rng(seed, b))

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(b) for b in range(len(sizes))]
    est = np.concatenate(parts)
    mean = math.fsum(est.tolist()) / replicas
    var = math.fsum(((est - mean) ** 2).tolist()) / max(replicas - 1, 1)
    if center is None:
        center, source = mean, "ensemble"
    else:
        center, source = float(center), "exact"
    dev = np.abs(est - center)
    radii = sorted(float(r) for r in radii)
    tails = {r: float(np.count_nonzero(dev >= r * plan.lip_norm)) / replicas for r in radii}
    seeds = {"base_seed": int(seed), "block_size": int(block_size), "blocks": len(sizes),
             "generator": "Philox"}
    bias = None if pi_f is None else mean - float(pi_f)
    return EnsembleResult(replicas, plan, est, center, source, mean, var, bias, tails, seeds)


# ---------------------------------------------------------------------------
# exact oracle
# ---------------------------------------------------------------------------

def _values(f, n):
    v = f.values if isinstance(f, LipschitzObservable) else f
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise McmcCertError("observable table does not match the state space")
    return v


def exact_moment_tables(kernel, f, T, T0, budget=ORACLE_BUDGET):
    """Tables x -> E_x pihat(f) and x -> Var_x pihat(f) over all starts.

    Backward recursion on function tables: with g = f - c,
    A_T = g, B_T = g^2, A_k = g + P A_{k+1}, B_k = g^2 + 2 g P A_{k+1} + P B_{k+1},
    so E_x S = P^{T0+1} A_1 and E_x S^2 = P^{T0+1} B_1 for S = sum of g.
    """
    m = kernel.require_exact()
    n = kernel.n
    if n > ORACLE_CAP:
        raise OracleTooLarge(f"{n} states exceeds the oracle cap {ORACLE_CAP}")
    if m.nnz * (T + T0 + 1) > budget:
        raise OracleTooLarge("T and T0 exceed the oracle budget")
    v = _values(f, n)
    c = float(np.mean(v))
    g = v - c
    A, B = g.copy(), g * g
    for _ in range(T - 1):
        PA = m @ A
        B = g * g + 2 * g * PA + m @ B
        A = g + PA
    for _ in range(T0 + 1):
        A = m @ A
        B = m @ B
    mean = A / T
    var = np.maximum(B / T ** 2 - mean ** 2, 0.0)
    return mean + c, var


def exact_moments(kernel, f, plan, budget=ORACLE_BUDGET):
    """(E_x pihat(f), Var_x pihat(f)) for the plan's start.

    A FiniteDistribution start gives the moments of the mixture; a missing
    start returns the full tables.
    """
    mean, var = exact_moment_tables(kernel, f, plan.T, plan.T0, budget)
    start = plan.start
    if start is None:
        return mean, var
    if isinstance(start, FiniteDistribution):
        w, s = start.weights, start.support
        m1 = float(w @ mean[s])
        m2 = float(w @ (var[s] + mean[s] ** 2))
        return m1, max(m2 - m1 * m1, 0.0)
    return float(mean[int(start)]), float(var[int(start)])


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

SOUND, VACUOUS, VIOLATED = "SOUND", "VACUOUS", "VIOLATED"


@dataclass
class ValidationReport:
    entries: list = field(default_factory=list)
    ensemble: EnsembleResult | None = None
    exact: dict | None = None

    @property
    def verdicts(self):
        return [e["verdict"] for e in self.entries]

    @property
    def any_violated(self):
        return VIOLATED in self.verdicts

    def to_dict(self):
        return {
            "entries": self.entries,
            "ensemble": None if self.ensemble is None else self.ensemble.to_dict(),
            "exact": self.exact,
            "summary": {v: self.verdicts.count(v) for v in (SOUND, VACUOUS, VIOLATED)},
        }


def _trivial_scale(kernel, plan):
    diam = kernel.space.diameter
    return plan.lip_norm * diam


def _verdict(ok, vacuous):
    if not ok:
        return VIOLATED
    return VACUOUS if vacuous else SOUND


def validate_certificates(kernel, f, plan, certs, replicas=0, seed=0, pi_f=None,
                          threads=1, use_exact=None):
    """Compare each certificate with the exact oracle (when the chain is small
    enough) or with an ensemble of ``replicas`` chains.

    Bias, variance and MSE certificates use the exact oracle when available,
    otherwise the ensemble with 3 standard errors of slack.  Concentration
    and confidence-radius certificates always use the ensemble; the slack is
    3 binomial standard errors computed at the bound itself.
    """
    pdict = plan.to_dict()
    for c in certs:
        if c.inputs.get("plan") != pdict:
            raise PlanMismatch(f"certificate {c.formula_id} was issued for another plan")
    if use_exact is None:
        use_exact = kernel.exact and kernel.n <= ORACLE_CAP
    exact = None
    if use_exact:
        mean, var = exact_moments(kernel, f, plan)
        if pi_f is None:
            pi_f = stationary_dist(kernel).expect(_values(f, kernel.n))
        exact = {"mean": mean, "variance": var, "pi_f": float(pi_f), "bias": mean - pi_f}
    needs_sim = any(c.kind in ("concentration", "confidence_radius") for c in certs) or exact is None
    ens = None
    if needs_sim:
        if replicas < 1:
            raise McmcCertError("replicas >= 1 needed for this certificate set")
        radii = [c.r for c in certs if c.kind == "concentration"]
        radii += [c.value / plan.lip_norm for c in certs if c.kind == "confidence_radius"]
        ens = run_ensemble(kernel, f, plan, replicas, seed, radii,
                           center=None if exact is None else exact["mean"], pi_f=pi_f,
                           threads=threads)
    scale = _trivial_scale(kernel, plan)
    report = ValidationReport(ensemble=ens, exact=exact)
    for c in certs:
        report.entries.append(_check_one(c, exact, ens, scale))
    return report


def _check_one(cert, exact, ens, scale):
    entry = {"kind": cert.kind, "formula_id": cert.formula_id, "bound": cert.value}
    bound = cert.value
    tol = REL_TOL * abs(bound) + 1e-15
    if cert.kind in ("bias", "variance", "mse"):
        if exact is not None:
            observed = {"bias": abs(exact["bias"]), "variance": exact["variance"],
                        "mse": exact["variance"] + exact["bias"] ** 2}[cert.kind]
            slack, source = 0.0, "exact"
        else:
            if ens.empirical_bias is None and cert.kind != "variance":
                raise McmcCertError("pi(f) needed to check a bias certificate")
            b = ens.empirical_bias
            observed = {"bias": abs(b) if b is not None else None,
                        "variance": ens.empirical_variance,
                        "mse": ens.empirical_variance + (b or 0.0) ** 2}[cert.kind]
            slack = SLACK_SE * (ens.mean_se if cert.kind == "bias" else ens.variance_se)
            source = "ensemble"
        trivial = scale if cert.kind == "bias" else scale ** 2 / 4
        vac = bound >= trivial
    elif cert.kind == "concentration":
        observed = ens.tail(cert.r)
        p = min(bound, 1.0)
        slack, source = SLACK_SE * math.sqrt(p * (1 - p) / ens.replicas), "ensemble"
        vac = bound >= 1.0
        entry["r_normalized"] = cert.r
    elif cert.kind == "confidence_radius":
        alpha = cert.inputs["alpha"]
        r = bound / ens.plan.lip_norm
        observed = ens.tail(r)
        p = min(alpha, 1.0)
        slack, source = SLACK_SE * math.sqrt(p * (1 - p) / ens.replicas), "ensemble"
        vac = bool(cert.flags.get("vacuous")) or bound >= scale
        bound = alpha
        tol = REL_TOL * alpha
        entry["radius"] = cert.value
    else:
        raise McmcCertError(f"cannot validate certificate kind {cert.kind!r}")
    ok = observed <= bound + slack + tol
    entry.update(observed=observed, slack=slack, source=source,
                 verdict=_verdict(ok, vac))
    return entry


def write_tail_csv(path, ensemble, certs):
    """Plot-ready CSV of empirical tail frequency against certificate bounds."""
    rows = [c for c in certs if c.kind == "concentration"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["formula_id", "r_normalized", "r", "empirical_freq", "binomial_se", "bound",
                    "regime"])
        for c in sorted(rows, key=lambda c: (c.formula_id, c.r)):
            freq = ensemble.tail(c.r)
            se = math.sqrt(max(freq * (1 - freq), 0.0) / ensemble.replicas)
            w.writerow([c.formula_id, repr(c.r), repr(c.r * ensemble.plan.lip_norm), repr(freq), repr(se),
                        repr(c.value), c.regime])
