"""Closed-form non-asymptotic error bounds for MCMC empirical means.

Every evaluator returns an immutable ``BoundCertificate`` echoing its inputs.
Concentration probabilities are computed in log space; ``value`` is the
probability clamped to [0, 1] and ``raw_value`` keeps the unclamped figure
(the leading constant 2 allows values up to 2).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import FiniteDistribution
from .errors import (
    InvalidKappa,
    LambdaOutOfRange,
    McmcCertError,
    MissingSFunction,
    PlanMismatch,
    UnboundedDiffusion,
)

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class RunPlan:
    """T averaging steps after T0 burn-in steps, from ``start``.

    ``start`` is a point index, a coordinate list, or a FiniteDistribution.
    """

    T: int
    T0: int = 0
    lip_norm: float = 1.0
    start: object = None

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise McmcCertError("T must be a positive integer")
        if int(self.T0) != self.T0 or self.T0 < 0:
            raise McmcCertError("T0 must be a nonnegative integer")
        if not self.lip_norm > 0:
            raise McmcCertError("lip_norm must be positive")

    def to_dict(self):
        start = self.start
        if isinstance(start, FiniteDistribution):
            start = {"support": start.support.tolist(), "weights": start.weights.tolist()}
        elif isinstance(start, np.ndarray):
            start = start.tolist()
        elif isinstance(start, np.integer):
            start = int(start)
        return {"T": int(self.T), "T0": int(self.T0), "lip_norm": float(self.lip_norm),
                "start": start}

    @classmethod
    def from_dict(cls, d):
        start = d.get("start")
        if isinstance(start, dict):
            start = FiniteDistribution(start["support"], start["weights"])
        return cls(d["T"], d.get("T0", 0), d.get("lip_norm", 1.0), start)


@dataclass(frozen=True)
class BoundCertificate:
    kind: str
    formula_id: str
    value: float
    inputs: dict
    regime: str = "n/a"
    r: Optional[float] = None
    r_max: Optional[float] = None
    raw_value: Optional[float] = None
    log_value: Optional[float] = None
    flags: dict = field(default_factory=dict)

    @property
    def plan(self):
        return RunPlan.from_dict(self.inputs["plan"])

    def to_dict(self):
        d = asdict(self)
        for k in ("r_max", "r", "raw_value", "log_value", "value"):
            if isinstance(d[k], float) and math.isinf(d[k]):
                d[k] = "inf"
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("r_max", "r", "raw_value", "log_value", "value"):
            if d.get(k) == "inf":
                d[k] = math.inf
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_kappa(kappa):
    if not (0 < kappa <= 1):
        raise InvalidKappa(f"kappa={kappa!r} outside (0, 1]")


def _pow1m(kappa, n):
    """(1 - kappa)^n with 0^0 = 1 and an exact 0 for kappa = 1, n > 0."""
    if n == 0:
        return 1.0
    if kappa == 1:
        return 0.0
    return math.exp(n * math.log1p(-kappa))


def _sup_ratio(value):
    if value is None or not math.isfinite(value):
        raise UnboundedDiffusion("sup sigma^2/(n kappa) is not finite")
    return float(value)


def _prob_cert(kind, formula_id, log_raw, inputs, regime, r, r_max, **flags):
    raw = math.exp(log_raw)
    return BoundCertificate(kind, formula_id, min(raw, 1.0), inputs, regime, r, r_max,
                            raw, min(log_raw, 0.0), flags)


# ---------------------------------------------------------------------------
# bias and variance
# ---------------------------------------------------------------------------

def bias_bound(plan, kappa, ecc_x):
    """|E_x pihat(f) - pi(f)| <= (1-kappa)^(T0+1) / (kappa T) E(x) ||f||_Lip."""
    _check_kappa(kappa)
    value = _pow1m(kappa, plan.T0 + 1) / (kappa * plan.T) * ecc_x * plan.lip_norm
    inputs = {"plan": plan.to_dict(), "kappa": kappa, "ecc_x": ecc_x}
    return BoundCertificate("bias", "bias", value, inputs)


def variance_bound_uniform(plan, kappa, sup_ratio):
    """Variance bound driven by sup_x sigma(x)^2 / (n_x kappa)."""
    _check_kappa(kappa)
    ratio = _sup_ratio(sup_ratio)
    kT = kappa * plan.T
    value = plan.lip_norm ** 2 / kT * ratio
    if plan.T0 > 0:
        value *= 1 + 1 / kT
    inputs = {"plan": plan.to_dict(), "kappa": kappa, "sup_ratio": ratio}
    return BoundCertificate("variance", "variance_uniform", value, inputs)


def _S_inputs(S_spec):
    if S_spec is None:
        raise MissingSFunction("S function required")
    return float(S_spec.mean_S), float(S_spec.C)


def variance_bound_S(plan, kappa, S_spec, ecc_x):
    """Variance bound driven by a C-Lipschitz S >= sigma^2/(n kappa)."""
    _check_kappa(kappa)
    mean_S, C = _S_inputs(S_spec)
    kT = kappa * plan.T
    if plan.T0 == 0:
        inner = mean_S + C / kT * ecc_x
    else:
        inner = (1 + 1 / kT) * mean_S + 2 * C * _pow1m(kappa, plan.T0) / kT * ecc_x
    value = plan.lip_norm ** 2 / kT * inner
    inputs = {"plan": plan.to_dict(), "kappa": kappa, "mean_S": mean_S, "C": C,
              "ecc_x": ecc_x, "mean_S_source": S_spec.mean_source}
    return BoundCertificate("variance", "variance_S", value, inputs)


def random_start_variance(plan, kappa, mu_spread):
    """Extra variance Var[E(pihat | X0)] for a random start with
    mu_spread = E d(X, Y)^2 over two independent draws from mu."""
    _check_kappa(kappa)
    return (_pow1m(kappa, 2 * (plan.T0 + 1)) / (2 * kappa ** 2 * plan.T ** 2)
            * mu_spread * plan.lip_norm ** 2)


def start_spread(mu, space):
    """E d(X, Y)^2 for X, Y independent with law mu (finite mode)."""
    d = space.pairwise(mu.support, mu.support)
    return float(mu.weights @ (d * d) @ mu.weights)


def mse_decomposition(bias_cert, var_cert):
    """Squared bias plus variance, bounding E_x (pihat(f) - pi(f))^2."""
    if bias_cert.inputs["plan"] != var_cert.inputs["plan"]:
        raise PlanMismatch("bias and variance certificates use different plans")
    value = bias_cert.value ** 2 + var_cert.value
    inputs = {"plan": bias_cert.inputs["plan"], "bias": bias_cert.value,
              "variance": var_cert.value, "variance_formula": var_cert.formula_id}
    return BoundCertificate("mse", "mse", value, inputs)


# ---------------------------------------------------------------------------
# concentration
# ---------------------------------------------------------------------------

def _gauss_exp(r, V2, r_max, exp_rate):
    """log of the two-branch bound 2 e^{-r^2/16V^2} / 2 e^{-rate r}."""
    if r < r_max:
        return LOG2 - r * r / (16 * V2), "gaussian"
    return LOG2 - exp_rate * r, "exponential"


def uniform_V2(plan, kappa, sup_ratio):
    return (1 + plan.T0 / plan.T) * _sup_ratio(sup_ratio) / (kappa * plan.T)


def S_V2(plan, kappa, S_spec, ecc_x):
    mean_S, C = _S_inputs(S_spec)
    kT = kappa * plan.T
    return (1 + plan.T0 / plan.T) * mean_S / kT + C * ecc_x / kT ** 2


def concentration_uniform(plan, kappa, sup_ratio, sigma_inf, r):
    """P_x(|pihat(f) - E_x pihat(f)| / ||f||_Lip >= r), uniform-diffusion form."""
    _check_kappa(kappa)
    if not r > 0:
        raise McmcCertError("r must be positive")
    if not math.isfinite(sigma_inf):
        raise McmcCertError("sigma_inf must be finite")
    V2 = uniform_V2(plan, kappa, sup_ratio)
    kT = kappa * plan.T
    r_max = 4 * V2 * kT / (3 * sigma_inf) if sigma_inf > 0 else math.inf
    rate = kT / (12 * sigma_inf) if sigma_inf > 0 else math.inf
    log_raw, regime = _gauss_exp(r, V2, r_max, rate)
    inputs = {"plan": plan.to_dict(), "kappa": kappa, "sup_ratio": float(sup_ratio),
              "sigma_inf": sigma_inf, "V2": V2}
    return _prob_cert("concentration", "concentration_uniform", log_raw, inputs, regime, r, r_max)


def concentration_S(plan, kappa, S_spec, ecc_x, sigma_inf, r):
    """Concentration with a C-Lipschitz S; V_x^2 depends on the start."""
    _check_kappa(kappa)
    if not r > 0:
        raise McmcCertError("r must be positive")
    if not math.isfinite(sigma_inf):
        raise McmcCertError("sigma_inf must be finite")
    mean_S, C = _S_inputs(S_spec)
    V2 = S_V2(plan, kappa, S_spec, ecc_x)
    kT = kappa * plan.T
    M = max(2 * C, 3 * sigma_inf)
    r_max = 4 * V2 * kT / M if M > 0 else math.inf
    rate = kT / (4 * M) if M > 0 else math.inf
    log_raw, regime = _gauss_exp(r, V2, r_max, rate)
    inputs = {"plan": plan.to_dict(), "kappa": kappa, "mean_S": mean_S, "C": C,
              "ecc_x": ecc_x, "sigma_inf": sigma_inf, "V2": V2,
              "mean_S_source": S_spec.mean_source}
    return _prob_cert("concentration", "concentration_S", log_raw, inputs, regime, r, r_max)


def confidence_radius(plan, diagnostics=None, alpha=0.05, which="uniform", *, kappa=None,
                      sup_ratio=None, sigma_inf=None, S_spec=None, ecc_x=None):
    """Smallest radius r (in the units of f) with tail bound <= alpha.

    Inputs come from a DiagnosticsBundle or from the keyword overrides.  The
    returned radius is re-evaluated against the concentration bound and
    nudged upward by ulps if rounding left it a hair short.
    """
    if diagnostics is not None:
        kappa = diagnostics.kappa if kappa is None else kappa
        sigma_inf = diagnostics.sigma_inf if sigma_inf is None else sigma_inf
        if which == "uniform" and sup_ratio is None:
            sup_ratio = diagnostics.sup_ratio
        if which == "S":
            S_spec = S_spec or diagnostics.require_S()
            if ecc_x is None:
                ecc_x = float(diagnostics.ecc[plan.start])
    if not alpha > 0:
        raise McmcCertError("alpha must be positive")
    _check_kappa(kappa)
    base = {"plan": plan.to_dict(), "kappa": kappa, "alpha": alpha, "sigma_inf": sigma_inf}
    if alpha >= 2:
        return BoundCertificate("confidence_radius", f"radius_{which}", 0.0, base,
                                flags={"vacuous": True})
    kT = kappa * plan.T
    if which == "uniform":
        V2 = uniform_V2(plan, kappa, sup_ratio)
        r_max = 4 * V2 * kT / (3 * sigma_inf) if sigma_inf > 0 else math.inf
        exp_scale = 12 * sigma_inf / kT

        def bound(r):
            return concentration_uniform(plan, kappa, sup_ratio, sigma_inf, r)
        base["sup_ratio"] = float(sup_ratio)
    elif which == "S":
        V2 = S_V2(plan, kappa, S_spec, ecc_x)
        M = max(2 * S_spec.C, 3 * sigma_inf)
        r_max = 4 * V2 * kT / M if M > 0 else math.inf
        exp_scale = 4 * M / kT

        def bound(r):
            return concentration_S(plan, kappa, S_spec, ecc_x, sigma_inf, r)
        base.update(mean_S=S_spec.mean_S, C=S_spec.C, ecc_x=ecc_x)
    else:
        raise McmcCertError(f"unknown bound family {which!r}")
    log_ratio = math.log(2 / alpha)
    r = math.sqrt(16 * V2 * log_ratio)
    if not r < r_max:
        r = exp_scale * log_ratio
    cert = bound(r)
    while cert.raw_value > alpha:
        r = math.nextafter(r, math.inf)
        cert = bound(r)
    base["V2"] = V2
    base["r_normalized"] = r
    return BoundCertificate("confidence_radius", f"radius_{which}", r * plan.lip_norm, base,
                            cert.regime, r, r_max, flags={"vacuous": False})


# ---------------------------------------------------------------------------
# finite-time lemmas
# ---------------------------------------------------------------------------

def lemma_variance_rhs(kernel, f_lip, N, diag=None, *, kappa=None, rate=None):
    """sum_{k<N} (1-kappa)^{2(N-1-k)} P^k(sigma^2/n) scaled by ||f||_Lip^2.

    kappa and the rate table sigma^2/n come from ``diag`` unless given.  The
    result bounds the pointwise variance P^N(f^2) - (P^N f)^2.
    """
    m = kernel.require_exact()
    if diag is not None:
        kappa = diag.kappa if kappa is None else kappa
        rate = diag.sigma2 / diag.n_lower if rate is None else rate
    _check_kappa(kappa)
    if N < 1:
        raise McmcCertError("N must be >= 1")
    pk = np.asarray(rate, dtype=float)
    total = np.zeros_like(pk)
    for k in range(N):
        total += _pow1m(kappa, 2 * (N - 1 - k)) * pk
        pk = m @ pk
    return f_lip ** 2 * total


def laplace_lambda_max(kappa, T, C, sigma_inf):
    """Upper end of the admissible lambda interval for the Laplace lemma."""
    denom = max(4 * C, 6 * sigma_inf)
    return math.inf if denom == 0 else kappa * T / denom


def lemma_laplace_rhs(kernel, f_values, lam, N, S_spec, plan, kappa, sigma_inf, log=False):
    """exp{lam P^N f + (4 lam^2 / (kappa T^2)) sum_{k<N} P^k S} pointwise.

    ``f_values`` must be (2/(kappa T))-Lipschitz; lam must lie in
    (0, kappa T / max(4C, 6 sigma_inf)).
    """
    m = kernel.require_exact()
    _check_kappa(kappa)
    if S_spec is None:
        raise MissingSFunction("Laplace lemma needs S")
    lam_max = laplace_lambda_max(kappa, plan.T, S_spec.C, sigma_inf)
    if not (0 < lam < lam_max):
        raise LambdaOutOfRange(f"lambda={lam!r} not in (0, {lam_max!r})")
    S = np.asarray(S_spec(np.arange(kernel.n)), dtype=float)
    pf = np.asarray(f_values, dtype=float)
    acc = np.zeros_like(S)
    ps = S
    for k in range(N):
        acc += ps
        ps = m @ ps
        pf = m @ pf
    expo = lam * pf + 4 * lam ** 2 / (kappa * plan.T ** 2) * acc
    return expo if log else np.exp(expo)
