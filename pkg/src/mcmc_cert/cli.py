"""``mcmc-cert`` command-line driver.

All inputs and outputs are JSON documents carrying ``"schema_version": "v1"``;
tail curves can also be exported as CSV.  Exit codes: 0 success,
2 non-positive curvature, 3 a VIOLATED validation verdict, 1 anything else.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile

import jsonschema
import numpy as np

from . import bounds as B
from . import chains
from . import diagnostics as D
from . import harness as H
from .core import FiniteDistribution, FiniteMetricSpace, LipschitzObservable, MarkovKernel
from .errors import McmcCertError, NonPositiveCurvature, SpecError
from .transport import kantorovich_dual, wasserstein1

SCHEMA_VERSION = "v1"
EXIT_OK, EXIT_ERROR, EXIT_CURVATURE, EXIT_VIOLATED = 0, 1, 2, 3

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer"}
_matrix = {"type": "array", "items": {"type": "array", "items": _num}, "minItems": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


FAMILY_PARAMS = {
    "hypercube": _obj({"N": {"type": "integer", "minimum": 1, "maximum": 20}}, ["N"]),
    "ising": _obj({
        "edges": {"type": "array", "items": {"type": "array", "items": _int,
                                              "minItems": 2, "maxItems": 2}},
        "beta": {"type": "number", "minimum": 0}, "h": _num,
        "n_vertices": {"type": "integer", "minimum": 1},
    }, ["edges", "beta"]),
    "binomial": _obj({"d": {"type": "integer", "minimum": 1}, "lambda": _pos}, ["d", "lambda"]),
    "mm_infty_discrete": _obj({"d": {"type": "integer", "minimum": 1}, "lambda": _pos,
                               "t": _pos, "steps": {"type": "integer", "minimum": 1}},
                              ["d", "lambda", "t", "steps"]),
    "uniform_reset": _obj({"m": {"type": "integer", "minimum": 1}}, ["m"]),
    "custom": _obj({"matrix": _matrix, "distance_matrix": _matrix}, ["matrix", "distance_matrix"]),
    "euler_sde": _obj({"dim": {"type": "integer", "minimum": 1}, "dt": _pos, "alpha": _pos,
                       "drift_matrix": _matrix, "rho": _matrix, "trunc_R": _pos},
                      ["dim", "dt"]),
    "state_space": _obj({"r": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                         "noise_scale": _pos, "dim": {"type": "integer", "minimum": 1}},
                        ["r"]),
}

CHAIN_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "family": {"enum": sorted(FAMILY_PARAMS)},
        "params": {"type": "object"},
    },
    "required": ["family", "params"],
    "additionalProperties": False,
}

OBS_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "builtin": {"enum": ["magnetization", "fraction_zero", "identity", "coordinate",
                             "values"]},
        "index": {"type": "integer", "minimum": 0},
        "values": {"type": "array", "items": _num},
        "lip": _pos,
    },
    "required": ["builtin"],
    "additionalProperties": False,
}

DIST_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "support": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "weights": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "distance_matrix": _matrix,
    },
    "required": ["support", "weights"],
    "additionalProperties": False,
}


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def _pointer(path):
    return "/" + "/".join(str(p) for p in path)


def validate_doc(doc, schema, prefix=""):
    """Raise SpecError naming the JSON pointer of the first schema violation."""
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc),
                    key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise SpecError(e.message, pointer=prefix + _pointer(e.absolute_path))


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(str(exc), pointer="") from exc


def build_chain(doc):
    """MarkovKernel (and, for mm_infty_discrete, its adapter) from a chain document."""
    validate_doc(doc, CHAIN_SCHEMA)
    fam, p = doc["family"], doc["params"]
    validate_doc(p, FAMILY_PARAMS[fam], "/params")
    if fam == "hypercube":
        return chains.hypercube(p["N"]), None
    if fam == "ising":
        return chains.ising_heat_bath(p["edges"], p["beta"], p.get("h", 0.0),
                                      p.get("n_vertices")), None
    if fam == "binomial":
        return chains.binomial_chain(p["d"], p["lambda"]), None
    if fam == "mm_infty_discrete":
        return chains.mm_infty_discrete(p["lambda"], p["d"], p["t"], p["steps"])
    if fam == "uniform_reset":
        return chains.uniform_reset(p["m"]), None
    if fam == "custom":
        space = FiniteMetricSpace.from_matrix(np.asarray(p["distance_matrix"], float))
        return MarkovKernel.from_dense(np.asarray(p["matrix"], float), space, label="custom"), None
    if fam == "euler_sde":
        dim = p["dim"]
        A = np.asarray(p.get("drift_matrix", -np.eye(dim)), float)
        rho = np.asarray(p.get("rho", np.eye(dim)), float)
        if A.shape != (dim, dim) or rho.shape != (dim, dim):
            raise SpecError("matrix shape does not match dim", pointer="/params")
        return chains.euler_sde(lambda X: X @ A.T, rho, dim, p["dt"], p.get("alpha", 1.0),
                                p.get("trunc_R", 6.0)), None
    return chains.linear_state_space(p["r"], p.get("noise_scale", 1.0), p.get("dim", 1)), None


def build_observable(doc, kernel):
    validate_doc(doc, OBS_SCHEMA)
    name = doc["builtin"]
    space = kernel.space
    if name == "magnetization":
        n = int(round(math.log2(space.n)))
        obs = chains.magnetization(n)
    elif name == "fraction_zero":
        n = int(round(math.log2(space.n)))
        obs = chains.fraction_zero(n)
    elif name == "identity":
        if kernel.exact:
            obs = chains.identity_observable(space)
        else:
            obs = LipschitzObservable(1.0, func=lambda X: np.asarray(X)[:, 0], name="identity")
    elif name == "coordinate":
        i = doc.get("index", 0)
        if kernel.exact:
            obs = LipschitzObservable.from_table(space.points[:, i].astype(float), space,
                                                 name=f"coordinate{i}")
        else:
            obs = LipschitzObservable(1.0, func=lambda X: np.asarray(X)[:, i],
                                      name=f"coordinate{i}")
    else:
        if "values" not in doc:
            raise SpecError("builtin 'values' needs a values array", pointer="/values")
        if len(doc["values"]) != kernel.n:
            raise SpecError("values length does not match the state space", pointer="/values")
        obs = LipschitzObservable.from_table(doc["values"], space, doc.get("lip"), name="values")
        return obs
    if "lip" in doc:
        obs = LipschitzObservable(float(doc["lip"]), values=obs.values, func=obs.func,
                                  name=obs.name)
        if obs.values is not None:
            obs.verify(space)
    return obs


def build_distribution(doc, prefix=""):
    validate_doc(doc, DIST_SCHEMA, prefix)
    if len(doc["support"]) != len(doc["weights"]):
        raise SpecError("support and weights differ in length", pointer=prefix + "/weights")
    return FiniteDistribution(doc["support"], doc["weights"])


def _start(arg, kernel):
    if arg is None:
        return 0 if kernel.exact else [0.0] * kernel.space.dim
    value = json.loads(arg)
    if isinstance(value, dict):
        return build_distribution(value, "/start")
    return value


def _seed(arg):
    if arg is not None:
        return arg
    env = os.environ.get("MCMC_CERT_SEED")
    if env is None:
        raise SpecError("no --seed given and MCMC_CERT_SEED unset", pointer="/seed")
    return int(env)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    return obj


def dumps(doc):
    # json uses repr for floats: shortest round-trip form, up to 17 digits
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def write_atomic(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".mcmc-cert-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, kind, body, summary):
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind, **body, "summary": summary}
    text = dumps(doc)
    if args.out:
        write_atomic(args.out, text)
    print("\n".join(f"{k}: {v}" for k, v in summary.items()))
    return doc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _diagnostics(kernel, args):
    """Finite-mode bundle with an S function attached.

    The binomial chain uses its closed-form S; other chains use the ratio
    table sigma^2/(n kappa) itself, which dominates trivially.
    """
    if not kernel.exact:
        return None
    S = chains.binomial_S(kernel) if kernel.meta.get("family") == "binomial" else None
    pairs = args.pairs or ("neighbors" if kernel.space.neighbor_pairs is not None else "all")
    bundle = D.diagnose(kernel, pairs, S=S, n_mode=args.n_mode, threads=args.threads)
    if bundle.S_spec is None:
        S = D.SSpec.exact(bundle.ratio_table, kernel.space, bundle.pi)
        bundle = dataclasses.replace(bundle, S_spec=S)
    return bundle


def _sampler_summary(kernel):
    return {k: v for k, v in kernel.meta.items() if not callable(v)}


def cmd_diagnose(args):
    kernel, _ = build_chain(_read_json(args.chain))
    bundle = _diagnostics(kernel, args)
    if bundle is None:
        body = {"chain": kernel.label, "mode": "sampler", "analytic": _sampler_summary(kernel)}
        summary = {"chain": kernel.label, "kappa_lower": kernel.meta.get("kappa_lower")}
    else:
        body = {"chain": kernel.label, "mode": "exact", "diagnostics": bundle.to_dict()}
        summary = {"chain": kernel.label, "kappa": bundle.kappa,
                   "witness_pair": list(bundle.report.witness_pair),
                   "sup_ratio": bundle.sup_ratio, "sigma_inf": bundle.sigma_inf}
    _emit(args, "diagnostics", body, summary)
    return EXIT_OK


def _observable(args, kernel):
    if args.obs:
        return build_observable(_read_json(args.obs), kernel)
    return None


def _plan(args, kernel, obs):
    lip = args.lip if args.lip is not None else (obs.lip_norm if obs is not None else 1.0)
    return B.RunPlan(args.T, args.T0, lip, _start(args.start, kernel))


def _sampler_kappa(kernel):
    m = kernel.meta
    kappa = m.get("kappa", m.get("kappa_lower"))
    if kappa is None:
        raise McmcCertError("chain has no attached curvature bound")
    return kappa


def build_certificates(kernel, plan, args, adapter=None):
    """Bias, variance, MSE, confidence radius and concentration certificates."""
    certs = []
    if kernel.exact:
        bundle = _diagnostics(kernel, args)
        kappa = bundle.kappa
        if isinstance(plan.start, FiniteDistribution):
            ecc_x = plan.start.expect(bundle.ecc)
        else:
            ecc_x = float(bundle.ecc[int(plan.start)])
        bias = B.bias_bound(plan, kappa, ecc_x)
        var_u = B.variance_bound_uniform(plan, kappa, bundle.sup_ratio)
        var_s = B.variance_bound_S(plan, kappa, bundle.S_spec, ecc_x)
        certs += [bias, var_u, var_s, B.mse_decomposition(bias, var_u),
                  B.mse_decomposition(bias, var_s)]
        conc = {"uniform": dict(kappa=kappa, sup_ratio=bundle.sup_ratio,
                                sigma_inf=bundle.sigma_inf),
                "S": dict(kappa=kappa, sigma_inf=bundle.sigma_inf, S_spec=bundle.S_spec,
                          ecc_x=ecc_x)}
        if args.alpha is not None:
            for which, kw in conc.items():
                certs.append(B.confidence_radius(plan, alpha=args.alpha, which=which, **kw))
        for r in args.r or []:
            rn = r / plan.lip_norm
            certs.append(B.concentration_uniform(plan, kappa, bundle.sup_ratio,
                                                 bundle.sigma_inf, rn))
            certs.append(B.concentration_S(plan, kappa, bundle.S_spec, ecc_x,
                                           bundle.sigma_inf, rn))
        if adapter is not None:
            for r in args.r or []:
                certs.append(adapter.continuous_bound(r / plan.lip_norm, int(plan.start)))
        return certs, bundle.to_dict()
    m = kernel.meta
    kappa = _sampler_kappa(kernel)
    if m.get("family") == "euler_sde" and m.get("S_C") == 0:
        x0 = np.asarray(plan.start, float).reshape(1, -1)
        S = D.SSpec(0.0, float(m["S"](x0)[0]), mean_source="exact")
        sigma_inf = m["support_radius"]
    elif m.get("family") == "state_space" and "S_const" in m:
        S = D.SSpec(0.0, m["S_const"], mean_source="exact")
        sigma_inf = None
    else:
        raise McmcCertError(f"no certificate recipe for sampler chain {kernel.label!r}")
    certs.append(B.variance_bound_S(plan, kappa, S, 0.0))
    if sigma_inf is not None:
        if args.alpha is not None:
            certs.append(B.confidence_radius(plan, alpha=args.alpha, which="S", kappa=kappa,
                                             sigma_inf=sigma_inf, S_spec=S, ecc_x=0.0))
        for r in args.r or []:
            certs.append(B.concentration_S(plan, kappa, S, 0.0, sigma_inf, r / plan.lip_norm))
    return certs, {"kappa_lower": kappa, "S": S.to_dict(), "sigma_inf": sigma_inf}


def cmd_bound(args):
    kernel, adapter = build_chain(_read_json(args.chain))
    obs = _observable(args, kernel)
    plan = _plan(args, kernel, obs)
    certs, diag = build_certificates(kernel, plan, args, adapter)
    summary = {"chain": kernel.label, "T": plan.T, "T0": plan.T0, "lip": plan.lip_norm}
    for c in certs:
        summary[f"{c.kind}/{c.formula_id}"] = c.value
    _emit(args, "certificates", {"chain": kernel.label, "plan": plan.to_dict(),
                                 "diagnostics": diag,
                                 "certificates": [c.to_dict() for c in certs]}, summary)
    return EXIT_OK


def cmd_simulate(args):
    kernel, _ = build_chain(_read_json(args.chain))
    obs = build_observable(_read_json(args.obs), kernel)
    plan = _plan(args, kernel, obs)
    ens = H.run_ensemble(kernel, obs, plan, args.replicas, _seed(args.seed), args.radii or (),
                         threads=args.threads)
    summary = {"chain": kernel.label, "replicas": ens.replicas,
               "mean": ens.empirical_mean_of_means, "variance": ens.empirical_variance}
    _emit(args, "ensemble", {"chain": kernel.label, "ensemble": ens.to_dict()}, summary)
    return EXIT_OK


def cmd_validate(args):
    kernel, adapter = build_chain(_read_json(args.chain))
    obs = build_observable(_read_json(args.obs), kernel)
    plan = _plan(args, kernel, obs)
    certs, diag = build_certificates(kernel, plan, args, adapter)
    report = H.validate_certificates(kernel, obs, plan, certs, args.replicas, _seed(args.seed),
                                     threads=args.threads)
    if args.csv and report.ensemble is not None:
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(args.csv)))
        os.close(fd)
        H.write_tail_csv(tmp, report.ensemble, certs)
        os.replace(tmp, args.csv)
    summary = {"chain": kernel.label, **report.to_dict()["summary"]}
    _emit(args, "validation", {"chain": kernel.label, "plan": plan.to_dict(),
                               "certificates": [c.to_dict() for c in certs],
                               "report": report.to_dict()}, summary)
    return EXIT_VIOLATED if report.any_violated else EXIT_OK


def cmd_w1(args):
    da, db = _read_json(args.a), _read_json(args.b)
    mu = build_distribution(da, "/a")
    nu = build_distribution(db, "/b")
    if args.chain:
        space = build_chain(_read_json(args.chain))[0].space
    else:
        dm = da.get("distance_matrix", db.get("distance_matrix"))
        if dm is None:
            raise SpecError("a distance_matrix or --chain is required", pointer="/distance_matrix")
        if "distance_matrix" in da and "distance_matrix" in db and da["distance_matrix"] != db["distance_matrix"]:
            raise SpecError("the two files carry different distance matrices",
                            pointer="/b/distance_matrix")
        space = FiniteMetricSpace.from_matrix(np.asarray(dm, float))
    value, plan = wasserstein1(mu, nu, space)
    dual, pot = kantorovich_dual(mu, nu, space)
    body = {"value": value, "dual_value": dual,
            "plan": [[s, t, m] for s, t, m in plan.pairs],
            "potential": {"support": pot.support.tolist(), "values": pot.values.tolist()}}
    _emit(args, "w1", body, {"w1": value, "dual": dual})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="mcmc-cert", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=1)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, obs_required=False):
        sp.add_argument("--chain", required=True)
        sp.add_argument("--obs", required=obs_required)
        sp.add_argument("--T", type=int, required=True)
        sp.add_argument("--T0", type=int, default=0)
        sp.add_argument("--lip", type=float)
        sp.add_argument("--start", help="state index, coordinate list or distribution JSON")
        sp.add_argument("--out")

    def diag_opts(sp):
        sp.add_argument("--pairs", choices=["all", "neighbors"],
                        help="default: neighbors when the space lists them, else all")
        sp.add_argument("--n-mode", dest="n_mode", choices=["one", "moment"], default="moment")

    d = sub.add_parser("diagnose")
    d.add_argument("--chain", required=True)
    d.add_argument("--out")
    diag_opts(d)
    d.set_defaults(func=cmd_diagnose)

    b = sub.add_parser("bound")
    common(b)
    diag_opts(b)
    b.add_argument("--alpha", type=float)
    b.add_argument("--r", type=float, nargs="+")
    b.set_defaults(func=cmd_bound)

    s = sub.add_parser("simulate")
    common(s, obs_required=True)
    s.add_argument("--replicas", type=int, required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--radii", type=float, nargs="+", help="normalized radii r / ||f||_Lip")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate")
    common(v, obs_required=True)
    diag_opts(v)
    v.add_argument("--replicas", type=int, required=True)
    v.add_argument("--seed", type=int)
    v.add_argument("--alpha", type=float, default=0.05)
    v.add_argument("--r", type=float, nargs="+")
    v.add_argument("--csv")
    v.set_defaults(func=cmd_validate)

    w = sub.add_parser("w1")
    w.add_argument("a")
    w.add_argument("b")
    w.add_argument("--chain")
    w.add_argument("--out")
    w.set_defaults(func=cmd_w1)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonPositiveCurvature as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_CURVATURE
    except McmcCertError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
