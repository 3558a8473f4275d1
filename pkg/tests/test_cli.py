import json
import math
import subprocess
import sys

import pytest

from mcmc_cert.cli import dumps, main

HYPERCUBE4 = {"schema_version": "v1", "family": "hypercube", "params": {"N": 4}}
FRACTION = {"schema_version": "v1", "builtin": "fraction_zero"}


@pytest.fixture
def files(tmp_path):
    def write(name, doc):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        return str(p)
    return write


def _load(path):
    return json.loads(open(path).read())


def test_diagnose_hypercube(files, tmp_path, capsys):
    out = tmp_path / "d.json"
    assert main(["diagnose", "--chain", files("c.json", HYPERCUBE4), "--out", str(out)]) == 0
    doc = _load(out)
    assert doc["schema_version"] == "v1"
    assert abs(doc["summary"]["kappa"] - 0.25) <= 1e-12
    assert "kappa" in capsys.readouterr().out


def test_bound_radius_example(files, tmp_path):
    out = tmp_path / "b.json"
    rc = main(["bound", "--chain", files("c.json", HYPERCUBE4), "--T", "1000", "--lip", "1",
               "--alpha", "0.05", "--out", str(out)])
    assert rc == 0
    certs = {c["formula_id"]: c for c in _load(out)["certificates"]}
    ref = math.sqrt(8 * 16 * math.log(40) / 1000)
    assert certs["radius_uniform"]["value"] == pytest.approx(ref, rel=1e-12)
    assert certs["radius_uniform"]["value"] == pytest.approx(0.687, abs=5e-4)


def test_bound_radius_scales_with_lip(files, tmp_path):
    out = tmp_path / "b.json"
    main(["bound", "--chain", files("c.json", HYPERCUBE4), "--obs", files("o.json", FRACTION),
          "--T", "1000", "--alpha", "0.05", "--out", str(out)])
    certs = {c["formula_id"]: c for c in _load(out)["certificates"]}
    assert certs["radius_uniform"]["value"] == pytest.approx(
        0.25 * math.sqrt(8 * 16 * math.log(40) / 1000), rel=1e-12)


def test_w1_files(files, tmp_path):
    dm = [[0, 1, 2], [1, 0, 1], [2, 1, 0]]
    a = files("a.json", {"support": [0, 1], "weights": [0.5, 0.5], "distance_matrix": dm})
    b = files("b.json", {"support": [1, 2], "weights": [0.5, 0.5], "distance_matrix": dm})
    out = tmp_path / "w.json"
    assert main(["w1", a, a, "--out", str(out)]) == 0
    assert _load(out)["value"] == 0.0
    assert main(["w1", a, b, "--out", str(out)]) == 0
    doc = _load(out)
    assert doc["value"] == pytest.approx(1.0, abs=1e-15)
    assert doc["dual_value"] == pytest.approx(1.0, abs=1e-8)


def test_w1_needs_metric(files, capsys):
    a = files("a.json", {"support": [0], "weights": [1.0]})
    assert main(["w1", a, a]) == 1
    assert "/distance_matrix" in capsys.readouterr().err


def test_schema_error_names_pointer(files, capsys):
    bad = files("c.json", {"family": "hypercube", "params": {"N": "x"}})
    assert main(["diagnose", "--chain", bad]) == 1
    assert "/params/N" in capsys.readouterr().err
    bad = files("c2.json", {"family": "nope", "params": {}})
    assert main(["diagnose", "--chain", bad]) == 1
    assert "/family" in capsys.readouterr().err


def test_nonpositive_curvature_exit_code(files, capsys):
    flip = files("c.json", {"family": "custom", "params": {
        "matrix": [[0, 1], [1, 0]], "distance_matrix": [[0, 1], [1, 0]]}})
    assert main(["diagnose", "--chain", flip]) == 2
    assert "(0, 1)" in capsys.readouterr().err


def test_validate_exit_codes(files, tmp_path):
    chain = files("c.json", HYPERCUBE4)
    obs = files("o.json", FRACTION)
    out, csv_path = tmp_path / "v.json", tmp_path / "tail.csv"
    rc = main(["validate", "--chain", chain, "--obs", obs, "--T", "20", "--replicas", "2000",
               "--seed", "1", "--r", "0.5", "1.0", "--out", str(out), "--csv", str(csv_path)])
    assert rc == 0
    summary = _load(out)["summary"]
    assert summary["VIOLATED"] == 0 and summary["SOUND"] > 0
    assert csv_path.read_text().startswith("formula_id,")


def test_validate_reports_violation(monkeypatch, files):
    import mcmc_cert.cli as cli
    real = cli.build_certificates

    def shrunk(*a, **k):
        certs, diag = real(*a, **k)
        return [type(c)(c.kind, c.formula_id, c.value * 1e-6, c.inputs) for c in certs], diag

    monkeypatch.setattr(cli, "build_certificates", shrunk)
    rc = main(["validate", "--chain", files("c.json", HYPERCUBE4), "--obs", files("o.json", FRACTION),
               "--T", "20", "--replicas", "500", "--seed", "0"])
    assert rc == 3


def test_simulate_is_byte_identical(files, tmp_path):
    chain = files("c.json", {"family": "binomial", "params": {"d": 10, "lambda": 3.0}})
    obs = files("o.json", {"builtin": "identity"})
    outs = []
    for i, threads in enumerate(("1", "4")):
        out = tmp_path / f"s{i}.json"
        main(["--threads", threads, "simulate", "--chain", chain, "--obs", obs, "--T", "30",
              "--replicas", "5000", "--seed", "9", "--radii", "0.5", "1", "--out", str(out)])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    doc = json.loads(outs[0])
    assert dumps(doc).encode() == outs[0]


def test_seed_from_environment(files, tmp_path, monkeypatch):
    chain = files("c.json", HYPERCUBE4)
    obs = files("o.json", FRACTION)
    args = ["simulate", "--chain", chain, "--obs", obs, "--T", "5", "--replicas", "100"]
    monkeypatch.delenv("MCMC_CERT_SEED", raising=False)
    assert main(args) == 1
    monkeypatch.setenv("MCMC_CERT_SEED", "4")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--seed", "4", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_infinite_values_serialize():
    text = dumps({"x": float("inf"), "y": [1.0, float("-inf")]})
    assert json.loads(text) == {"x": "inf", "y": [1.0, "-inf"]}


def test_sampler_families(files, tmp_path):
    for doc in ({"family": "euler_sde", "params": {"dim": 1, "dt": 0.05}},
                {"family": "state_space", "params": {"r": 0.5}},
                {"family": "mm_infty_discrete",
                 "params": {"d": 50, "lambda": 2.0, "t": 1.0, "steps": 50}}):
        chain = files("c.json", doc)
        obs = files("o.json", {"builtin": "identity"} if doc["family"] == "mm_infty_discrete"
                    else {"builtin": "coordinate", "index": 0})
        rc = main(["validate", "--chain", chain, "--obs", obs, "--T", "20", "--replicas", "2000",
                   "--seed", "3", "--out", str(tmp_path / "v.json")])
        assert rc == 0, doc["family"]


def test_entry_point_runs(files):
    proc = subprocess.run([sys.executable, "-m", "mcmc_cert.cli", "diagnose", "--chain",
                           files("c.json", HYPERCUBE4)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "0.25" in proc.stdout
