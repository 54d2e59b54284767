import json
import subprocess
import sys

import jsonschema
import pytest

from sdeident.cli import inputs_hash, load_schema, make_report, run
from sdeident.identifiability import same_information
from sdeident.parsing import parse_expression


def report_of(path):
    data = json.loads(path.read_text())
    jsonschema.validate(data, load_schema())
    return data


def test_analyze_geometric(tmp_path):
    out = tmp_path / "r.json"
    assert run(["analyze", "builtin:geometric2", "--max-order", "2", "--out", str(out)]) == 0
    rep = report_of(out)
    assert rep["status"] == "ok" and rep["command"] == "analyze"
    res = rep["results"]
    assert res["comparison"]["same_information"] is True
    ps = res["params"]
    ours = [parse_expression(t, ps) for t in res["reduced"]]
    published = [parse_expression(t, ps) for t in ["a", "d", "b*c", "b*f", "e", "p*r", "r^2", "s^2"]]
    assert same_information(ours, published, ps)
    assert "b != 0" in res["conditions"]


def test_analyze_lv_full_exit_two(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run(["analyze", "builtin:lv_full", "--out", str(out)]) == 2
    rep = report_of(out)
    assert rep["status"] == "failed"
    assert "stencil offset (0,+1)" in rep["reason"]


def test_known_perturbed(capsys):
    assert run(["known", "ou2", "--regime", "perturbed_ic"]) == 0
    text = capsys.readouterr().out.strip()
    assert text == "{a, b*c, d, e, p, (d*p - b*r)^2 + b^2*s^2}"


def test_usage_errors_exit_one(tmp_path):
    assert run([]) == 1
    assert run(["frobnicate"]) == 1
    assert run(["analyze", str(tmp_path / "missing.sde")]) == 1
    assert run(["known", "nope"]) == 1
    bad = tmp_path / "bad.sde"
    bad.write_text("model z\nstates: x observed, y\nparams: a\ndrift:\n  x: sin(x)\n  y: a\n"
                   "diffusion:\n  x: [1, 0]\n  y: [0, 1]\n")
    assert run(["nse", str(bad)]) == 1


def test_nse_json_file(tmp_path):
    out = tmp_path / "n.json"
    assert run(["nse", "builtin:semilogistic", "--order", "1", "--json", str(out)]) == 0
    rep = report_of(out)
    entry = rep["results"]["nse"][0]
    assert entry["coefficients"]["m[2,0]'"] == "a*b"
    assert entry["conditions"] == ["c != 0"]
    assert entry["provenance"] == ["m[0,1] from m[1,0]'"]


def test_stencil_and_moments(capsys):
    assert run(["stencil", "builtin:cle"]) == 0
    out = capsys.readouterr().out
    assert "applicable" in out and "m[i-2,j+1]" in out
    assert run(["moments", "builtin:ou2", "--order", "1"]) == 0
    out = capsys.readouterr().out
    assert "m[1,0]' = -a*m[1,0] - b*m[0,1] + (a*e + b*f)" in out


def test_ou_csv(tmp_path):
    theta = tmp_path / "t.json"
    theta.write_text(json.dumps({"a": "6/5", "b": 0.4, "c": -0.5, "d": 0.9, "e": 0.5, "f": -0.2,
                                 "p": 0.7, "r": 0.3, "s": 0.8, "x0": 1}))
    csv = tmp_path / "o.csv"
    assert run(["ou", "--model", "builtin:ou2", "--theta", str(theta), "--what", "autocov", "--t", "0:1:5",
                "--csv", str(csv)]) == 0
    lines = csv.read_text().splitlines()
    assert lines[0] == "t,s00,s01,s10,s11" and len(lines) == 6
    assert run(["ou", "--model", "builtin:ou2", "--theta", str(theta), "--what", "sigma", "--t", "0",
                "--csv", str(csv)]) == 0
    first = csv.read_text().splitlines()[1].split(",")
    assert float(first[1]) == 0.0


def test_ou_unstable_is_analysis_failure(tmp_path):
    theta = tmp_path / "t.json"
    theta.write_text(json.dumps({"a": -1, "b": 0, "c": 0, "d": 1, "e": 0, "f": 0, "p": 1, "r": 0, "s": 1}))
    out = tmp_path / "r.json"
    assert run(["ou", "--model", "builtin:ou2", "--theta", str(theta), "--json", str(out)]) == 2
    assert report_of(out)["status"] == "failed"


def test_simulate_and_verify(tmp_path):
    theta = tmp_path / "t.json"
    theta.write_text(json.dumps({"a": 1.2, "b": 0.4, "c": -0.5, "d": 0.9, "e": 0.5, "f": -0.2,
                                 "p": 0.7, "r": 0.3, "s": 0.8, "x0": 1, "y0": 0}))
    paths = tmp_path / "p.csv"
    rep = tmp_path / "s.json"
    assert run(["simulate", "builtin:ou2", "--theta", str(theta), "--n-paths", "20", "--T", "0.5",
                "--out", str(paths), "--json", str(rep)]) == 0
    assert report_of(rep)["results"]["n_paths"] == 20
    assert paths.read_text().startswith("path,t,x,y")
    out = tmp_path / "v.json"
    plots = tmp_path / "plots"
    assert run(["verify", "ou2", "--regime", "perturbed_ic", "--n-paths", "500", "--T", "2",
                "--out", str(out), "--plots", str(plots)]) == 0
    data = report_of(out)
    assert {"theta", "theta_star", "observed", "unobserved", "verdict"} <= set(data["results"])
    assert sorted(p.name for p in plots.iterdir()) == ["autocov.svg", "moments.svg"]


def test_verify_cle_no_pair(tmp_path):
    out = tmp_path / "v.json"
    assert run(["verify", "cle", "--n-paths", "10", "--out", str(out)]) == 2
    assert "full rank" in report_of(out)["reason"]


def test_report_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert run(["analyze", "builtin:lv_simple", "--max-order", "1", "--out", str(p)]) == 0
    assert a.read_text() == b.read_text()


def test_inputs_hash_stable():
    assert inputs_hash("x", {"k": 1}) == inputs_hash("x", {"k": 1})
    assert inputs_hash("x", {"k": 1}) != inputs_hash("x", {"k": 2})
    with pytest.raises(jsonschema.ValidationError):
        rep = make_report("known", None, {}, {})
        rep["status"] = "maybe"
        jsonschema.validate(rep, load_schema())


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sdeident.cli", "known", "lv_simple"], capture_output=True,
                          text=True, timeout=120)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "{a, c, d, p^2, b^2*s^2}"
