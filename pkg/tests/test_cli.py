import csv
import json
import subprocess
import sys
from pathlib import Path

import jsonschema

from nlhormander.cli import SPEC_VERSION, load_schema, main

DEMOS = Path(__file__).parent.parent / "demos"


def run(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def report(args, command, capsys):
    code, out, err = run(args + ["--json", "-"], capsys)
    rep = json.loads(out)
    assert rep["spec_version"] == SPEC_VERSION
    jsonschema.validate(rep, load_schema(command))
    return code, rep


def test_help_and_usage_errors(capsys):
    assert run(["--help"], capsys)[0] == 0
    assert run([], capsys)[0] == 2
    assert run(["check"], capsys)[0] == 2
    code, _, err = run(["check", "--model", "example9"], capsys)
    assert code == 2 and "example9" in err
    assert run(["check", "--model", "example1", "--box", "3:1"], capsys)[0] == 2
    assert run(["simulate", "--model", "example1", "--threads", "0"], capsys)[0] == 2


def test_check_pass_and_negative_control(capsys, tmp_path):
    code, rep = report(["check", "--model", "example1", "--box", "-10:10", "--c0", "1"], "check", capsys)
    assert code == 0 and rep["passed"] and abs(rep["infimum"] - 1) < 1e-9
    out = tmp_path / "defect.csv"
    code, rep = report(["check", "--model", str(DEMOS / "degenerate.toml"), "--box", "-1:1,-1:1",
                        "--samples", "200", "--out", str(out)], "check", capsys)
    assert code == 1 and rep["infimum"] == 0
    rows = list(csv.reader(out.open(newline="")))
    # polished local minima are appended to the 200 Halton points
    assert rows[0] == ["x1", "x2", "defect"] and len(rows) >= 201
    assert out.read_bytes().count(b"\r\n") == len(rows)


def test_check_bad_expression_file(capsys, tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text('[model]\ndim = 1\ndrift = ["x1 +"]\n')
    code, _, err = run(["check", "--model", str(p)], capsys)
    assert code == 2 and "offset 4" in err


def test_simulate_csv_independent_of_threads(capsys, tmp_path):
    outs = []
    for threads in (1, 3):
        out = tmp_path / f"sim{threads}.csv"
        code, _, _ = run(["simulate", "--model", "example2", "--paths", "300", "--t", "0.5", "--h", "0.01",
                          "--eps", "0.05", "--seed", "4", "--sigma-hat", "--threads", str(threads),
                          "--out", str(out), "--json", str(tmp_path / "r.json")], capsys)
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    header = outs[0].split(b"\r\n")[0].decode()
    assert header.startswith("path,x1,x2,sigma_hat_11")
    rep = json.loads((tmp_path / "r.json").read_text())
    jsonschema.validate(rep, load_schema("simulate"))


def test_simulate_json_via_out(capsys, tmp_path):
    p = tmp_path / "rep.json"
    code, out, _ = run(["simulate", "--model", "example4", "--paths", "50", "--t", "0.2", "--seed", "1",
                        "--out", str(p)], capsys)
    assert code == 0 and out == ""
    assert json.loads(p.read_text())["spec_version"] == SPEC_VERSION


def test_density_example1(capsys, tmp_path):
    out = tmp_path / "dens.csv"
    code, rep = report(["density", "--model", "example1", "--paths", "20000", "--h", "0.01", "--eps", "0.05",
                        "--seed", "3", "--grid", "64", "--out", str(out)], "density", capsys)
    assert code == 0 and rep["passed"]
    assert (tmp_path / "dens_char.csv").exists()
    char = list(csv.reader((tmp_path / "dens_char.csv").open(newline="")))
    assert char[0] == ["axis", "xi1", "modulus", "noise_floor"]


def test_density_negative_control_fails(capsys):
    code, rep = report(["density", "--model", str(DEMOS / "degenerate.toml"), "--paths", "2000",
                        "--grid", "32", "--char-points", "41"], "density", capsys)
    assert code == 1 and not rep["passed"]


def test_laplace_example1(capsys, tmp_path):
    out = tmp_path / "lap.csv"
    code, rep = report(["laplace", "--model", "example1", "--u", "1", "--lambdas", "1,2,5,10,20",
                        "--paths", "2000", "--h", "0.01", "--eps", "0.05", "--seed", "0", "--out", str(out)],
                       "laplace", capsys)
    assert code == 0 and rep["gamma"] is not None
    rows = list(csv.reader(out.open(newline="")))
    assert rows[0] == ["lambda", "estimate", "stderr"] and len(rows) == 6


def test_laplace_no_decay_exit_code(capsys):
    code, rep = report(["laplace", "--model", "example4", "--u", "1,0", "--t", "0.01", "--lambdas", "1,2",
                        "--paths", "20", "--h", "0.001"], "laplace", capsys)
    assert code == 1 and "no observed decay" in rep["flags"]


def test_symmetrize(capsys, tmp_path):
    out = tmp_path / "grad.csv"
    code, rep = report(["symmetrize", "--alpha", "1", "--radius", "1", "--kernel", "1.5 + 0.4*cos(3*z1)",
                        "--verify", "z1^2", "--verify", "1 - cos(z1)", "--out", str(out)], "symmetrize", capsys)
    assert code == 0 and rep["passed"]
    assert all(r["rel_error"] < 1e-5 for r in rep["identity"])
    assert list(csv.reader(out.open(newline="")))[0] == ["radius", "ratio"]


def test_symmetrize_bad_kernel(capsys):
    code, _, _ = run(["symmetrize", "--alpha", "1", "--kernel", "3 + z1^2", "--kappa0", "2"], capsys)
    assert code == 2


def test_kinetic(capsys):
    code, rep = report(["kinetic", "--samples", "400"], "kinetic", capsys)
    assert code == 0 and rep["hormander"]["passed"]


def test_selftest_subset(capsys):
    code, rep = report(["selftest", "--only", "psi_closed_form", "--only", "determinism"], "selftest",
                       capsys)
    assert code == 0 and {c["name"] for c in rep["checks"]} == {"psi_closed_form", "determinism"}


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "nlhormander", "check", "--model", "example1", "--samples",
                        "100", "--json", "-"], capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["passed"]
