import json
import math

import numpy as np
import pytest

from stargraph.cli import main, parse_grid
from stargraph.inverse import PhiSamples
from stargraph.model import Problem, save_problem

SQRT2 = math.sqrt(2.0)


@pytest.fixture
def workdir(tmp_path):
    save_problem(Problem.from_lengths([1, 1]), tmp_path / "free.json")
    save_problem(Problem.from_lengths([1, SQRT2], [[0.3, -0.1, 0.05], [0.2, 0.0, 0.0]]), tmp_path / "p.json")
    (tmp_path / "init.json").write_text(json.dumps(
        {"potentials": [{"re": [0.25, -0.13, 0.03]}, {"re": [0.24, 0.02, -0.01]}]}))
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_spectrum_csv(workdir, capsys):
    code, out, _ = run(capsys, "spectrum", "--input", workdir / "free.json", "--rmax", 20)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "re_z,im_z,multiplicity,structural"
    rows = [line.split(",") for line in lines[1:]]
    assert rows[0] == ["0", "0", "2", "true"]
    mods = [abs(complex(float(r[0]), float(r[1]))) for r in rows]
    assert mods == sorted(mods)
    assert len(rows) == 1 + 2 * 12


def test_density_json(workdir, capsys):
    code, out, _ = run(capsys, "density", "--input", workdir / "free.json", "--rmax", 100, "--radii", 20)
    assert code == 0
    data = json.loads(out)
    assert {"slope", "intercept", "residual", "radii", "counts"} <= set(data)
    assert data["slope"] == pytest.approx(2 / math.pi, rel=0.02)
    assert len(data["radii"]) == 20


def test_verify_reports_each_suite(workdir, capsys):
    code, out, _ = run(capsys, "verify", "--input", workdir / "p.json")
    assert code == 0
    data = json.loads(out)
    assert set(data["suites"]) == {"identity", "parity", "reality", "nonlocal-residual"}
    assert data["passed"]


def test_seed_from_environment(workdir, capsys, monkeypatch):
    monkeypatch.setenv("STARGRAPH_SEED", "17")
    code, out, _ = run(capsys, "verify", "--input", workdir / "p.json")
    assert code == 0 and json.loads(out)["seed"] == 17
    monkeypatch.setenv("STARGRAPH_SEED", "x")
    code, _, err = run(capsys, "verify", "--input", workdir / "p.json")
    assert code == 1 and "STARGRAPH_SEED" in json.loads(err)["error"]


def test_char_eval_grids(workdir, capsys):
    code, out, _ = run(capsys, "char-eval", "--input", workdir / "free.json", "--grid", "re:0:30:600")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "re_z,im_z,re_phi,im_phi"
    assert len(lines) == 601
    z, _, re, im = (float(v) for v in lines[100].split(","))
    assert re == pytest.approx(z * math.sin(2 * z), abs=1e-13)
    assert im == 0
    code, out, _ = run(capsys, "char-eval", "--input", workdir / "free.json",
                       "--grid", "re:0:1:3", "--grid", "re:0:1:2:0.5")
    assert code == 0 and len(out.splitlines()) == 6
    assert out.splitlines()[-1].split(",")[1] == "0.5"


def test_invert_round_trip(workdir, capsys):
    phi = workdir / "phi.csv"
    assert run(capsys, "char-eval", "--input", workdir / "p.json", "--nodes", "standard", "--output", phi)[0] == 0
    assert len(PhiSamples.from_csv(phi).nodes) == 250
    code, out, _ = run(capsys, "invert", "--target", phi, "--graph", workdir / "p.json", "--order", 3,
                       "--init", workdir / "init.json")
    assert code == 0
    rep = json.loads(out)
    assert rep["converged"]
    got = np.array([rep["recovered"][0]["re"], rep["recovered"][1]["re"]])
    assert np.max(np.abs(got - [[0.3, -0.1, 0.05], [0.2, 0, 0]])) <= 1e-6


def test_invert_non_convergence_exits_2(workdir, capsys):
    phi = workdir / "phi.csv"
    run(capsys, "char-eval", "--input", workdir / "p.json", "--nodes", "standard", "--output", phi)
    code, out, err = run(capsys, "invert", "--target", phi, "--graph", workdir / "p.json", "--order", 3,
                         "--max-iter", 1)
    assert code == 2
    diag = json.loads(err)
    assert diag["error"] == "fit did not converge"
    assert not json.loads(out)["converged"]


def test_support(workdir, capsys):
    code, out, _ = run(capsys, "support", "--input", workdir / "p.json")
    assert code == 0
    edges = json.loads(out)["edges"]
    assert edges[0]["extent"] == pytest.approx(1.0, rel=0.05)
    assert edges[1]["extent"] == pytest.approx(SQRT2, rel=0.05)
    code, out, _ = run(capsys, "support", "--input", workdir / "free.json")
    assert code == 0 and all(e["extent"] is None for e in json.loads(out)["edges"])


@pytest.mark.parametrize(
    "argv",
    [
        ["spectrum", "--input", "missing.json", "--rmax", "5"],
        ["bogus"],
        ["char-eval", "--input", "{free}", "--grid", "im:0:1:3"],
        ["char-eval", "--input", "{free}"],
        ["spectrum", "--input", "{bad}", "--rmax", "5"],
        ["spectrum", "--input", "{invalid}", "--rmax", "5"],
        ["invert", "--target", "missing.csv", "--graph", "{free}", "--order", "1"],
    ],
)
def test_input_errors_exit_1(workdir, capsys, argv):
    (workdir / "bad.json").write_text("{")
    (workdir / "invalid.json").write_text(json.dumps({"lengths": [1, -1]}))
    args = [a.format(free=workdir / "free.json", bad=workdir / "bad.json", invalid=workdir / "invalid.json")
            for a in argv]
    code, _, err = run(capsys, *args)
    assert code == 1
    assert err


def test_invalid_problem_diagnostics_are_json(workdir, capsys):
    (workdir / "invalid.json").write_text(json.dumps({"lengths": [1, -1]}))
    code, _, err = run(capsys, "verify", "--input", workdir / "invalid.json")
    assert code == 1
    assert "nonpositive length" in json.loads(err)["diagnostics"]["messages"]


def test_outputs_are_byte_identical(workdir, capsys):
    for verb, extra in (("spectrum", ["--rmax", 12]), ("density", ["--rmax", 40]), ("verify", [])):
        a, b = workdir / f"{verb}1.out", workdir / f"{verb}2.out"
        for path in (a, b):
            assert run(capsys, verb, "--input", workdir / "p.json", "--output", path, *extra)[0] == 0
        assert a.read_bytes() == b.read_bytes()


def test_parse_grid():
    g = parse_grid("re:0:2:3:1")
    assert np.array_equal(g, [1j, 1 + 1j, 2 + 1j])
    with pytest.raises(Exception):
        parse_grid("re:0:2")
