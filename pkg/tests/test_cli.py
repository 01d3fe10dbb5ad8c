import json

import pytest

from virialkit import __version__
from virialkit.cli import ConfigError, main, parse_config, render, run, validate_config
from virialkit.operators import DirichletSpectralSolver
from virialkit.lattice import GridSpec

CERT = {"task": "certify", "grid": {"d": 3, "L": 6, "n": 16},
        "problem": {"potential": {"name": "imaginary_gaussian", "params": {"amplitude": 0.05}}},
        "certify": {"conditions": ["SUBORDINATE", "SMALL_IMAGINARY"]}}
EIGS = {"task": "eigs", "grid": {"d": 1, "L": 10, "n": 512},
        "problem": {"potential": {"name": "harmonic"}}, "eigs": {"k": 3}}


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(p)


def test_minimal_certify_valid(tmp_path):
    doc = {"task": "certify", "grid": {"d": 3, "L": 10, "n": 16},
           "problem": {"potential": {"name": "coulomb"}}, "certify": {"conditions": ["REPULSIVE"]}}
    assert parse_config(_write(tmp_path, doc)) == doc


def test_bad_dimension_path():
    with pytest.raises(ConfigError) as exc:
        validate_config({"task": "eigs", "grid": {"d": 0, "L": 1, "n": 8}})
    assert any(p.startswith("grid.d:") for p in exc.value.problems)


def test_unknown_condition_lists_valid():
    doc = dict(CERT, certify={"conditions": ["BOGUS"]})
    with pytest.raises(ConfigError) as exc:
        validate_config(doc)
    assert "SMALL_IMAGINARY" in str(exc.value) and "certify.conditions.0" in str(exc.value)


def test_unknown_keys_and_all_violations():
    with pytest.raises(ConfigError) as exc:
        validate_config({"task": "eigs", "grid": {"d": 9, "L": -1, "n": 8, "x": 1}, "junk": 0})
    assert len(exc.value.problems) >= 4


def test_parse_error_position(tmp_path):
    with pytest.raises(ConfigError, match="line 2, column"):
        parse_config(_write(tmp_path, '{"task":\n  }'))


def test_certify_exit_zero():
    rep = run(CERT)
    assert rep.exit_code == 0 and rep.version == __version__
    verdicts = [c["verdict"] for c in rep.payload["certificates"]]
    assert verdicts == ["CERTIFIED_ABSENCE", "CERTIFIED_ABSENCE"]
    assert len(rep.config_sha256) == 64


def test_eigs_oscillator_csv():
    text = render(run(EIGS), "csv").splitlines()
    assert text[0] == "index,lambda_re,lambda_im,residual"
    vals = [float(line.split(",")[1]) for line in text[1:]]
    assert vals == pytest.approx([1, 3, 5], abs=1e-2)


def test_scan_flag_exit_two():
    g = GridSpec(3, 5.0, 8)
    lam0 = float(DirichletSpectralSolver(g).eigenvalues.min())
    doc = {"task": "resolvent-scan", "grid": {"d": 3, "L": 5.0, "n": 8},
           "resolvent": {"lambdas": [[lam0, 0.0], [-1, 0]]}}
    rep = run(doc)
    assert rep.exit_code == 2
    assert rep.payload["rows"][0]["flagged"]


def test_error_exit_one():
    doc = {"task": "eigs", "grid": {"d": 1, "L": 1, "n": 8},
           "problem": {"potential": {"real": [1.0, 2.0]}}}
    rep = run(doc)
    assert rep.exit_code == 1 and "problem.potential.real" in rep.error["message"]
    assert run({"task": "eigs"}).exit_code == 1


def test_json_csv_rows_agree():
    doc = {"task": "resolvent-scan", "grid": {"d": 3, "L": 5.0, "n": 8},
           "resolvent": {"lambdas": [[-1, 0], [0, 1], [1, 0.5]]}}
    rep = run(doc)
    assert len(json.loads(render(rep, "json"))["payload"]["rows"]) == \
        len(render(rep, "csv").strip().splitlines()) - 1


def test_empty_payload_header_only():
    doc = {"task": "resolvent-scan", "grid": {"d": 3, "L": 5.0, "n": 8},
           "resolvent": {"lambdas": []}}
    assert render(run(doc), "csv") == \
        "lambda_re,lambda_im,region,weighted_norm,unweighted_norm,bound,pass\n"


@pytest.mark.parametrize("doc", [
    EIGS,
    {"task": "virial", "grid": {"d": 1, "L": 8, "n": 128}, "problem": {"potential": {"name": "harmonic"}}},
    {"task": "evolve", "grid": {"d": 1, "L": 20, "n": 256}, "evolve": {"dt": 0.01, "steps": 50, "stride": 10}},
    {"task": "dynamics", "dynamics": {"potential": {"name": "repulsive_root"}, "x0": [1, 0],
                                      "p0": [0, 0], "dt": 0.01, "steps": 200, "a": 1}},
    {"task": "dirac-check", "grid": {"d": 3, "L": 3, "n": 4},
     "problem": {"magnetic": {"name": "constant_field", "B": [0, 0, 0.5]}, "mass": 1.0},
     "dirac": {}},
])
def test_tasks_deterministic(doc):
    a, b = run(doc, seed=5), run(doc, seed=5)
    assert a.exit_code in (0, 2)
    assert render(a, "csv") == render(b, "csv")
    ja, jb = json.loads(render(a)), json.loads(render(b))
    ja.pop("wall_time"), jb.pop("wall_time")
    assert ja == jb and ja["seed"] == 5


def test_main_writes_files(tmp_path, monkeypatch):
    monkeypatch.setenv("VIRIALKIT_WORKERS", "2")
    cfg = _write(tmp_path, CERT)
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["--config", cfg, "--out", str(out1), "--format", "csv"]) == 0
    assert main(["--config", cfg, "--out", str(out2), "--format", "csv", "--workers", "1"]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert out1.read_text().startswith("condition,verdict,threshold,constants,caveats\n")


def test_main_bad_config(tmp_path, capsys):
    assert main(["--config", _write(tmp_path, {"task": "nope", "grid": {"d": 1, "L": 1, "n": 8}})]) == 1
    assert "task" in capsys.readouterr().err
    assert main(["--config", str(tmp_path / "missing.json")]) == 1
