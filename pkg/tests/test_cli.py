import csv
import json

import numpy as np
import pytest

from conftest import CONFIGS
from oracles import CONV_AT_ORIGIN, bell_states, concurrence_squared
from roofbench.cli import (EXIT_CERT_FAIL, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, emit_graph_data, grid_targets,
                           main, parse_config)
from roofbench.errors import UnsupportedScaleError
from roofbench.poly import Polynomial
from roofbench.roof import RoofProblem
from roofbench.variety import Variety

CIRCLE = {"generators": ["x1^2 + x2^2 - 1"], "ambient_dim": 2, "expected_dim": 1}


def write_config(tmp_path, name="cfg", **kw):
    raw = {"name": name, "kind": "roof", "variety": CIRCLE, "function": "x1^3",
           "solver": {"seed": 0, "restarts": 8, "m_max": 3}}
    raw.update(kw)
    path = tmp_path / f"{name}.cfg"
    path.write_text(json.dumps(raw))
    return path


def pair(z):
    return [float(np.real(z)), float(np.imag(z))]


def test_run_writes_csv_and_json(tmp_path):
    cfg = write_config(tmp_path, targets=[[0, 0], [0.6, 0.8]])
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == EXIT_OK
    rows = list(csv.reader(open(out / "cfg.csv")))
    assert rows[0] == ["x1", "x2", "value", "m", "status", "certified"]
    assert float(rows[1][2]) == pytest.approx(CONV_AT_ORIGIN, abs=1e-8)
    # full round-trip precision
    assert float(rows[1][2]) == json.loads((out / "cfg.json").read_text())["results"][0]["value"]
    doc = json.loads((out / "cfg.json").read_text())
    assert doc["results"][1]["m"] == 1


def test_infeasible_target_exit_code(tmp_path):
    cfg = write_config(tmp_path, targets=[[0, 0], [3, 0]])
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == EXIT_INFEASIBLE
    doc = json.loads((tmp_path / "cfg.json").read_text())
    assert doc["results"][1]["status"] == "infeasible" and doc["results"][1]["value"] is None


def test_certified_run(tmp_path):
    cfg = write_config(tmp_path, targets=[[0, 0], [0.9, 0]],
                       solver={"seed": 0, "restarts": 8, "m_max": 3, "certify": True, "cert_restarts": 16})
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "cfg.json").read_text())
    assert all(r["certificate_passed"] for r in doc["results"])


def test_missing_seed_is_config_error(tmp_path):
    cfg = write_config(tmp_path, targets=[[0, 0]], solver={"restarts": 4})
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["run", str(cfg), "--seed", "3", "--out", str(tmp_path)]) == EXIT_OK


def test_bad_polynomial_names_token(tmp_path, capsys):
    cfg = write_config(tmp_path, targets=[[0, 0]], function="x1^3 + z")
    assert main(["run", str(cfg)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "token 'z'" in err


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == EXIT_CONFIG
    assert main(["run", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG


def test_certify_stored_certificate(tmp_path):
    cfg = CONFIGS / "circle_tritangent.cfg"
    cert = CONFIGS / "circle_tritangent_certificate.json"
    report = tmp_path / "report.json"
    assert main(["certify", str(cfg), str(cert), "--out", str(report)]) == EXIT_OK
    assert json.loads(report.read_text())["passed"] is True

    tampered = json.loads(cert.read_text())
    tampered["decomposition"]["weights"][0] += 1e-3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(tampered))
    assert main(["certify", str(cfg), str(bad), "--out", str(report)]) == EXIT_CERT_FAIL

    bad.write_text(json.dumps({"status": "no_solution"}))
    assert main(["certify", str(cfg), str(bad)]) == EXIT_INFEASIBLE


def test_certify_kind_without_solution(tmp_path):
    cfg = write_config(tmp_path, kind="certify", targets=[[0.5, 0]], m=1)
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == EXIT_INFEASIBLE
    cfg = write_config(tmp_path, name="noM", kind="certify", targets=[[0.0, 0.0]])
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_graph_sample_count(tmp_path):
    cfg = write_config(tmp_path, graph={"samples": 37})
    assert main(["graph", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    rows = list(csv.reader(open(tmp_path / "cfg_graph.csv")))
    assert rows[0] == ["x1", "x2", "z"] and len(rows) == 38
    pts = np.array(rows[1:], dtype=float)
    np.testing.assert_allclose(np.hypot(pts[:, 0], pts[:, 1]), 1, atol=1e-12)
    np.testing.assert_allclose(pts[:, 2], pts[:, 0] ** 3, atol=1e-12)


def test_graph_of_zero_function_is_flat():
    S = Variety.from_strings(["x1^2 + x2^2 + x3^2 - 1"], 3, 2)
    data = emit_graph_data(RoofProblem(S, Polynomial.zero(3)), 50)
    assert data.shape == (50, 4)
    assert np.all(data[:, 3] == 0)
    with pytest.raises(UnsupportedScaleError):
        emit_graph_data(RoofProblem(Variety.from_strings(["x1"], 1, 0), Polynomial.zero(1)), 5)


def test_grid_targets_region():
    closed = grid_targets({"bounds": [[-1, 1], [-1, 1]], "resolution": 9, "region": {"radius": 1}}, 2)
    opened = grid_targets({"bounds": [[-1, 1], [-1, 1]], "resolution": 9, "region": {"radius": 1, "open": True}}, 2)
    assert len(closed) == 49 and len(opened) == 45


def test_parse_config_overrides():
    cfg = parse_config({"variety": CIRCLE, "function": "x1", "solver": {"seed": 1}}, overrides={"restarts": 3})
    assert cfg.solver.restarts == 3 and cfg.solver.seed == 1


def test_quantum_subcommands(tmp_path, capsys):
    bell = bell_states()["phi+"]
    state = tmp_path / "bell.json"
    state.write_text(json.dumps({"state": [pair(z) for z in bell], "dims": [2, 2]}))
    assert main(["quantum", "measure", str(state)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(1.0, abs=1e-12)
    assert main(["quantum", "purity", str(state)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["is_pure"] is True
    assert main(["quantum", "embed", str(state), "--basis", "tensor"]) == EXIT_OK
    assert len(json.loads(capsys.readouterr().out)["coefficients"]) == 15

    rho = 0.8 * np.outer(bell, bell) + 0.2 * np.diag([0, 1, 0, 0])
    mixed = tmp_path / "mixed.json"
    mixed.write_text(json.dumps({"rho": [[pair(z) for z in row] for row in rho]}))
    out = tmp_path / "eof.json"
    assert main(["quantum", "eof", str(mixed), "--dims", "2", "2", "--restarts", "8", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["value"] == pytest.approx(concurrence_squared(rho), abs=1e-6)
    assert main(["quantum", "eof", str(mixed)]) == EXIT_CONFIG
    assert main(["quantum", "embed", str(mixed), "--dim", "3"]) == EXIT_CONFIG


def test_quantum_csv_input(tmp_path, capsys):
    path = tmp_path / "rho.csv"
    path.write_text("0.5,0,0,0\n0,0,0.5,0\n")
    assert main(["quantum", "purity", str(path)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["is_pure"] is False


def test_run_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, targets=[[0.1, 0.2], [-0.3, 0.4]])
    main(["run", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", str(cfg), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "cfg.json").read_bytes() == (tmp_path / "b" / "cfg.json").read_bytes()
    assert (tmp_path / "a" / "cfg.csv").read_bytes() == (tmp_path / "b" / "cfg.csv").read_bytes()
