import csv
import json
import math

import numpy as np
import pytest

from wpharmonic.cli import RunConfig, main, parse_expression


def run(tmp_path, *argv):
    return main(["--out", str(tmp_path), *argv])


def load(tmp_path, name):
    return json.loads((tmp_path / name).read_text())


def test_bvp_vertical_segment(tmp_path):
    assert run(tmp_path, "geodesic", "--bvp", "1,0", "3,0") == 0
    g = load(tmp_path, "geodesic.json")
    assert g["status"] == "ok" and g["length"] == pytest.approx(2.0, abs=1e-12)


def test_symmetric_constant(tmp_path):
    assert run(tmp_path, "geodesic", "--symmetric", "0.5") == 0
    assert load(tmp_path, "geodesic.json")["phi_infinity"] * 0.25 == pytest.approx(0.37342, abs=1e-5)


def test_ivp_is_symmetric_in_phi_direction(tmp_path):
    assert run(tmp_path, "geodesic", "--ivp", "1,0", "--len", "2") == 0
    with open(tmp_path / "geodesic.csv", newline="") as fh:
        assert fh.readline().startswith("# config-hash: ")
        rows = list(csv.DictReader(fh))
    rho = np.array([float(r["rho"]) for r in rows])
    assert np.allclose(rho, rho[::-1], rtol=1e-12)


def test_distances(tmp_path):
    assert run(tmp_path, "distance", "--p", "1,0", "--q", "3,0") == 0
    assert load(tmp_path, "distance.json")["distance"] == pytest.approx(2.0)
    assert run(tmp_path, "distance", "--p", "0.5,0.2", "--q", "1.25,0.2", "--sheets", "0,2") == 0
    assert load(tmp_path, "distance.json")["distance"] == 1.75
    assert run(tmp_path, "distance", "--product", "R: 0 0 | S: (1 0.2)", "R: 3 4 | S: (1 0.2)") == 0
    assert load(tmp_path, "distance.json")["distance"] == pytest.approx(5.0)


def test_region_membership(tmp_path):
    assert run(tmp_path, "region", "--rho0", "0.5", "--point", "1,0.1") == 0
    r = load(tmp_path, "region.json")
    assert r["contains"] and r["distance"] == 0.0


def test_unknown_key_is_a_config_error(tmp_path):
    assert run(tmp_path, "--set", "bogus.key=1", "mesh") == 4


def test_bad_argument_is_a_config_error(tmp_path):
    assert run(tmp_path, "geodesic") == 4


def test_expression_grammar():
    f = parse_expression("2 + cos(theta)^2")
    assert f(np.array([0.0]))[0] == pytest.approx(3.0)
    assert parse_expression("pi*θ")(np.array([1.0]))[0] == pytest.approx(math.pi)
    with pytest.raises(Exception):
        parse_expression("__import__('os')")


def test_bad_expression_exit_code(tmp_path):
    assert run(tmp_path, "solve", "--rho", "__import__('os')", "--phi", "0") == 4


def test_solve_constant_boundary(tmp_path):
    assert run(tmp_path, "--set", "solve.h=0.1", "solve", "--rho", "1.5", "--phi", "0.3") == 0
    s = load(tmp_path, "solve.json")
    assert s["energy"] == 0.0 and s["report"]["converged"]
    assert (tmp_path / "map.txt").read_text().startswith("# config-hash: " + s["config_hash"])


def test_solve_line_oracle(tmp_path):
    assert run(tmp_path, "--set", "solve.h=0.08", "solve", "--rho", "2+cos(theta)", "--phi", "0") == 0
    s = load(tmp_path, "solve.json")
    assert s["oracle_sup_error"] <= 1e-2
    assert s["energy"] == pytest.approx(math.pi, rel=0.02)


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("WPHARMONIC_OUT", str(tmp_path / "env"))
    assert main(["mesh", "--h", "0.2"]) == 0
    assert (tmp_path / "env" / "mesh.txt").exists()
    assert (tmp_path / "env" / "config.resolved.txt").exists()


def test_config_hash_is_stable_and_sensitive():
    a, b = RunConfig(), RunConfig()
    assert a.hash == b.hash
    b.set("solve.h", "0.02")
    assert a.hash != b.hash and len(a.hash) == 16


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nsolve.h = 0.2\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o"), "mesh"]) == 0
    assert "solve.h=0.2" in (tmp_path / "o" / "config.resolved.txt").read_text()


def test_verify_npc_passes(tmp_path):
    assert run(tmp_path, "verify", "npc") == 0
    v = load(tmp_path, "verify.json")
    assert v["verdict"] == "PASS" and v["seconds"] is None


def test_verify_unknown_check(tmp_path):
    assert run(tmp_path, "verify", "no-such-check") == 4


def test_reruns_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["--out", str(tmp_path / d), "--set", "solve.h=0.16", "solve",
                     "--rho", "0.6-0.4*cos(theta)", "--phi", "10*sin(theta)"]) == 0
    for name in ("mesh.txt", "map.txt", "solve.json", "config.resolved.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
