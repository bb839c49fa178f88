import json
import subprocess
import sys

import pytest

from infraparticle import cli, runs
from infraparticle.softphoton import QuadratureError


def test_defaults_validate():
    cfg = cli.load_config()
    assert cfg == cli.Config().validate()
    assert cfg.seed == 20240101


def test_toml_and_overrides(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('alpha = 0.01\n[classical]\nt_bar = 3.0\nv_in = [0.2, 0.0, 0.0]\n')
    cfg = cli.load_config(p, ["seed=7", "classical.t_bar=4.5"])
    assert cfg.alpha == 0.01 and cfg.seed == 7 and cfg.t_bar == 4.5
    assert tuple(cfg.v_in) == (0.2, 0.0, 0.0)


@pytest.mark.parametrize("override", ["nonsense=1", "alpha=-1", "alpha=abc", "no_equals_sign",
                                      "v_in=[1.5,0,0]"])
def test_invalid_config(override):
    with pytest.raises(cli.ConfigError):
        cli.load_config(None, [override])


def test_config_hash_ignores_out():
    a = cli.load_config(None, ["out=x"])
    b = cli.load_config(None, ["out=y"])
    c = cli.load_config(None, ["seed=1"])
    assert cli.config_hash(a) == cli.config_hash(b) != cli.config_hash(c)


def test_exit_codes(tmp_path, monkeypatch, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["bogus"])
    assert e.value.code == 2
    assert cli.main(["cloud", "--out", str(tmp_path), "--set", "alpha=0"]) == 3

    def boom(cfg):
        raise QuadratureError("no convergence", estimate=1.0, error=0.5)

    monkeypatch.setitem(runs.DRIVERS, "cloud", boom)
    capsys.readouterr()
    assert cli.main(["cloud", "--out", str(tmp_path)]) == 4
    diag = json.loads(capsys.readouterr().out)
    assert diag["error"] == "QuadratureError" and diag["quadrature_estimate"] == 1.0
    assert json.loads((tmp_path / "error.json").read_text())["message"] == "no convergence"


def test_cloud_artifacts(tmp_path):
    assert cli.main(["cloud", "--out", str(tmp_path)]) == 0
    raw = (tmp_path / "cloud.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    lines = raw.decode().splitlines()
    assert lines[0] == "sigma,ln_inv_sigma,photon_number"
    first = lines[1].split(",")
    assert first[0] == "%.17g" % float(first[0])
    doc = json.loads((tmp_path / "cloud.json").read_text())
    assert set(doc) == {"subcommand", "version", "config_hash", "wall_time", "results"}
    assert doc["results"]["pass"] and doc["results"]["r2"] > 0.9999


def test_classical_subprocess(tmp_path):
    r = subprocess.run([sys.executable, "-m", "infraparticle", "classical", "--out", str(tmp_path)],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0 and "classical: pass" in r.stdout
    head = (tmp_path / "classical_field_map.csv").read_text().splitlines()[0]
    assert head == "t,y1,y2,y3,Ex,Ey,Ez,Bx,By,Bz,absF"
    res = json.loads((tmp_path / "classical.json").read_text())["results"]
    assert res["in_slope"] == "-inf"  # non-finite values are written as strings


def test_decay_control(tmp_path):
    out = cli.run("decay", cli.load_config(), tmp_path, lemma="control")
    s = out["decay"]["control"]
    assert abs(s["slope"] + 1.0) <= 0.15
    assert (tmp_path / "decay.csv").exists()


def test_offdiag_run(tmp_path):
    s = cli.run("offdiag", cli.load_config(), tmp_path)["offdiag"]
    assert s["pass"] and s["max_diagonal_rel_error"] <= 1e-8


def test_unknown_subcommand_in_run(tmp_path):
    with pytest.raises(ValueError):
        cli.run("nope", cli.load_config(), tmp_path)
