import json
import os
import re
import subprocess
import sys

import numpy as np
import pytest

from spinlab import cli
from spinlab.config import THREADS_ENV, load_config, parse_config, resolve_threads
from spinlab.ensembles import DisorderSpec, sample_wigner
from spinlab.errors import ConfigError
from spinlab.io import read_matrix_binary, read_matrix_csv, write_matrix_binary, write_matrix_csv

FE = {
    "schema_version": 1, "experiment": "free-energy-clt", "seed": 1,
    "disorder": {"family": "gaussian"}, "prior": {"family": "rademacher"},
    "params": {"beta": 0.5, "N": 6, "trials": 100},
}


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


# --- io -------------------------------------------------------------------------------


def test_binary_roundtrip(tmp_path):
    W = sample_wigner(DisorderSpec(), 7, 3)
    write_matrix_binary(W, tmp_path / "w.bin")
    assert np.array_equal(read_matrix_binary(tmp_path / "w.bin"), W)
    assert (tmp_path / "w.bin").stat().st_size == 8 + 8 * 28


def test_csv_roundtrip(tmp_path):
    W = sample_wigner(DisorderSpec("uniform-scaled"), 5, 4)
    write_matrix_csv(W, tmp_path / "w.csv")
    assert np.array_equal(read_matrix_csv(tmp_path / "w.csv"), W)
    assert (tmp_path / "w.csv").read_text().splitlines()[0] == "i,j,value"


def test_io_errors(tmp_path):
    with pytest.raises(ConfigError):
        write_matrix_binary(np.array([[0.0, 1.0], [2.0, 0.0]]), tmp_path / "x.bin")
    (tmp_path / "t.bin").write_bytes(b"\x03\x00")
    with pytest.raises(ConfigError):
        read_matrix_binary(tmp_path / "t.bin")
    write_matrix_binary(np.eye(3), tmp_path / "s.bin")
    (tmp_path / "s.bin").write_bytes((tmp_path / "s.bin").read_bytes()[:-8])
    with pytest.raises(ConfigError):
        read_matrix_binary(tmp_path / "s.bin")
    (tmp_path / "m.csv").write_text("i,j,value\n0,0,1.0\n1,1,1.0\n")
    with pytest.raises(ConfigError, match="misses"):
        read_matrix_csv(tmp_path / "m.csv")


# --- config ----------------------------------------------------------------------------


def test_shipped_configs_validate():
    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    names = sorted(os.listdir(root))
    assert len(names) >= 6
    for name in names:
        load_config(os.path.join(root, name))


def test_schema_errors_name_path():
    bad = dict(FE, params={"beta": "hot", "N": 6, "trials": 100})
    with pytest.raises(ConfigError, match=r"params\.beta"):
        parse_config(bad)
    with pytest.raises(ConfigError, match="colour"):
        parse_config(dict(FE, colour="red"))
    with pytest.raises(ConfigError):
        parse_config(dict(FE, experiment="nope"))


def test_supercritical_rejected():
    with pytest.raises(ConfigError, match=r"params\.beta\[0\].*supercritical"):
        parse_config(dict(FE, params={"beta": 1.2, "N": 6, "trials": 100}))
    assert parse_config(dict(FE, params={"beta": 1.2, "N": 6, "trials": 100}, allow_supercritical=True))
    lr = {"schema_version": 1, "experiment": "loglr-clt", "params": {"lambda": [0.3, 1.5], "N": 6, "trials": 100}}
    with pytest.raises(ConfigError, match=r"params\.lambda\[1\]"):
        parse_config(lr)


def test_semantic_checks():
    with pytest.raises(ConfigError, match="rademacher"):
        parse_config(dict(FE, prior={"family": "gaussian"}))
    with pytest.raises(ConfigError, match="custom-density"):
        parse_config(dict(FE, disorder={"family": "custom-density"}))


def test_density_table_reference(tmp_path):
    xs = np.linspace(-9, 9, 2001)
    logp = -xs * xs / 2 - 0.5 * np.log(2 * np.pi)
    np.savetxt(tmp_path / "g.csv", np.column_stack([xs, logp]), delimiter=",")
    doc = dict(FE, disorder={"family": "custom-density", "density": {"table": "g.csv"}})
    cfg = load_config(write_json(tmp_path / "c.json", doc))
    assert cfg.disorder.w_4 == pytest.approx(3.0, rel=1e-4)
    doc["disorder"]["density"]["table"] = "missing.csv"
    with pytest.raises(ConfigError, match="not found"):
        load_config(write_json(tmp_path / "c.json", doc))


def test_invalid_json(tmp_path):
    (tmp_path / "bad.json").write_text("{\n  'x': 1\n}")
    with pytest.raises(ConfigError, match="line 2"):
        load_config(tmp_path / "bad.json")
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.json")


def test_resolve_threads(monkeypatch):
    cfg = parse_config(dict(FE, threads=3))
    monkeypatch.setenv(THREADS_ENV, "5")
    assert resolve_threads(2, cfg) == 2
    assert resolve_threads(None, cfg) == 3
    assert resolve_threads(None, parse_config(FE)) == 5
    monkeypatch.delenv(THREADS_ENV)
    assert resolve_threads(None, None) == 1
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        resolve_threads(None, None)


# --- cli --------------------------------------------------------------------------------


def test_cli_validate(tmp_path, capsys):
    assert cli.main(["validate", str(write_json(tmp_path / "c.json", FE))]) == 0
    assert "valid free-energy-clt" in capsys.readouterr().out
    bad = write_json(tmp_path / "b.json", dict(FE, params={"beta": 1.2, "N": 6, "trials": 100}))
    assert cli.main(["validate", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "params.beta[0]" in err and "supercritical" in err


def test_cli_usage_error_exits_one():
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 1


def test_list_models(capsys):
    assert cli.main(["list-models"]) == 0
    out = capsys.readouterr().out
    section = out.split("priors:")[0]
    assert sum(1 for line in section.splitlines()[1:] if line.strip()) >= 3
    assert re.search(r"^\s+rademacher\s+m_4=1 ", out, re.M)
    assert re.search(r"^\s+gaussian\s+m_4=3 ", out, re.M)
    assert cli.main(["list-models", "--json"]) == 0
    cat = json.loads(capsys.readouterr().out)
    prior = {row["family"]: row for row in cat["priors"]}
    assert prior["rademacher"]["m_4"] == 1 and prior["gaussian"]["m_4"] == 3


def body(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("# generated")]


def test_rerun_byte_identical(tmp_path):
    cfg = write_json(tmp_path / "c.json", FE)
    a, b = tmp_path / "a", tmp_path / "b"
    # N=6 is far from the limit, so only reproducibility is checked here
    code = cli.main(["run", str(cfg), "--out", str(a)])
    assert code in (0, 2)
    assert cli.main(["run", str(cfg), "--out", str(b), "--threads", "3"]) == code
    assert body(a / "raw.csv") == body(b / "raw.csv")
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    echo = json.loads((a / "config-echo.json").read_text())
    assert echo["seed"] == 1 and echo["tolerances"]["finite_size"] == 0.03
    c = tmp_path / "c"
    assert cli.main(["run", str(cfg), "--out", str(c), "--seed", "2"]) in (0, 2)
    assert body(c / "raw.csv") != body(a / "raw.csv")
    assert json.loads((c / "config-echo.json").read_text())["seed"] == 2


def test_exit_code_statistical_failure(tmp_path):
    doc = {"schema_version": 1, "experiment": "second-moment", "seed": 3, "prior": {"family": "rademacher"},
           "params": {"lambda": [0.5], "N": 200, "M": 2000}, "tolerances": {"relative_tol": 1e-6}}
    assert cli.main(["run", str(write_json(tmp_path / "s.json", doc)), "--out", str(tmp_path / "o")]) == 2
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["passed"] is False


def test_console_entry_point(tmp_path):
    cfg = write_json(tmp_path / "c.json", dict(FE, params={"beta": 1.2, "N": 6, "trials": 100}))
    proc = subprocess.run([sys.executable, "-m", "spinlab.cli", "validate", str(cfg)], capture_output=True,
                          text=True)
    assert proc.returncode == 1 and "supercritical" in proc.stderr
