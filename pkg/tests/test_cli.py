import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from cmshift.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("cfg", sorted(p.name for p in CONFIGS.glob("*.toml")))
def test_shipped_configs_run(cfg, tmp_path, capsys):
    code, out, err = run_cli(["run", str(CONFIGS / cfg), "--out", str(tmp_path)], capsys)
    assert code == 0, err
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["files"] and "truncation_ledger" in manifest
    assert not list(tmp_path.glob(".*.partial"))


def test_golden_renewal_csv(tmp_path, capsys):
    code, _, _ = run_cli(["run", str(CONFIGS / "golden_renewal.toml"), "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "renewal.csv")))
    at3 = [r for r in rows if float(r["t"]) == 3.0]
    assert at3 and all(abs(float(r["N"]) - 7.0) < 1e-10 for r in at3)


def test_byte_identical_reruns(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run_cli(["run", str(CONFIGS / "golden_residue.toml"), "--out", str(d)], capsys)[0] == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


BAD = {
    1: 'version = 2\n[system]\nbuiltin = "golden-mean"\n[task]\nname = "pressure"\n',
    2: 'version = 1\n[system]\nbuiltin = "golden-mean"\n[task]\nname = "eigendata"\n'
       '[numeric]\nmax_iter = 2\n',
    3: 'version = 1\n[system]\nbuiltin = "gauss:1"\nM = 50\n[task]\nname = "pressure"\n'
       '[numeric]\nword_cap = 10\n',
    4: 'version = 1\n[system]\nbuiltin = "golden-renewal"\n[task]\nname = "laplace-probe"\n'
       'z = [0.5]\nt_min = 0.0\nt_max = 5.0\nstep = 1.0\n',
}


@pytest.mark.parametrize("code", sorted(BAD))
def test_exit_codes_and_no_partial_outputs(code, tmp_path, capsys):
    out = tmp_path / "out"
    got, stdout, err = run_cli(["run", write(tmp_path, BAD[code]), "--out", str(out)], capsys)
    assert got == code
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("cmshift: error code=%d kind=" % code)
    assert not out.exists() or not any(out.iterdir())


def test_unknown_key_rejected(tmp_path, capsys):
    text = 'version = 1\n[system]\nbuiltin = "golden-mean"\ncolour = 1\n[task]\nname = "pressure"\n'
    code, _, err = run_cli(["run", write(tmp_path, text)], capsys)
    assert code == 1 and "colour" in err


def test_malformed_toml(tmp_path, capsys):
    code, _, err = run_cli(["run", write(tmp_path, "version = = 1")], capsys)
    assert code == 1 and "malformed" in err


def test_list_builtins(capsys):
    code, out, _ = run_cli(["--list-builtins"], capsys)
    assert code == 0 and "golden-renewal" in out and "gauss:s" in out


def test_console_entry_point(tmp_path):
    env = dict(os.environ, CMSHIFT_THREADS="1")
    res = subprocess.run([sys.executable, "-m", "cmshift", "run", str(CONFIGS / "bernoulli_pressure.toml"),
                          "--out", str(tmp_path)], capture_output=True, text=True, env=env)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "pressure.csv").exists()
    env["CMSHIFT_THREADS"] = "many"
    res = subprocess.run([sys.executable, "-m", "cmshift", "run", str(CONFIGS / "bernoulli_pressure.toml")],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 1 and "CMSHIFT_THREADS" in res.stderr


def test_formatting():
    from cmshift.io import csv_text, fmt
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt((1, 2, 2)) == "1 2 2" and fmt(float("inf")) == "inf" and fmt(True) == "true"
    assert csv_text(["a", "b"], [[1, 0.5]]) == "a,b\n1,0.5\n"
    with pytest.raises(ValueError):
        csv_text(["a"], [[1, 2]])


def test_builtins():
    from cmshift import ConfigError
    from cmshift.builtins import builtin
    assert builtin("bernoulli:0.25,0.75").shift.M == 2
    assert builtin("gauss:1", M=7).u.depth == 2
    assert builtin("golden-renewal").lattice and not builtin("nonlattice-renewal").lattice
    for bad in ("bernoulli:0.5,0.6", "gauss:x", "nope"):
        with pytest.raises(ConfigError):
            builtin(bad)
