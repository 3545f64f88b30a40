import csv
import json

import numpy as np
import pytest

from sturmlog.cli import compare_manifests, main, parse_grid, read_config, resolve
from sturmlog.errors import SchemaMismatch, ValidationError


def _run(tmp_path, name, *args):
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out)])
    return code, out


def test_potential_dump(tmp_path):
    code, out = _run(tmp_path, "pd", "potential-dump")
    assert code == 0
    rows = list(csv.reader(open(out / "potential.csv")))
    assert [float(r[1]) for r in rows[1:]] == [1, 0, 1, 1, 0, 1, 0, 1]
    m = json.loads((out / "manifest.json").read_text())
    assert m["experiment"] == "potential-dump" and "potential.csv" in m["outputs"]
    assert m["config"]["lambda"] == "1.0"


def test_bitwise_determinism(tmp_path):
    args = ["mfunction-scan", "--set", "energies=-1,0.3,2", "--set", "eps-grid=0.01,0.1"]
    assert _run(tmp_path, "a", *args)[0] == 0
    assert _run(tmp_path, "b", *args)[0] == 0
    a = (tmp_path / "a" / "mfunction.csv").read_bytes()
    assert a == (tmp_path / "b" / "mfunction.csv").read_bytes()
    rep = compare_manifests(tmp_path / "a", tmp_path / "b")
    assert rep["identical"] and rep["fields"] == {}


def test_seed_only_difference(tmp_path):
    base = ["jl-check", "--set", "energies=0.5,1.5", "--set", "eps-grid=0.01,0.1",
            "--set", "phi-grid=phases:4"]
    _run(tmp_path, "a", *base)
    _run(tmp_path, "b", *base, "--set", "seed=7")
    rep = compare_manifests(tmp_path / "a", tmp_path / "b")
    assert set(rep["fields"]) == {"seed", "config"}
    assert rep["fields"]["config"] == {"seed": ["0", "7"]}
    assert rep["outputs"]["jl.csv"]["status"] == "identical"


def test_tolerance_comparison(tmp_path):
    args = ["mfunction-scan", "--set", "energies=0.3", "--set", "eps-grid=0.1"]
    _run(tmp_path, "a", *args)
    _run(tmp_path, "b", *args, "--set", "tol=1e-13")
    rep = compare_manifests(tmp_path / "a", tmp_path / "b", rtol=1e-6)
    assert rep["outputs"]["mfunction.csv"]["status"] in ("identical", "within-tolerance")
    rep = compare_manifests(tmp_path / "a", tmp_path / "b", rtol=0.0, atol=0.0)
    assert rep["outputs"]["mfunction.csv"]["status"] in ("identical", "differs")


def test_schema_mismatch(tmp_path):
    _run(tmp_path, "a", "potential-dump")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"experiment": "x"}))
    with pytest.raises(SchemaMismatch):
        compare_manifests(tmp_path / "a", bad)
    with pytest.raises(SchemaMismatch):
        compare_manifests(tmp_path / "a", tmp_path / "nowhere")


def test_beta_warning(tmp_path, capsys):
    code, out = _run(tmp_path, "w", "potential-dump", "--set", "beta=1.5")
    assert code == 0
    assert "warning" in capsys.readouterr().err


def test_exit_codes(tmp_path, capsys):
    assert _run(tmp_path, "x", "potential-dump", "--set", "bogus=1")[0] == 2
    assert _run(tmp_path, "x", "jl-check", "--set", "eps-grid=-1,0.1")[0] == 2
    assert _run(tmp_path, "x", "dynamics-run", "--set", "N=4")[0] == 2
    # a small box is reached by the wave packet long before T = 1000
    assert _run(tmp_path, "x", "dynamics-run", "--set", "N=16")[0] == 3
    err = capsys.readouterr().err
    assert "BoundaryContamination" in err


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# window\nn-from = 3\nn-to = 5  # inclusive\nlambda = 2\n")
    assert read_config(cfg) == {"n-from": "3", "n-to": "5", "lambda": "2"}
    code, out = _run(tmp_path, "c", "potential-dump", "--config", str(cfg), "--set", "n-to=6")
    assert code == 0
    rows = list(csv.reader(open(out / "potential.csv")))[1:]
    assert [int(r[0]) for r in rows] == [3, 4, 5, 6]
    assert {float(r[1]) for r in rows} <= {0.0, 2.0}


def test_resolve_and_grids():
    cfg = resolve("jl-check", {}, {"tol": "1e-10"})
    assert cfg["tol"] == "1e-10" and "eps-grid" in cfg
    with pytest.raises(ValidationError):
        resolve("jl-check", {}, {"N": "10"})
    with pytest.raises(ValidationError):
        resolve("nope", {}, {})
    assert parse_grid("logspace:-2:0:3") == pytest.approx([0.01, 0.1, 1.0])
    assert parse_grid("phases:4") == pytest.approx(np.arange(4) * np.pi / 4)
    assert parse_grid("1,2.5") == pytest.approx([1, 2.5])
    a = parse_grid("random-phases:5", np.random.default_rng(3))
    assert a == pytest.approx(parse_grid("random-phases:5", np.random.default_rng(3)))
    with pytest.raises(ValidationError):
        parse_grid("logspace:a:b")


def test_spectrum_and_cfrac_outputs(tmp_path):
    code, out = _run(tmp_path, "s", "spectrum-bands", "--set", "approximant-index=5",
                     "--set", "trend-from=2", "--set", "trend-to=5")
    assert code == 0
    bands = json.loads((out / "bands.json").read_text())
    assert bands["q"] == 8
    code, out = _run(tmp_path, "f", "cfrac-report", "--set", "n-terms=5")
    rep = json.loads((out / "cfrac.json").read_text())
    assert rep["terms"] == [1] * 5 and len(rep["convergents"]) == 6
