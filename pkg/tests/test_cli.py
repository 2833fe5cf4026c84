import json

import numpy as np
import pytest

from heisembed.cli import EXIT_OK, EXIT_USAGE, run


def test_word_metric(capsys):
    assert run(["metric", "--kind=word", "--R=4", "--to=0,0,1"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "4"


def test_usage_errors(capsys):
    assert run(["metric", "--to", "0,0,1", "--kindd", "word"]) == EXIT_USAGE
    assert "--kind" in capsys.readouterr().err
    assert run(["metric", "--to", "0,0"]) == EXIT_USAGE
    assert run(["nosuch"]) == EXIT_USAGE
    assert run(["--version"]) == EXIT_OK


def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[common]\nworkers = 2\n[metric]\nkind = word\nR = 4\nto = 0,0,1\n")
    assert run(["metric", "--config", str(cfg)]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "4"
    assert run(["metric", "--config", str(cfg), "--to", "1,0,0"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "1"
    cfg.write_text("[metric]\nknd = word\n")
    assert run(["metric", "--config", str(cfg), "--to", "1,0,0"]) == EXIT_USAGE
    assert "kind" in capsys.readouterr().err


def test_embed_eval_audit_chain(tmp_path):
    m = str(tmp_path / "m.json")
    assert run(["embed", "--eps", "1/8", "--N1", "0", "--N2", "3", "--out", m]) == EXIT_OK
    pts = tmp_path / "p.csv"
    pts.write_text("x,y,z\n0,0,0\n0.5,-1,2\n")
    out = tmp_path / "v.csv"
    assert run(["eval", "--map", m, "--points", str(pts), "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# run_config: ")
    cfg = json.loads(lines[0][len("# run_config: "):])
    assert cfg["subcommand"] == "eval"
    first = np.array(lines[2].split(","), dtype=float)
    assert np.all(first[3:] == 0)  # Φ(0) = 0
    rep = tmp_path / "a.json"
    assert run(["audit", "--map", m, "--eps", "1/8", "--buckets", "0:2", "--count", "10", "--out", str(rep)]) == EXIT_OK
    doc = json.loads(rep.read_text())
    assert doc["report"]["pairs"] == 30
    assert doc["run_config"]["parameters"]["seed"] == 0


def test_missing_points_header(tmp_path):
    m = str(tmp_path / "m.json")
    run(["embed", "--eps", "1/8", "--N1", "0", "--N2", "1", "--out", m])
    pts = tmp_path / "p.csv"
    pts.write_text("a,b,c\n0,0,0\n")
    assert run(["eval", "--map", m, "--points", str(pts)]) == EXIT_USAGE


def test_lp_test_reports(tmp_path):
    out = tmp_path / "lp.json"
    assert run(["lp-test", "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["passed"] and doc["telescoping_residual"] <= 1e-12
