import json
import subprocess
import sys

import pytest

from graphbm import catalog
from graphbm.calculus import parse_graph_data
from graphbm.cli import SEED_ENV, run
from graphbm.metric_graph import load_graph, parse_graph


def cfg_args(configs_dir, name):
    return ["--graph", str(configs_dir / f"{name}_graph.json"), "--data", str(configs_dir / f"{name}_data.json")]


def test_graph_check_multigraph(configs_dir, capsys):
    assert run(["graph-check", "--graph", str(configs_dir / "multigraph_graph.json")]) == 0
    assert capsys.readouterr().out.strip() == "OK: 6 vertices, 11 internal, 8 external"


def test_shipped_configs_match_catalog(configs_dir):
    assert load_graph(configs_dir / "multigraph_graph.json") == catalog.multigraph()
    for name in ("walsh", "jump_atom", "three_vertex", "interval", "reflecting_interval"):
        cfg = catalog.ALL_CONFIGS[name]()
        G = load_graph(configs_dir / f"{name}_graph.json")
        assert G == cfg.graph
        doc = json.loads((configs_dir / f"{name}_data.json").read_text())
        assert parse_graph_data(G, doc) == cfg.data


def test_solve_reflecting_interval_is_constant(configs_dir, tmp_path):
    out = tmp_path / "u.csv"
    assert run(["solve", *cfg_args(configs_dir, "reflecting_interval"), "--alpha", "1", "--out", str(out)]) == 0
    grid, vertices = out.read_text().split("\n\n")
    lines = grid.splitlines()
    assert lines[0] == "edge,x,u,u_prime"
    assert len(lines) == 12
    for row in lines[1:]:
        _, _, u, du = row.split(",")
        assert float(u) == pytest.approx(1.0, abs=1e-12) and float(du) == pytest.approx(0.0, abs=1e-12)
    vlines = vertices.splitlines()
    assert vlines[0] == "vertex,u,residual"
    assert all(float(r.split(",")[1]) == pytest.approx(1.0, abs=1e-12) for r in vlines[1:])


def test_unknown_flag_is_a_validation_error(configs_dir, capsys):
    assert run(["graph-check", "--graph", str(configs_dir / "multigraph_graph.json"), "--frobnicate"]) == 1
    assert "unrecognized arguments" in capsys.readouterr().err
    assert run(["no-such-command"]) == 1


def test_schema_violation_reports_field(tmp_path, capsys):
    bad = tmp_path / "g.json"
    bad.write_text(json.dumps({"vertices": ["a", "b"], "internal_edges": [{"id": "i", "from": "a", "to": "b", "length": 0}]}))
    assert run(["graph-check", "--graph", str(bad)]) == 1
    assert "error: internal_edges[0].length:" in capsys.readouterr().err


def test_bad_data_reports_field(configs_dir, tmp_path, capsys):
    bad = tmp_path / "d.json"
    bad.write_text(json.dumps([{"vertex": "v", "c2": {"e1": 1.0, "e9": 0.1}}]))
    rc = run(["graph-check", "--graph", str(configs_dir / "walsh_graph.json"), "--data", str(bad)])
    assert rc == 1
    assert "e9" in capsys.readouterr().err


def test_missing_file(capsys):
    assert run(["graph-check", "--graph", "/nonexistent.json"]) == 1
    assert "error: graph:" in capsys.readouterr().err


def _simulate(configs_dir, path, extra=()):
    return run(
        ["simulate", *cfg_args(configs_dir, "jump_atom"), "--start", "v", "--epsilon", "0.2", "--paths", "300",
         "--out", str(path), *extra]
    )


def test_seed_precedence(configs_dir, tmp_path, monkeypatch, capsys):
    monkeypatch.delenv(SEED_ENV, raising=False)
    assert _simulate(configs_dir, tmp_path / "x.csv") == 1
    assert "seed" in capsys.readouterr().err
    assert _simulate(configs_dir, tmp_path / "a.csv", ["--seed", "5"]) == 0
    monkeypatch.setenv(SEED_ENV, "5")
    assert _simulate(configs_dir, tmp_path / "b.csv") == 0
    monkeypatch.setenv(SEED_ENV, "6")
    assert _simulate(configs_dir, tmp_path / "c.csv", ["--seed", "5"]) == 0
    assert _simulate(configs_dir, tmp_path / "d.csv") == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()
    assert a != (tmp_path / "d.csv").read_bytes()
    monkeypatch.setenv(SEED_ENV, "abc")
    assert _simulate(configs_dir, tmp_path / "e.csv") == 1


def test_simulate_csv(configs_dir, tmp_path):
    out = tmp_path / "s.csv"
    assert _simulate(configs_dir, out, ["--seed", "1", "--revive", "v"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "path_id,outcome,edge,x,elapsed_mean_time,revival_count"
    assert len(lines) == 301
    assert not any(",killed," in l for l in lines)


def test_simulate_independent_of_workers(configs_dir, tmp_path):
    args = ["simulate", *cfg_args(configs_dir, "three_vertex"), "--start", "v2", "--reach", "2", "--paths", "26000",
            "--seed", "3"]
    assert run([*args, "--out", str(tmp_path / "w1.csv")]) == 0
    assert run([*args, "--workers", "2", "--out", str(tmp_path / "w2.csv")]) == 0
    assert (tmp_path / "w1.csv").read_bytes() == (tmp_path / "w2.csv").read_bytes()


def test_estimate_json(configs_dir, tmp_path):
    out = tmp_path / "e.json"
    rc = run(["estimate", *cfg_args(configs_dir, "walsh"), "--vertex", "v", "--paths", "5000", "--seed", "2",
              "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["epsilons"] == [0.2, 0.1, 0.05, 0.025]
    assert len(doc["per_eps"]) == 4
    assert doc["estimate"]["components"]["c1_inf"]["value"] == 0
    assert {v["component"] for v in doc["comparison"]["verdicts"]} >= {"c2:e1", "c2:e2", "c2:e3", "c3"}
    rc = run(["estimate", *cfg_args(configs_dir, "walsh"), "--vertex", "v", "--paths", "100", "--seed", "2",
              "--epsilons", "0.2,0.1", "--out", str(out)])
    assert rc == 1


def test_revive_writes_loadable_data(configs_dir, tmp_path):
    out = tmp_path / "r.json"
    assert run(["revive", *cfg_args(configs_dir, "jump_atom"), "--vertex", "v", "--q", "e2:0.7", "--out", str(out)]) == 0
    G = load_graph(configs_dir / "jump_atom_graph.json")
    data = parse_graph_data(G, json.loads(out.read_text()))
    assert data["v"].c1 == 0 and len(data["v"].c4.atoms) == 2
    assert run(["revive", *cfg_args(configs_dir, "jump_atom"), "--vertex", "v", "--q", "v=0.5"]) == 1


def test_verify_subset(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run(["verify", "--seed", "42", "--only", "1,4", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "[PASS] criterion  1" in text and "[PASS] criterion  4" in text
    assert json.loads(out.read_text())["passed"] is True
    assert run(["verify", "--seed", "42", "--only", "12"]) == 1


def test_module_entry_point(configs_dir):
    res = subprocess.run(
        [sys.executable, "-m", "graphbm", "graph-check", "--graph", str(configs_dir / "double_edge_graph.json")],
        capture_output=True, text=True,
    )
    assert res.returncode == 0
    assert res.stdout.strip() == "OK: 2 vertices, 2 internal, 0 external"
