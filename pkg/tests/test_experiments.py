import csv
import json
from pathlib import Path

import numpy as np
import pytest

from byzgrad import cli, protocol
from byzgrad.errors import ConfigInvalid, HypothesisFailed, Infeasible
from byzgrad.experiments import (
    SUMMARY_COLUMNS,
    axis_config,
    graph_from_dict,
    graph_to_dict,
    load_config,
    load_objectives,
    sweep,
    validate_config,
)
from byzgrad.graphlib import complete_graph
from byzgrad.trace import RunTrace

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _toml(tmp_path, graph="k4.json", objectives="k4_balls.json", adversary=None, **run):
    run = {"d": 1, "beta": 1, "T": 20, "seed": 1, "init_box": [5.0, 10.0], **run}
    adversary = {3: {"kind": "constant", "point": [1e6]}} if adversary is None else adversary
    lines = [f'[graph]\npath = "{CONFIGS / graph}"', f'[objectives]\npath = "{CONFIGS / objectives}"']
    for agent, spec in adversary.items():
        lines.append(f"[adversary.{agent}]\n" + "\n".join(f"{k} = {json.dumps(v)}" for k, v in spec.items()))
    lines.append("[run]\n" + "\n".join(f"{k} = {json.dumps(v)}" for k, v in run.items()))
    path = tmp_path / "cfg.toml"
    path.write_text("\n\n".join(lines) + "\n")
    return path


# -- loading and validation -------------------------------------------------


def test_shipped_configs_load():
    for name in ("k4.toml", "k4_rate.toml", "k4_counterexample.toml", "circ7.toml"):
        cfg = load_config(CONFIGS / name)
        validate_config(cfg)
    cfg = load_config(CONFIGS / "k4.toml")
    assert cfg.graph == complete_graph(4)
    assert set(cfg.byzantine) == {3} and cfg.byzantine[3].kind == "constant"
    assert cfg.require_resilient and cfg.T == 2000


def test_graph_dict_roundtrip():
    g = complete_graph(5)
    assert graph_from_dict(graph_to_dict(g)) == g
    with pytest.raises(ConfigInvalid):
        graph_from_dict({"n": 3})
    with pytest.raises(ConfigInvalid):
        graph_from_dict({"n": 2, "edges": [[0, 0]]})


def test_bad_configs(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "missing.toml")
    (tmp_path / "bad.toml").write_text("[run\n")
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "bad.toml")
    with pytest.raises(ConfigInvalid):
        load_config(_toml(tmp_path, bogus=1))
    with pytest.raises(ConfigInvalid):
        load_config(_toml(tmp_path, adversary={3: {"kind": "teleport"}}))
    with pytest.raises(ConfigInvalid):
        load_config(_toml(tmp_path, T=-1))
    (tmp_path / "objs.json").write_text('[{"family": "cube", "center": [0]}]')
    with pytest.raises(ConfigInvalid):
        load_objectives(tmp_path / "objs.json")


def test_validate_rejects_structural_problems(tmp_path):
    with pytest.raises(ConfigInvalid):
        validate_config(load_config(_toml(tmp_path, adversary={7: {"kind": "constant", "point": [0]}})))
    two = {2: {"kind": "constant", "point": [1.0]}, 3: {"kind": "constant", "point": [1.0]}}
    with pytest.raises(ConfigInvalid):
        validate_config(load_config(_toml(tmp_path, adversary=two)))
    validate_config(load_config(_toml(tmp_path, adversary=two, allow_excess_byzantine=True)))
    with pytest.raises(ConfigInvalid):
        validate_config(load_config(_toml(tmp_path, init_states=[[0.0]] * 3)))
    with pytest.raises(ConfigInvalid):
        validate_config(load_config(_toml(tmp_path, beta=2)))  # K4 lacks 5 neighbors


def test_cycle_is_not_resilient(tmp_path):
    cfg = load_config(_toml(tmp_path, graph="c4.json", adversary={}, beta=0))
    _, report = validate_config(cfg)
    assert report.resilient  # beta = 0: a directed cycle is rooted
    cfg = load_config(_toml(tmp_path, graph="c4.json", adversary={}, beta=0, engine="raw_average"))
    cfg = cfg.with_(beta=1, engine="raw_average")
    _, report = validate_config(cfg)
    assert not report.resilient and report.witness is not None
    with pytest.raises(HypothesisFailed):
        validate_config(cfg.with_(require_resilient=True))


# -- sweeps -----------------------------------------------------------------


def test_empty_axis_is_single_run(tmp_path):
    cfg = load_config(_toml(tmp_path))
    res = sweep(cfg, None, [], workers=1)
    assert len(res.rows) == 1 and res.rows[0]["outcome"] == "ok"
    direct = protocol.run_experiment(cfg)
    assert np.array_equal(res.traces[0].final_states, direct.final_states)


def test_adversary_sweep_rows(tmp_path):
    cfg = load_config(_toml(tmp_path))
    specs = [
        {"kind": "constant", "point": [1e6]},
        "uniform_noise",
        {"kind": "target_pull", "target": [50.0]},
        "coordinated",
        "split_brain",
        "nonsense",
        "constant",  # missing its point: recorded, not raised
    ]
    res = sweep(cfg, "adversary", specs, workers=1)
    assert [r["value"] for r in res.rows] == [
        "constant", "uniform_noise", "target_pull", "coordinated", "split_brain", "nonsense", "constant"
    ]
    assert [r["seed"] for r in res.rows[:5]] == [1, 2, 3, 4, 5]
    assert all(r["outcome"] == "ok" for r in res.rows[:5])
    assert res.rows[5]["outcome"] == "error" and "ConfigInvalid" in res.rows[5]["error"]
    assert "InvalidParams" in res.rows[6]["error"]
    assert len(res.errors) == 2


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = load_config(_toml(tmp_path))
    a = sweep(cfg, "T", [5, 10], workers=1)
    b = sweep(cfg, "T", [5, 10], workers=2)
    for x, y in zip(a.traces, b.traces):
        assert np.array_equal(x.final_states, y.final_states)


def test_summary_header_golden(tmp_path):
    cfg = load_config(_toml(tmp_path))
    res = sweep(cfg, "seed", [4, 5], workers=1, out_dir=tmp_path / "runs")
    res.write_summary(tmp_path / "summary.csv")
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [
        "index", "label", "axis", "value", "seed", "T", "outcome",
        "final_diameter", "final_max_dist_to_Xstar", "gap_at_T", "error",
    ]
    assert tuple(rows[0]) == SUMMARY_COLUMNS
    assert len(rows) == 3
    assert (tmp_path / "runs" / "run_0.csv").exists() and (tmp_path / "runs" / "run_1.csv").exists()


def test_axis_config_rejects_unknown_axis(tmp_path):
    cfg = load_config(_toml(tmp_path))
    with pytest.raises(ConfigInvalid):
        axis_config(cfg, "colour", 1, 0)
    assert axis_config(cfg, "a0", 0.5, 2).schedule.a0 == 0.5


# -- CLI --------------------------------------------------------------------


def _run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_graph_commands(capsys):
    code, out, _ = _run(capsys, "graph", "check-resilient", "--graph", CONFIGS / "k4.json", "-r", 1, "-s", 1)
    assert code == 0 and json.loads(out)["resilient"] is True
    code, out, _ = _run(capsys, "graph", "check-resilient", "--graph", CONFIGS / "c4.json", "-r", 1, "-s", 1)
    data = json.loads(out)
    assert code == 0 and data["resilient"] is False and data["witness"] is not None
    code, out, _ = _run(capsys, "graph", "kappa-rs", "--graph", CONFIGS / "k4.json", "-r", 1, "-s", 1)
    assert json.loads(out)["kappa"] == 2
    code, out, err = _run(capsys, "graph", "kappa-rs", "--graph", CONFIGS / "k4.json", "-r", 1, "-s", 1, "--sample", 5)
    assert code == 2 and "--seed" in err


def test_cli_geom_and_objectives(capsys):
    code, out, _ = _run(capsys, "geom", "pick", "--points", CONFIGS / "points_1d.json", "--d", 1, "--beta", 1)
    picks = json.loads(out)["picks"]
    assert code == 0 and len(picks) == 4
    assert picks[0]["a_set"] == [0, 1, 2] and picks[0]["point"] == [1.0]
    code, out, _ = _run(capsys, "objectives", "check-redundancy", "--objectives", CONFIGS / "k4_balls.json", "-k", 3)
    assert code == 0 and json.loads(out)["redundant"] is True


def test_cli_simulate_and_analyze(tmp_path, capsys):
    cfg = _toml(tmp_path, record_picks=True, check_containment=True, T=30)
    out_csv, jsonl, report = tmp_path / "run.csv", tmp_path / "run.jsonl", tmp_path / "report.json"
    code, out, _ = _run(capsys, "simulate", "--config", cfg, "--out", out_csv, "--jsonl", jsonl, "--seed", 4,
                        "--figures", tmp_path / "fig")
    assert code == 0
    data = json.loads(out)
    assert data["outcome"] == "ok" and data["rounds"] == 30
    assert all(Path(p).exists() for p in data["figures"]) and data["figures"]
    assert RunTrace.read_jsonl(jsonl).header["seed"] == 4
    code, out, _ = _run(capsys, "analyze", "trace", "--in", jsonl, "--report", report)
    assert code == 0
    rep = json.loads(report.read_text())
    assert rep["containment"] == {"checked": 30, "failures": 0}
    assert rep["weights"]["diagonal_exact"] and rep["weights"]["rows_stochastic"]
    assert all(Path(p).exists() for p in rep["figures"])


def test_cli_sweep_rate(tmp_path, capsys):
    cfg = _toml(tmp_path, schedule="fixed", init_states=[[8.0]] * 4,
                adversary={3: {"kind": "uniform_noise", "low": -20.0, "high": 20.0}})
    summary = tmp_path / "s.csv"
    code, out, _ = _run(capsys, "sweep", "--config", cfg, "--axis", "T", "--values", "50,100,200",
                        "--summary", summary, "--workers", 1, "--figures", tmp_path / "fig")
    data = json.loads(out)
    assert code == 0 and data["runs"] == 3 and isinstance(data["rate_slope"], float)
    assert (tmp_path / "fig" / "rate.png").exists()


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    code, _, err = _run(capsys, "simulate", "--config", tmp_path / "none.toml", "--out", tmp_path / "x.csv",
                        "--seed", 1)
    assert code == 2 and "config error" in err
    cfg = _toml(tmp_path, objectives="k4_distinct.json", require_redundant=True)
    code, _, err = _run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "x.csv", "--seed", 1)
    assert code == 3 and "hypothesis failed" in err

    def broken(*args, **kwargs):
        raise Infeasible("forced", 1.0)

    monkeypatch.setattr(protocol, "normal_update", broken)
    code, out, _ = _run(capsys, "simulate", "--config", _toml(tmp_path), "--out", tmp_path / "x.csv", "--seed", 1)
    assert code == 4 and json.loads(out)["outcome"] == "pick_infeasible"


def test_cli_requires_seed_for_simulate(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["simulate", "--config", str(_toml(tmp_path)), "--out", str(tmp_path / "x.csv")])
    assert info.value.code == 2
    assert "--seed" in capsys.readouterr().err
