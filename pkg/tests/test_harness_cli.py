import csv
import hashlib
import json
import math
import os
from pathlib import Path

import pytest

from sagedecode import cli, harness
from sagedecode.engine import DecodeTrace
from sagedecode.models import ConfigError

GOLDEN = Path(__file__).parent / "golden"
UPDATE = os.environ.get("SAGE_UPDATE_GOLDEN") == "1"
SIM_ARGS = ["--mode", "all", "--model", "coupled:eps=0.05,vocab=16", "--seed", "1", "--max-tokens", "64"]


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _close(a, b, path="$"):
    if isinstance(a, dict):
        assert isinstance(b, dict) and set(a) == set(b), path
        for k in a:
            _close(a[k], b[k], f"{path}.{k}")
    elif isinstance(a, list):
        assert isinstance(b, list) and len(a) == len(b), path
        for i, (x, y) in enumerate(zip(a, b)):
            _close(x, y, f"{path}[{i}]")
    elif isinstance(a, float) or isinstance(b, float):
        assert math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12), f"{path}: {a} != {b}"
    else:
        assert a == b, path


def _check_golden(produced: Path, name: str):
    ref = GOLDEN / name
    if UPDATE:
        ref.write_bytes(produced.read_bytes())
    if produced.suffix == ".json":
        _close(json.loads(produced.read_text()), json.loads(ref.read_text()))
    else:
        got, want = _rows(produced), _rows(ref)
        assert len(got) == len(want)
        for g, w in zip(got, want):
            _close({k: float(v) if _numeric(v) else v for k, v in g.items()},
                   {k: float(v) if _numeric(v) else v for k, v in w.items()})


def _numeric(v):
    try:
        float(v)
        return True
    except ValueError:
        return False


# -- config parsing ------------------------------------------------------------------


def test_parse_model_arg():
    assert harness.parse_model_arg("coupled:eps=0.05,vocab=16") == {
        "kind": "coupled_pair", "epsilon": 0.05, "vocab_size": 16}
    assert harness.parse_model_arg("ngram") == {"kind": "ngram_corpus"}
    for bad in ("gpt:x=1", "coupled:eps"):
        with pytest.raises(ConfigError):
            harness.parse_model_arg(bad)


def test_config_validation():
    with pytest.raises(ConfigError):
        harness.ExperimentConfig.from_dict({"modes": ["beam"]})
    with pytest.raises(ConfigError):
        harness.ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        harness.ExperimentConfig.from_dict({"adaptive": {"d_min": 9, "d_max": 8}})
    with pytest.raises(ConfigError):
        harness.ExperimentConfig.from_dict({"c_d": 0, "c_t": 0})
    cfg = harness.ExperimentConfig.from_dict({"modes": "all"})
    assert cfg.modes == list(harness.MODES)
    assert harness.ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_with_param_routing():
    base = harness.ExperimentConfig().to_dict()
    assert harness.with_param(base, "max_tokens", 9)["max_tokens"] == 9
    assert harness.with_param(base, "w_max", 6)["adaptive"]["w_max"] == 6
    model = harness.with_param(base, "eps", 0.2)["model"]
    assert model["params"]["epsilon"] == 0.2 and "epsilon" not in model
    assert harness.with_param(base, "seed", 4)["seeds"] == [4]
    assert base["model"]["epsilon"] == 0.05


def test_shipped_benchmark_config():
    cfg = harness.shipped_config("two_regime")
    assert cfg.seeds == list(range(10)) and set(cfg.modes) == {"sd_tree", "sage"}


# -- simulate --------------------------------------------------------------------------


def test_simulate_smoke(tmp_path, capsys):
    args = ["simulate", "--mode", "sage", "--model", "coupled:eps=0.05", "--seed", "1", "--max-tokens", "256"]
    assert cli.main(args + ["--out-dir", str(tmp_path)]) == cli.EXIT_OK
    assert (tmp_path / "trace.json").exists() and (tmp_path / "summary.csv").exists()
    assert "mode=sage" in capsys.readouterr().out


def test_simulate_all_modes_agree(tmp_path):
    assert cli.main(["simulate", *SIM_ARGS, "--out-dir", str(tmp_path)]) == 0
    runs = harness.traces_from_bundle(json.loads((tmp_path / "trace.json").read_text()))
    assert [t.mode for _, t in runs] == list(harness.MODES)
    outputs = {tuple(t.output) for _, t in runs}
    assert len(outputs) == 1 and len(next(iter(outputs))) == 64
    assert len(_rows(tmp_path / "summary.csv")) == 4


def test_simulate_golden_and_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["simulate", *SIM_ARGS, "--out-dir", str(d)]) == 0
    for name in ("trace.json", "summary.csv"):
        assert _digest(a / name) == _digest(b / name)
    _check_golden(a / "trace.json", "simulate_trace.json")
    _check_golden(a / "summary.csv", "simulate_summary.csv")


def test_missing_config_exit_2(tmp_path, capsys):
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["simulate", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["simulate", "--set", "d_min=20", "--out-dir", str(tmp_path)]) == cli.EXIT_CONFIG


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": {"kind": "entropy_schedule", "vocab_size": 12}, "max_tokens": 40,
                               "modes": ["sd_tree"], "seeds": [3]}))
    assert cli.main(["simulate", "--config", str(cfg), "--max-tokens", "30", "--out-dir", str(tmp_path)]) == 0
    ((seed, trace),) = harness.traces_from_bundle(json.loads((tmp_path / "trace.json").read_text()))
    assert (seed, trace.mode, trace.tokens) == (3, "sd_tree", 30)


def test_divergence_exit_3(tmp_path, monkeypatch):
    real = harness.decode

    def broken(*a, **kw):
        t = real(*a, **kw)
        t.output[-1] = (t.output[-1] + 1) % 16
        return t

    monkeypatch.setattr(harness, "decode", broken)
    assert cli.main(["simulate", *SIM_ARGS, "--out-dir", str(tmp_path)]) == cli.EXIT_LOSSLESS


def test_sage_seed_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SAGE_SEED", "7")
    assert cli.main(["simulate", "--max-tokens", "20", "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "trace.json").read_text())["runs"][0]["seed"] == 7
    monkeypatch.setenv("SAGE_SEED", "x")
    assert cli.main(["simulate", "--max-tokens", "20", "--out-dir", str(tmp_path)]) == cli.EXIT_CONFIG


# -- theory ------------------------------------------------------------------------------


def test_theory_golden_and_bytes(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["theory", "--seed", "0", "--out-dir", str(d)]) == 0
    assert _digest(a / "theory_report.json") == _digest(b / "theory_report.json")
    rep = json.loads((a / "theory_report.json").read_text())
    assert round(rep["acceptance_threshold"]["value"], 4) == 0.5556
    assert all(row["within_3se"] for row in rep["expected_acceptance_length"]["grid"])
    assert "confidence_probability_bound: bound_violated" in capsys.readouterr().out
    _check_golden(a / "theory_report.json", "theory_report.json")


# -- sweep -----------------------------------------------------------------------------------


def test_empty_grid_exit_2(tmp_path):
    assert cli.main(["sweep", "--out-dir", str(tmp_path)]) == cli.EXIT_CONFIG
    assert cli.main(["sweep", "--grid", "epsilon=", "--out-dir", str(tmp_path)]) == cli.EXIT_CONFIG
    with pytest.raises(ConfigError):
        harness.grid_points({})


def test_sweep_order_independent_of_workers(tmp_path):
    base = ["sweep", "--mode", "all", "--max-tokens", "60", "--grid", "epsilon=0,0.1",
            "--grid", "seed=0,1", "--set", "w_max=6"]
    for w in ("1", "3"):
        assert cli.main(base + ["--workers", w, "--out-dir", str(tmp_path / w)]) == 0
    assert _digest(tmp_path / "1" / "sweep.csv") == _digest(tmp_path / "3" / "sweep.csv")
    rows = _rows(tmp_path / "1" / "sweep.csv")
    assert len(rows) == 2 * 2 * 4
    assert [(r["epsilon"], r["seed"]) for r in rows[::4]] == [("0", "0"), ("0", "1"), ("0.1", "0"), ("0.1", "1")]


def test_epsilon_sweep_non_increasing():
    # 10^5 tokens; the fixed-depth chain keeps this under a minute
    cfg = harness.ExperimentConfig(modes=["sd_chain"], max_tokens=100_000, seeds=[0])
    rows = harness.run_sweep(cfg, {"epsilon": [0, 0.05, 0.2]}, workers=3)
    taus = [r["mean_tau"] for r in rows]
    assert taus[0] == 5.0
    assert taus[0] >= taus[1] >= taus[2]


def test_max_tokens_sweep_recorded():
    cfg = harness.shipped_config("two_regime")
    cfg = harness.ExperimentConfig.from_dict({**cfg.to_dict(), "modes": ["sage"], "seeds": [0]})
    rows = harness.run_sweep(cfg, {"max_tokens": [512, 1024, 2048]})
    taus = [r["mean_tau"] for r in rows]
    trend = all(a <= b for a, b in zip(taus, taus[1:]))
    print(f"max_tokens sweep mean_tau={taus} non_decreasing={trend}")
    assert len(rows) == 3


# -- analyze ---------------------------------------------------------------------------------------


def test_analyze(tmp_path, capsys):
    assert cli.main(["simulate", "--mode", "sage", "--model", "schedule:vocab=12,noise_std=0.3",
                     "--max-tokens", "400", "--out-dir", str(tmp_path)]) == 0
    out = tmp_path / "ac.json"
    assert cli.main(["analyze", str(tmp_path / "trace.json"), "--max-lag", "5", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["lags"] == [1, 2, 3, 4, 5] and len(rep["values"]) == 5
    assert cli.main(["analyze", str(tmp_path / "trace.json"), "--mode", "sd_tree"]) == cli.EXIT_CONFIG
    assert cli.main(["analyze", str(tmp_path / "trace.json"), "--max-lag", "5000"]) == cli.EXIT_CONFIG
