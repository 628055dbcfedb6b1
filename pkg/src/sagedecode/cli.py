"""Command-line entry point: ``sagedecode {simulate,theory,sweep,analyze}``.

Exit codes: 0 success, 2 invalid configuration or input, 3 speculative
output diverged from target-only greedy decoding.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import harness
from .metrics import dumps_json, export, lag_autocorrelation, read_csv_column, rows_csv
from .models import ConfigError, ContextOverflowError
from .theory import theory_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_LOSSLESS = 3

TRACE_FILE = "trace.json"
SUMMARY_FILE = "summary.csv"
THEORY_FILE = "theory_report.json"
SWEEP_FILE = "sweep.csv"


def _default_seed() -> int:
    raw = os.environ.get("SAGE_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"SAGE_SEED must be an integer, got {raw!r}") from None


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"--set {item!r} is not key=value")
        out[key.strip()] = harness._parse_scalar(val.strip())
    return out


def _build_config(args) -> harness.ExperimentConfig:
    d = harness.load_config(args.config).to_dict() if args.config else harness.ExperimentConfig().to_dict()
    if args.model:
        d["model"] = harness.parse_model_arg(args.model)
    if getattr(args, "mode", None):
        d["modes"] = list(harness.MODES) if args.mode == "all" else [args.mode]
    if args.max_tokens is not None:
        d["max_tokens"] = args.max_tokens
    if args.seed is not None:
        d["seeds"] = [args.seed]
    elif not args.config:
        d["seeds"] = [_default_seed()]
    for k, v in _parse_set(args.set).items():
        d = harness.with_param(d, k, v)
    return harness.ExperimentConfig.from_dict(d)


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_simulate(args) -> int:
    cfg = _build_config(args)
    results = harness.run_experiment(cfg)
    out = _out_dir(args.out_dir)
    (out / TRACE_FILE).write_text(dumps_json(harness.bundle(cfg, results)), encoding="utf-8")
    export(harness.summary_rows(results), "csv", out / SUMMARY_FILE)
    for r in results:
        s = r.summary
        print(f"seed={r.seed} mode={s.mode} tokens={s.tokens} rounds={s.rounds} "
              f"mean_tau={s.mean_tau:.4f} speedup={s.modeled_speedup:.4f}")
    return EXIT_OK


def cmd_theory(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    report = theory_report(seed=seed, trials=args.trials, workers=args.workers)
    out = _out_dir(args.out_dir)
    export(report, "json", out / THEORY_FILE)
    for key, section in report.items():
        if isinstance(section, dict) and "verdict" in section:
            print(f"{key}: {section['verdict']}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _build_config(args)
    grid = dict(cfg.grid)
    for item in args.grid or []:
        key, eq, vals = item.partition("=")
        if not eq:
            raise ConfigError(f"--grid {item!r} is not key=v1,v2,...")
        grid[key.strip()] = [harness._parse_scalar(v.strip()) for v in vals.split(",") if v.strip()]
    rows = harness.run_sweep(cfg, grid, workers=args.workers)
    out = _out_dir(args.out_dir)
    (out / SWEEP_FILE).write_text(rows_csv(rows), encoding="utf-8")
    print(f"{len(rows)} rows -> {out / SWEEP_FILE}")
    return EXIT_OK


def _entropy_series(path: Path, mode: str, seed) -> list[float]:
    if path.suffix == ".csv":
        return read_csv_column(path, "entropy")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read trace {path}: {exc}") from exc
    runs = harness.traces_from_bundle(data)
    for s, trace in runs:
        if trace.mode == mode and (seed is None or s == seed):
            return [r.entropy for r in trace.records if r.entropy is not None]
    raise ConfigError(f"no {mode} trace{'' if seed is None else f' for seed {seed}'} in {path}")


def cmd_analyze(args) -> int:
    series = _entropy_series(Path(args.trace), args.mode, args.seed)
    try:
        ac = lag_autocorrelation(series, args.max_lag, include_zero=args.include_zero)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    text = dumps_json({"schema": 1, "source": str(args.trace), "mode": args.mode, "length": len(series),
                       **ac.to_dict()})
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _add_run_args(p):
    p.add_argument("--config", help="JSON experiment config; flags override its values")
    p.add_argument("--model", help='model spec, e.g. "coupled:eps=0.05", "schedule:vocab=12", "ngram:n_target=3"')
    p.add_argument("--max-tokens", type=int, dest="max_tokens")
    p.add_argument("--seed", type=int, help="seed (default: $SAGE_SEED or 0)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config, adaptive or model parameter (repeatable)")
    p.add_argument("--out-dir", default=".", dest="out_dir")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sagedecode", description="Entropy-guided adaptive speculative decoding simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="decode with one or all modes; writes trace.json and summary.csv")
    _add_run_args(p)
    p.add_argument("--mode", choices=list(harness.MODES) + ["all"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("theory", help="run every closed-form/oracle check; writes theory_report.json")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, default=10**6, help="Monte Carlo trials per grid point")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default=".", dest="out_dir")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("sweep", help="grid over parameters; writes sweep.csv")
    _add_run_args(p)
    p.add_argument("--mode", choices=list(harness.MODES) + ["all"])
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2,...", help="grid axis (repeatable)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="entropy autocorrelation from a trace file")
    p.add_argument("trace", help="trace.json bundle, single trace JSON, or CSV with an entropy column")
    p.add_argument("--max-lag", type=int, default=20, dest="max_lag")
    p.add_argument("--mode", default="sage")
    p.add_argument("--seed", type=int)
    p.add_argument("--include-zero", action="store_true", dest="include_zero")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContextOverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except harness.LosslessnessError as exc:
        print(f"losslessness check failed: {exc}", file=sys.stderr)
        return EXIT_LOSSLESS


if __name__ == "__main__":
    sys.exit(main())
