"""Experiment configuration, seeded runs, sweeps and the two-regime benchmark."""

from __future__ import annotations

import copy
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .engine import MODES, DecodeTrace, decode
from .metrics import DRAFT_COST_MODES, Summary, summarize
from .models import ConfigError, ModelSpec, default_prompt, make_pair
from .policy import AdaptiveConfig
from .theory import CostModel
from .tree import load_template
from .verifier import greedy_decode

BUNDLE_SCHEMA = 1

KIND_ALIASES = {
    "coupled": "coupled_pair",
    "coupled_pair": "coupled_pair",
    "schedule": "entropy_schedule",
    "entropy": "entropy_schedule",
    "entropy_schedule": "entropy_schedule",
    "ngram": "ngram_corpus",
    "ngram_corpus": "ngram_corpus",
}
PARAM_ALIASES = {"eps": "epsilon", "vocab": "vocab_size", "v": "vocab_size"}
# headroom past max_tokens for speculative positions of the schedule model
HORIZON_SLACK = 64


class LosslessnessError(RuntimeError):
    """Speculative output diverged from target-only greedy decoding."""


def _parse_scalar(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_model_arg(arg: str) -> dict:
    """``"coupled:eps=0.05,vocab=16"`` -> model spec dict."""
    kind, _, rest = arg.partition(":")
    kind = kind.strip()
    if kind not in KIND_ALIASES:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {sorted(KIND_ALIASES)}")
    d: dict = {"kind": KIND_ALIASES[kind]}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"model option {item!r} is not key=value")
        d[PARAM_ALIASES.get(key.strip(), key.strip())] = _parse_scalar(val.strip())
    return d


@dataclass
class ExperimentConfig:
    model: dict = field(default_factory=lambda: {"kind": "coupled_pair", "epsilon": 0.05})
    modes: list[str] = field(default_factory=lambda: ["sage"])
    max_tokens: int = 256
    seeds: list[int] = field(default_factory=lambda: [0])
    adaptive: dict = field(default_factory=dict)
    chain_depth: int = 5
    template: str | None = None
    c_d: float = 0.05
    c_t: float = 1.0
    draft_cost_mode: str = "per_node"
    self_check: bool = True
    grid: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.modes == ["all"] or self.modes == "all":
            self.modes = list(MODES)
        if isinstance(self.modes, str):
            self.modes = [self.modes]
        bad = [m for m in self.modes if m not in MODES]
        if bad or not self.modes:
            raise ConfigError(f"unknown modes {bad}; expected some of {MODES} or 'all'")
        if int(self.max_tokens) < 1:
            raise ConfigError("max_tokens must be >= 1")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.chain_depth < 1:
            raise ConfigError("chain_depth must be >= 1")
        if self.draft_cost_mode not in DRAFT_COST_MODES:
            raise ConfigError(f"draft_cost_mode must be one of {DRAFT_COST_MODES}")
        if not isinstance(self.grid, dict):
            raise ConfigError("grid must map parameter names to value lists")
        self.max_tokens = int(self.max_tokens)
        self.seeds = [int(s) for s in self.seeds]
        # validate eagerly so bad configs fail before any decoding
        self.adaptive_config()
        self.cost()
        self.model_spec(self.seeds[0])

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**copy.deepcopy(d))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}

    def adaptive_config(self) -> AdaptiveConfig:
        try:
            return AdaptiveConfig.from_dict(self.adaptive)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def cost(self) -> CostModel:
        try:
            return CostModel(float(self.c_d), float(self.c_t))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def model_spec(self, seed: int) -> ModelSpec:
        d = dict(self.model)
        d["seed"] = seed
        if KIND_ALIASES.get(d.get("kind")) is not None:
            d["kind"] = KIND_ALIASES[d["kind"]]
        if d.get("kind") == "entropy_schedule":
            params = dict(d.get("params", {}))
            if "horizon" not in d and "horizon" not in params:
                d["horizon"] = self.max_tokens + HORIZON_SLACK
        return ModelSpec.from_dict(d)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(d)


def shipped_config(name: str) -> ExperimentConfig:
    return load_config(resources.files("sagedecode") / "data" / f"{name}.json")


@dataclass
class RunResult:
    seed: int
    trace: DecodeTrace
    summary: Summary


def run_seed(cfg: ExperimentConfig, seed: int) -> list[RunResult]:
    """All configured modes for one seed, each checked against greedy decoding."""
    spec = cfg.model_spec(seed)
    draft, target = make_pair(spec)
    prompt = default_prompt(spec)
    acfg = cfg.adaptive_config()
    template = load_template(cfg.template) if cfg.template else None
    cost = cfg.cost()
    out = []
    reference = None
    for mode in cfg.modes:
        trace = decode(mode, draft, target, prompt, cfg.max_tokens, acfg, cfg.chain_depth, template)
        if cfg.self_check:
            if reference is None:
                reference = greedy_decode(target, prompt, cfg.max_tokens, acfg.eos_token)
            if trace.output != reference:
                first = next((i for i, (a, b) in enumerate(zip(trace.output, reference)) if a != b),
                             min(len(trace.output), len(reference)))
                raise LosslessnessError(f"{mode} (seed {seed}) diverged from greedy output at token {first}")
        out.append(RunResult(seed, trace, summarize(trace, cost, cfg.draft_cost_mode)))
    return out


def run_experiment(cfg: ExperimentConfig) -> list[RunResult]:
    results = []
    for seed in cfg.seeds:
        results.extend(run_seed(cfg, seed))
    return results


def bundle(cfg: ExperimentConfig, results: list[RunResult]) -> dict:
    return {
        "schema": BUNDLE_SCHEMA,
        "config": cfg.to_dict(),
        "runs": [{"seed": r.seed, "trace": r.trace.to_dict()} for r in results],
    }


def traces_from_bundle(d: dict) -> list[tuple[int, DecodeTrace]]:
    if "runs" not in d:
        return [(None, DecodeTrace.from_dict(d))]
    if d.get("schema") != BUNDLE_SCHEMA:
        raise ValueError(f"unsupported bundle schema {d.get('schema')!r}")
    return [(r["seed"], DecodeTrace.from_dict(r["trace"])) for r in d["runs"]]


def summary_rows(results: list[RunResult]) -> list[dict]:
    return [{"seed": r.seed, **r.summary.to_dict()} for r in results]


# -- sweeps -------------------------------------------------------------------

_TOP_KEYS = {"max_tokens", "chain_depth", "c_d", "c_t", "draft_cost_mode", "template"}
_ADAPTIVE_KEYS = {f.name for f in fields(AdaptiveConfig)}


def with_param(base: dict, name: str, value) -> dict:
    """Copy of a config dict with one parameter replaced, wherever it lives."""
    d = copy.deepcopy(base)
    if name in ("mode", "modes"):
        d["modes"] = value if isinstance(value, list) else [value]
    elif name in ("seed", "seeds"):
        d["seeds"] = value if isinstance(value, list) else [value]
    elif name in _TOP_KEYS:
        d[name] = value
    elif name in _ADAPTIVE_KEYS:
        d.setdefault("adaptive", {})[name] = value
    else:
        model = d.setdefault("model", {})
        name = PARAM_ALIASES.get(name, name)
        if name in ("vocab_size", "kind"):
            model[name] = value
        else:
            model.setdefault("params", {})[name] = value
            model.pop(name, None)
    return d


def grid_points(grid: dict) -> list[dict]:
    if not grid or any(not isinstance(v, list) or not v for v in grid.values()):
        raise ConfigError("sweep grid is empty")
    names = list(grid)
    return [dict(zip(names, combo)) for combo in itertools.product(*(grid[n] for n in names))]


def _sweep_point(args) -> list[dict]:
    base, point = args
    d = base
    for k, v in point.items():
        d = with_param(d, k, v)
    d["grid"] = {}
    cfg = ExperimentConfig.from_dict(d)
    return [{**point, "seed": r.seed, "mode": r.summary.mode, "mean_tau": r.summary.mean_tau,
             "modeled_speedup": r.summary.modeled_speedup, "rounds": r.summary.rounds,
             "tokens": r.summary.tokens} for r in run_experiment(cfg)]


def run_sweep(cfg: ExperimentConfig, grid: dict | None = None, workers: int = 1) -> list[dict]:
    """One row per (grid point, seed, mode), in grid order regardless of ``workers``."""
    points = grid_points(grid if grid is not None else cfg.grid)
    base = cfg.to_dict()
    base["grid"] = {}
    jobs = [(base, p) for p in points]
    # validate every point before spending time on any of them
    for b, p in jobs:
        d = b
        for k, v in p.items():
            d = with_param(d, k, v)
        ExperimentConfig.from_dict(d)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_sweep_point, jobs))
    else:
        parts = [_sweep_point(j) for j in jobs]
    return [row for part in parts for row in part]


# -- two-regime benchmark -----------------------------------------------------


@dataclass
class BenchmarkResult:
    seeds: list[int]
    sage_tau: list[float]
    tree_tau: list[float]
    depth_low: float
    depth_high: float
    width_low: float
    width_high: float
    sage_nodes: float
    tree_nodes: float

    @property
    def sage_mean_tau(self) -> float:
        return sum(self.sage_tau) / len(self.sage_tau)

    @property
    def tree_mean_tau(self) -> float:
        return sum(self.tree_tau) / len(self.tree_tau)


def two_regime_benchmark(cfg: ExperimentConfig | None = None) -> BenchmarkResult:
    """SAGE vs the static tree on the shipped two-regime entropy schedule.

    Rounds are labelled by the schedule regime at the round's start
    position; the first round (static template) is excluded from the depth
    and width averages.
    """
    cfg = cfg or shipped_config("two_regime")
    cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "modes": ["sd_tree", "sage"]})
    sums = {"low": [0.0, 0.0, 0], "high": [0.0, 0.0, 0]}
    sage_tau, tree_tau, sage_nodes, tree_nodes = [], [], [], []
    for seed in cfg.seeds:
        spec = cfg.model_spec(seed)
        draft, _ = make_pair(spec)
        labels = draft.core.labels
        means = [float(m) for _, m in spec.params["regimes"]]
        low = means.index(min(means))
        tree_run, sage_run = run_seed(cfg, seed)
        tree_tau.append(tree_run.summary.mean_tau)
        sage_tau.append(sage_run.summary.mean_tau)
        tree_nodes.append(tree_run.summary.mean_nodes)
        sage_nodes.append(sage_run.summary.mean_nodes)
        for r in sage_run.trace.records[1:]:
            key = "low" if labels[r.position] == low else "high"
            s = sums[key]
            s[0] += r.depth_used
            s[1] += r.width_used
            s[2] += 1
    return BenchmarkResult(
        cfg.seeds, sage_tau, tree_tau,
        sums["low"][0] / sums["low"][2], sums["high"][0] / sums["high"][2],
        sums["low"][1] / sums["low"][2], sums["high"][1] / sums["high"][2],
        sum(sage_nodes) / len(sage_nodes), sum(tree_nodes) / len(tree_nodes),
    )
