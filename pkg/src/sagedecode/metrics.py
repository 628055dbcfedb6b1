"""Trace statistics, cost-model speedup, entropy autocorrelation and file export."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .engine import DecodeStepRecord, DecodeTrace
from .kernels import lagged_pearson
from .theory import CostModel

DRAFT_COST_MODES = ("per_node", "per_level")
CSV_COLUMNS = tuple(DecodeStepRecord.__dataclass_fields__)


@dataclass(frozen=True)
class Summary:
    mode: str
    mean_tau: float
    rounds: int
    tokens: int
    modeled_speedup: float
    mean_nodes: float
    draft_cost_mode: str = "per_node"

    def to_dict(self) -> dict:
        return asdict(self)


def _draft_units(r: DecodeStepRecord, mode: str) -> int:
    return r.draft_cost_units if mode == "per_node" else r.tree_depth


def summarize(trace: DecodeTrace, cost: CostModel = CostModel(), draft_cost_mode: str = "per_node") -> Summary:
    """Acceptance statistics and speedup relative to vanilla decoding.

    Each round costs ``c_d * units + c_t``; units are tree nodes
    (``per_node``) or tree levels (``per_level``, batched drafting). The
    speedup is ``tokens * c_t`` over the summed round cost, so vanilla
    decoding scores exactly 1 and rescaling both costs changes nothing.
    """
    if draft_cost_mode not in DRAFT_COST_MODES:
        raise ValueError(f"draft_cost_mode must be one of {DRAFT_COST_MODES}")
    if not trace.records:
        raise ValueError("empty trace")
    if cost.c_t == 0:
        raise ValueError("speedup relative to vanilla needs c_t > 0")
    units = sum(_draft_units(r, draft_cost_mode) for r in trace.records)
    calls = sum(r.target_cost_units for r in trace.records)
    total = cost.c_d * units + cost.c_t * calls
    return Summary(
        mode=trace.mode,
        mean_tau=sum(r.tau for r in trace.records) / trace.rounds,
        rounds=trace.rounds,
        tokens=trace.tokens,
        modeled_speedup=trace.tokens * cost.c_t / total,
        mean_nodes=sum(r.node_count for r in trace.records) / trace.rounds,
        draft_cost_mode=draft_cost_mode,
    )


@dataclass(frozen=True)
class Autocorrelation:
    lags: list[int]
    values: list[float]
    degenerate: list[bool]

    def to_dict(self) -> dict:
        return asdict(self)


def lag_autocorrelation(series, max_lag: int, include_zero: bool = False) -> Autocorrelation:
    """Pearson correlation of ``(x_t, x_{t+k})`` pairs for each lag.

    A lag whose pairs have zero variance reports 0 and is flagged.
    """
    x = np.asarray(series, dtype=np.float64)
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if x.ndim != 1 or x.shape[0] <= max_lag + 2:
        raise ValueError(f"series length must exceed max_lag + 2 = {max_lag + 2}")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    vals, deg = lagged_pearson(x, max_lag)
    start = 0 if include_zero else 1
    return Autocorrelation(
        list(range(start, max_lag + 1)),
        [float(v) for v in vals[start:]],
        [bool(d) for d in deg[start:]],
    )


# -- export -------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps_json(obj) -> str:
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def trace_csv(trace: DecodeTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in trace.records:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in asdict(r).values()])
    return buf.getvalue()


def rows_csv(rows: list[dict], columns: list[str] | None = None) -> str:
    if not rows and not columns:
        raise ValueError("no rows and no columns")
    columns = columns or list(rows[0])
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="raise")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def export(obj, fmt: str, path) -> Path:
    """Write a trace, summary, report dict or row list as ``json`` or ``csv``.

    Output bytes depend only on the content. IO errors propagate unchanged.
    """
    path = Path(path)
    if fmt == "json":
        text = dumps_json(obj)
    elif fmt == "csv":
        if isinstance(obj, DecodeTrace):
            text = trace_csv(obj)
        elif isinstance(obj, Summary):
            text = rows_csv([obj.to_dict()])
        elif isinstance(obj, list):
            text = rows_csv(obj)
        else:
            raise TypeError(f"cannot write {type(obj).__name__} as csv")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def load_trace(path) -> DecodeTrace:
    with open(path, encoding="utf-8") as fh:
        return DecodeTrace.from_dict(json.load(fh))


def read_csv_column(path, column: str) -> list[float]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and column not in rows[0]:
        raise KeyError(f"column {column!r} not in {path}")
    return [float(r[column]) for r in rows if r[column] != ""]
