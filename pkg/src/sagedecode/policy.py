"""Confidence-to-shape policy and the acceptance-history depth controller."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field, fields

from .models import ConfigError

THRESHOLD_MODES = ("node", "path")
HISTORY_SIGNALS = ("committed", "tau")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class AdaptiveConfig:
    d_min: int = 3
    d_max: int = 8
    w_min: int = 2
    w_max: int = 10
    k: int = 10
    n_max: int = 64
    window: int = 10
    lower_thresh: float = 2.0
    upper_thresh: float = 3.0
    threshold_mode: str = "node"
    # what the history window averages: tokens advanced per round (tau + 1)
    # or accepted draft tokens only; with "tau" and upper_thresh >= d_min the
    # depth cap can never rise again once it reaches d_min
    history_signal: str = "committed"
    eos_token: int | None = None

    def __post_init__(self):
        if not 2 <= self.d_min <= self.d_max:
            raise ConfigError(f"need 2 <= d_min <= d_max, got {self.d_min}, {self.d_max}")
        if not 1 <= self.w_min <= self.w_max:
            raise ConfigError(f"need 1 <= w_min <= w_max, got {self.w_min}, {self.w_max}")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.n_max < self.d_min:
            raise ConfigError("n_max must be >= d_min")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if not self.lower_thresh < self.upper_thresh:
            raise ConfigError("lower_thresh must be < upper_thresh")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ConfigError(f"threshold_mode must be one of {THRESHOLD_MODES}")
        if self.history_signal not in HISTORY_SIGNALS:
            raise ConfigError(f"history_signal must be one of {HISTORY_SIGNALS}")

    @classmethod
    def from_dict(cls, d: dict) -> "AdaptiveConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown AdaptiveConfig fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TreeShapeParams:
    depth: int
    width: int
    alpha: float


@dataclass
class HistoryTracker:
    """Sliding window of acceptance lengths steering the effective maximum depth.

    Once the window is full, every update compares the window mean to the
    two thresholds and moves ``effective_d_max`` one step down (mean below
    the lower threshold) or up (mean above the upper threshold).
    """

    cfg: AdaptiveConfig = field(default_factory=AdaptiveConfig)
    effective_d_max: int | None = None
    recent_taus: deque = field(init=False)

    def __post_init__(self):
        if self.effective_d_max is None:
            self.effective_d_max = self.cfg.d_max
        if not self.cfg.d_min <= self.effective_d_max <= self.cfg.d_max:
            raise ConfigError("effective_d_max must lie in [d_min, d_max]")
        self.recent_taus = deque(maxlen=self.cfg.window)

    def update(self, tau: int) -> "HistoryTracker":
        if tau < 0:
            raise ValueError("tau must be >= 0")
        self.recent_taus.append(int(tau))
        if len(self.recent_taus) == self.cfg.window:
            mean = sum(self.recent_taus) / self.cfg.window
            if mean < self.cfg.lower_thresh:
                self.effective_d_max = max(self.cfg.d_min, self.effective_d_max - 1)
            elif mean > self.cfg.upper_thresh:
                self.effective_d_max = min(self.cfg.d_max, self.effective_d_max + 1)
        return self


def history_update(tracker: HistoryTracker, tau: int, cfg: AdaptiveConfig | None = None) -> HistoryTracker:
    if cfg is not None and cfg is not tracker.cfg:
        raise ValueError("tracker was built for a different config")
    return tracker.update(tau)


def depth_for(alpha: float, cfg: AdaptiveConfig, tracker: HistoryTracker | None = None) -> int:
    top = cfg.d_max if tracker is None else tracker.effective_d_max
    d = round_half_up(cfg.d_min + alpha * (top - cfg.d_min))
    return min(top, max(cfg.d_min, d))


def width_for(alpha: float, cfg: AdaptiveConfig) -> int:
    w = round_half_up(cfg.w_min + (1.0 - alpha) * (cfg.w_max - cfg.w_min))
    return min(cfg.w_max, max(cfg.w_min, w))


def level_width(base_width: int, level: int, parent_prob: float, cap_first_level: bool = True) -> int:
    """Branching limit at ``level``; level one is capped at ``base_width``."""
    if level < 1:
        raise ValueError("level must be >= 1")
    w = max(1, round_half_up(base_width * (1.0 / level) * (0.5 + parent_prob)))
    if level == 1 and cap_first_level:
        w = min(w, base_width)
    return w


def level_threshold(level: int, depth: int) -> float:
    if not 1 <= level <= depth:
        raise ValueError(f"need 1 <= level <= depth, got {level}, {depth}")
    return 0.1 * level / depth


def shape_for(alpha: float, cfg: AdaptiveConfig, tracker: HistoryTracker | None = None) -> TreeShapeParams:
    return TreeShapeParams(depth_for(alpha, cfg, tracker), width_for(alpha, cfg), float(alpha))
