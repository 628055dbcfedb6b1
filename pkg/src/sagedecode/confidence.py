"""Entropy-based confidence of a draft distribution.

Confidence is one minus the natural-log entropy of the renormalized top-k
distribution, divided by ``log k``. The ratio does not depend on the log
base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TopKDistribution:
    tokens: np.ndarray
    probs: np.ndarray

    @property
    def k(self) -> int:
        return int(self.probs.shape[0])


@dataclass(frozen=True)
class ConfidenceScore:
    alpha: float
    entropy: float


def topk_order(p: np.ndarray) -> np.ndarray:
    """Token ids by descending probability, ties to the lower id."""
    p = np.asarray(p)
    return np.lexsort((np.arange(p.shape[0]), -p))


def topk_renormalize(p: np.ndarray, k: int) -> TopKDistribution:
    p = np.asarray(p, dtype=np.float64)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > p.shape[0]:
        raise ValueError(f"k={k} exceeds vocabulary size {p.shape[0]}")
    idx = topk_order(p)[:k]
    top = p[idx]
    total = top.sum()
    if total <= 0:
        raise ValueError("top-k entries carry no probability mass")
    return TopKDistribution(idx, top / total)


def shannon_entropy(d: TopKDistribution | np.ndarray) -> float:
    q = d.probs if isinstance(d, TopKDistribution) else np.asarray(d, dtype=np.float64)
    nz = q[q > 0]
    return float(max(0.0, -(nz * np.log(nz)).sum()))


def confidence(d: TopKDistribution) -> ConfidenceScore:
    h = min(shannon_entropy(d), math.log(d.k))
    alpha = min(1.0, max(0.0, 1.0 - h / math.log(d.k)))
    return ConfidenceScore(alpha, h)


def confidence_of(p: np.ndarray, k: int) -> ConfidenceScore:
    """Shortcut: confidence of the top-k renormalization of ``p``."""
    return confidence(topk_renormalize(p, k))
