"""Entropy-guided adaptive draft trees for lossless speculative decoding.

Synthetic draft/target model pairs, the adaptive tree builder and greedy
verifier, baseline decoders, closed-form and Monte Carlo theory checks,
and a seeded experiment harness with a ``sagedecode`` CLI.
"""

from .builder import build_tree, fill_template, validate_tree_against_rule
from .confidence import confidence_of, topk_renormalize
from .engine import MODES, DecodeStepRecord, DecodeTrace, baseline_decode, decode, sage_decode
from .metrics import export, lag_autocorrelation, summarize
from .models import ConfigError, Context, ModelSpec, default_prompt, make_pair
from .policy import AdaptiveConfig, HistoryTracker, shape_for
from .theory import CostModel, acceptance_threshold, theory_report
from .tree import DraftTree
from .verifier import greedy_decode, verify

__version__ = "0.1.0"

__all__ = [
    "MODES",
    "AdaptiveConfig",
    "ConfigError",
    "Context",
    "CostModel",
    "DecodeStepRecord",
    "DecodeTrace",
    "DraftTree",
    "HistoryTracker",
    "ModelSpec",
    "acceptance_threshold",
    "baseline_decode",
    "build_tree",
    "confidence_of",
    "decode",
    "default_prompt",
    "export",
    "fill_template",
    "greedy_decode",
    "lag_autocorrelation",
    "make_pair",
    "sage_decode",
    "shape_for",
    "summarize",
    "theory_report",
    "topk_renormalize",
    "validate_tree_against_rule",
    "verify",
    "__version__",
]
