"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly, unless the environment
variable ``SAGEDECODE_DISABLE_NUMBA`` is set to a non-empty value other
than ``0``. Both modules stay importable for side-by-side tests and the
benchmark in ``benchmarks/bench_kernels.py``.
"""

import os

from . import _numpy

_disabled = os.environ.get("SAGEDECODE_DISABLE_NUMBA", "") not in ("", "0")

if _disabled:
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba missing
        _impl = _numpy
        BACKEND = "numpy"

hash_uniforms = _impl.hash_uniforms
leading_successes = _impl.leading_successes
min_p1_for_entropy = _impl.min_p1_for_entropy
mix_weight_for_entropy = _impl.mix_weight_for_entropy
lagged_pearson = _impl.lagged_pearson
ancestor_mask = _impl.ancestor_mask

__all__ = [
    "BACKEND",
    "hash_uniforms",
    "leading_successes",
    "min_p1_for_entropy",
    "mix_weight_for_entropy",
    "lagged_pearson",
    "ancestor_mask",
]
