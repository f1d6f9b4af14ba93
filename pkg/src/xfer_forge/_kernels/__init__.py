"""Tokenizer kernels with a compiled core and a pure-Python fallback.

Importing this package picks the Cython extension when it was built and
falls back to pykernels otherwise. ``BACKEND`` reports which one won.
"""

try:
    from . import _wordpiece as _impl

    BACKEND = "cython"
except ImportError:  # extension not built
    from . import pykernels as _impl

    BACKEND = "python"

from . import pykernels

count_pairs = _impl.count_pairs
merge_and_delta = _impl.merge_and_delta
greedy_segment = _impl.greedy_segment

__all__ = ["BACKEND", "count_pairs", "merge_and_delta", "greedy_segment", "pykernels"]
