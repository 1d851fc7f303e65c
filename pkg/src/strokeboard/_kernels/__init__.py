"""Kernel backend selection: compiled extension if available, NumPy otherwise.

Set STROKEBOARD_NO_EXT=1 to force the NumPy fallback (used by the parity
tests and the benchmark).
"""

from __future__ import annotations

import os

from . import numpy_impl

if os.environ.get("STROKEBOARD_NO_EXT"):
    coverage_entries = numpy_impl.coverage_entries
    BACKEND = "numpy"
else:
    try:
        from ._coverage import coverage_entries  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        coverage_entries = numpy_impl.coverage_entries
        BACKEND = "numpy"

__all__ = ["coverage_entries", "BACKEND", "numpy_impl"]
