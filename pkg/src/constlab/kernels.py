"""Kernel backend selected at import.

The compiled extension is used when it imports; otherwise the numpy
fallback.  Setting ``CONSTLAB_PURE=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("CONSTLAB_PURE", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND: str = _impl.NAME

mark_segment = _impl.mark_segment
pattern_counts_by_r = _impl.pattern_counts_by_r
product_sums = _impl.product_sums
support_counts = _impl.support_counts
probe_counts_by_r = _impl.probe_counts_by_r

__all__ = [
    "BACKEND",
    "mark_segment",
    "pattern_counts_by_r",
    "product_sums",
    "support_counts",
    "probe_counts_by_r",
]
