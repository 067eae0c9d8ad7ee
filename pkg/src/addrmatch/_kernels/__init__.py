"""Edit-distance kernels: compiled extension when built, pure Python otherwise.

Set ADDRMATCH_PURE=1 to force the fallback (used by the kernel benchmark).
"""
from __future__ import annotations

import os

if os.environ.get("ADDRMATCH_PURE") == "1":
    from . import _pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _speedups as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        from . import _pure as _impl  # type: ignore[no-redef]

        BACKEND = "pure"

levenshtein = _impl.levenshtein
levenshtein2 = _impl.levenshtein2
levenshtein_many = _impl.levenshtein_many
levenshtein2_many = _impl.levenshtein2_many
distance_matrix = _impl.distance_matrix

__all__ = [
    "BACKEND",
    "levenshtein",
    "levenshtein2",
    "levenshtein_many",
    "levenshtein2_many",
    "distance_matrix",
]
