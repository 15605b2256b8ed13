"""Kernel backend selection.

The compiled Cython extension is preferred; the pure-Python twin is used when
the extension is unavailable or when ``HETCURVE_PURE_PYTHON=1`` is set.
"""

from __future__ import annotations

import os

from . import _purepy

if os.environ.get("HETCURVE_PURE_PYTHON") == "1":
    _impl = _purepy
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _purepy
        BACKEND = "python"

pava_nondecreasing = _impl.pava_nondecreasing
lower_hull_indices = _impl.lower_hull_indices
enet_coordinate_descent = _impl.enet_coordinate_descent

__all__ = [
    "BACKEND",
    "pava_nondecreasing",
    "lower_hull_indices",
    "enet_coordinate_descent",
]
