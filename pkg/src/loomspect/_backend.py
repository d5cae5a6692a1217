"""Selects the scan-kernel backend at import time.

The compiled extension is preferred when present; otherwise the NumPy
fallback takes over transparently. LOOMSPECT_BACKEND=python|compiled forces
the choice (the benchmark and the cross-backend tests use this), with
"compiled" failing loudly when the extension was never built rather than
silently degrading.
"""

import os

import numpy as np

from . import _scan_np

try:
    from . import _scan_cy
except ImportError:
    _scan_cy = None

_FORCED = os.environ.get("LOOMSPECT_BACKEND", "")
if _FORCED not in ("", "python", "compiled"):
    raise ImportError(
        f"LOOMSPECT_BACKEND must be 'python' or 'compiled', got {_FORCED!r}"
    )
if _FORCED == "compiled" and _scan_cy is None:
    raise ImportError("LOOMSPECT_BACKEND=compiled but loomspect._scan_cy is not built")

if _FORCED == "python" or _scan_cy is None:
    _ACTIVE = _scan_np
    BACKEND = "python"
else:
    _ACTIVE = _scan_cy
    BACKEND = "compiled"


def available_backends():
    names = ["python"]
    if _scan_cy is not None:
        names.append("compiled")
    return names


def _module(backend):
    if backend is None:
        return _ACTIVE
    if backend == "python":
        return _scan_np
    if backend == "compiled":
        if _scan_cy is None:
            raise ValueError("compiled backend requested but the extension is not built")
        return _scan_cy
    raise ValueError(f"unknown backend {backend!r}")


def _as_matrix(a):
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D array, got shape {arr.shape}")
    return arr


def grow_bank(patches, theta, backend=None):
    """See _scan_np.grow_bank; dispatches to the selected backend."""
    return _module(backend).grow_bank(_as_matrix(patches), float(theta))


def nearest_l1(queries, bank, backend=None):
    """See _scan_np.nearest_l1; dispatches to the selected backend."""
    return _module(backend).nearest_l1(_as_matrix(queries), _as_matrix(bank))
