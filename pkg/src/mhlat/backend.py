"""Kernel backend selection.

Prefers the compiled extension, falls back to the pure-Python kernels.
MHLAT_BACKEND=py forces the fallback; MHLAT_BACKEND=c requires the extension.
Both backends are numerically bit-identical; the compiled one is just fast.
"""

import os


def _load():
    forced = os.environ.get("MHLAT_BACKEND", "").strip().lower()
    if forced in ("py", "python", "pure"):
        from mhlat import _kernels_py
        return _kernels_py, "python"
    try:
        from mhlat import _kernels
        return _kernels, "compiled"
    except ImportError:
        if forced in ("c", "compiled", "ext"):
            raise
        from mhlat import _kernels_py
        return _kernels_py, "python"


kernels, BACKEND = _load()


def backend_name() -> str:
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return BACKEND
