"""Selects the kernel backend at import time.

The compiled extension (``splinenet._kernels_cy``) is preferred when it
imported cleanly; the numpy fallback is always available. Override with
the environment variable ``SPLINENET_BACKEND`` set to ``cython``,
``python``, or ``auto`` (default).
"""

import os

from . import _kernels_py

try:
    from . import _kernels_cy
except ImportError:
    _kernels_cy = None


def _select():
    choice = os.environ.get("SPLINENET_BACKEND", "auto").lower()
    if choice == "python":
        return _kernels_py
    if choice == "cython":
        if _kernels_cy is None:
            raise ImportError(
                "SPLINENET_BACKEND=cython but the compiled extension is not available"
            )
        return _kernels_cy
    if choice != "auto":
        raise ValueError(f"unknown SPLINENET_BACKEND value: {choice!r}")
    return _kernels_cy if _kernels_cy is not None else _kernels_py


kernels = _select()


def backend_name():
    """Name of the active kernel backend ('cython' or 'python')."""
    return kernels.BACKEND_NAME


def available_backends():
    """Kernel modules importable in this environment, keyed by name."""
    out = {"python": _kernels_py}
    if _kernels_cy is not None:
        out["cython"] = _kernels_cy
    return out
