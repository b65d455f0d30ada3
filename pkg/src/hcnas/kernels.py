"""Kernel backend selection.

The compiled extension is used when it imports; otherwise (or when
``HCNAS_PURE_PYTHON=1``) the numpy fallback is used. ``BACKEND`` names the
active one.
"""
import os

from . import _kernels_py

if os.environ.get("HCNAS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

relaxed_mckp = _impl.relaxed_mckp
prefix_gather_sum = _impl.prefix_gather_sum
FEAS_TOL = _kernels_py.FEAS_TOL


def backends():
    """Return every importable backend as ``{name: module}``."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
