"""Kernel backend selection.

The compiled extension is used when it imports; ``HOMOFLOW_KERNELS=python``
forces the numpy fallback. Both expose the same functions.
"""
import os

from . import _kernels_py

BACKENDS = {"python": _kernels_py}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["cython"] = _compiled


def get_backend(name=None):
    if name is None:
        name = os.environ.get("HOMOFLOW_KERNELS", "cython" if _compiled is not None else "python")
    if name not in BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}")
    return BACKENDS[name]


BACKEND = "cython" if get_backend() is _compiled else "python"
