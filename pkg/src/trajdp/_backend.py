"""Select the kernel implementation at import time.

The compiled extension is used when it imports; set ``TRAJDP_PURE_PYTHON=1``
to force the pure-Python twin.
"""
from __future__ import annotations

import os

from . import _kernels_py

ENV_FLAG = "TRAJDP_PURE_PYTHON"

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on build
    _compiled = None


def available():
    """Names of the backends that can be loaded here."""
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


if _compiled is not None and os.environ.get(ENV_FLAG, "") not in ("1", "true", "yes"):
    kernels = _compiled
else:
    kernels = _kernels_py

BACKEND = kernels.BACKEND
