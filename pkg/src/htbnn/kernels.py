"""Backend selection for the hot loops.

The compiled extension is used when it imports; ``HTBNN_BACKEND=python``
forces the numpy fallback.  Custom prior families always run on the fallback.
"""

from __future__ import annotations

import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if os.environ.get("HTBNN_BACKEND", "").lower() == "python" or _compiled is None:
    active = _fallback
else:
    active = _compiled

BACKEND = active.NAME


def get(name: str | None = None):
    """Kernel module by name (``cython`` or ``python``); ``None`` gives the active one."""
    if name is None:
        return active
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise ImportError("the compiled kernels are not built; run pip install -e .")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])
