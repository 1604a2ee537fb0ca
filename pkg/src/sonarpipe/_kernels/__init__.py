"""Hot-loop kernels with backend selection.

The compiled extension (``_core``) is used when it was built and imports
cleanly; otherwise the NumPy fallback is used. Set ``SONARPIPE_BACKEND=python``
to force the fallback (``compiled`` makes a missing extension an error).
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _fallback

KERNEL_NAMES = (
    "gmm_apply",
    "median3x3",
    "erode_cross",
    "dilate_cross",
    "open_cross3x3",
    "connected_components",
)


def _load_compiled() -> ModuleType | None:
    try:
        from . import _core
    except ImportError:
        return None
    return _core


compiled = _load_compiled()
fallback = _fallback


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` ('compiled', 'python' or None for auto)."""
    if name is None:
        name = os.environ.get("SONARPIPE_BACKEND", "auto")
    if name == "python":
        return _fallback
    if name == "compiled":
        if compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .` or `python setup.py build_ext --inplace`")
        return compiled
    if name == "auto":
        return compiled if compiled is not None else _fallback
    raise ValueError(f"unknown kernel backend {name!r}")


backend = get_backend()
BACKEND_NAME = "compiled" if backend is compiled else "python"
