"""Kernel selection: compiled extension when importable, else pure Python.

Set ``GWMAXDEG_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

kernels = _kernels_py
BACKEND = "python"

if os.environ.get("GWMAXDEG_BACKEND", "").strip().lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"
