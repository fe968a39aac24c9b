"""Selects the numerical kernel backend at import time.

The compiled extension ``faft._core`` is preferred; the pure-numpy module
``faft._kernels_py`` is the drop-in fallback.  Set ``FAFT_PURE_PYTHON=1``
to force the fallback (used by the backend-equivalence tests and the
benchmark).
"""

from __future__ import annotations

import os

from faft import _kernels_py

if os.environ.get("FAFT_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
else:
    try:
        from faft import _core as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

HAS_COMPILED = kernels.BACKEND_NAME == "compiled"


def backend_name() -> str:
    return kernels.BACKEND_NAME
