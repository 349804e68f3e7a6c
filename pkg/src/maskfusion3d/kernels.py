"""Kernel dispatch: the compiled extension when importable, else the numpy fallback.

Set ``MASKFUSION3D_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("MASKFUSION3D_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

felzenszwalb_components = _impl.felzenszwalb_components
splat_min_depth = _impl.splat_min_depth
