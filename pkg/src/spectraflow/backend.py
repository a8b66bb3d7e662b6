"""Kernel backend selection.

The compiled extension is used when importable; set ``SPECTRAFLOW_BACKEND=python``
to force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

_want = os.environ.get("SPECTRAFLOW_BACKEND", "auto").lower()
_accel = None
if _want != "python":
    try:
        from . import _accel
    except ImportError:
        if _want == "compiled":
            raise

BACKEND = "compiled" if _accel is not None else "python"
kernels = _accel if _accel is not None else _pykernels

sinc2_product = kernels.sinc2_product
multiplier_values = kernels.multiplier_values
multiplier_matrix = kernels.multiplier_matrix
