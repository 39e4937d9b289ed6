"""Kernel backend selection.

The compiled extension is preferred; set ``FPBP_PURE_PYTHON=1`` to force the
numpy fallback (useful for benchmarking and for platforms without a C
compiler).
"""
from __future__ import annotations

import os

if os.environ.get("FPBP_PURE_PYTHON", "") not in ("", "0"):
    from ._kernels_py import gml_objective, raycast_grid

    BACKEND = "python"
else:
    try:
        from ._ckernels import gml_objective, raycast_grid

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._kernels_py import gml_objective, raycast_grid

        BACKEND = "python"

__all__ = ["BACKEND", "gml_objective", "raycast_grid"]
