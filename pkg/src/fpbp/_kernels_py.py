"""Pure-Python/numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``FPBP_PURE_PYTHON=1`` is set. Signatures and results match the Cython
module exactly.
"""
from __future__ import annotations

import math

import numpy as np

_INF = math.inf


def _blocked(mask, col, row, width, height):
    if col < 0 or row < 0 or col >= width or row >= height:
        return True
    return mask[row, col] != 0


def raycast_grid(mask, u0, v0, u1, v1):
    """Walk every pixel touched by the segment (u0,v0)->(u1,v1) in pixel space.

    Pixel (col, row) covers [col, col+1) x [row, row+1). Pixels outside the
    raster count as blocked. Returns ``(t, col, row)`` for the first blocked
    pixel, ``t`` in [0, 1] being the segment parameter where the segment
    enters it, or ``None`` when the whole segment is clear.
    """
    height, width = mask.shape
    col = math.floor(u0)
    row = math.floor(v0)
    if _blocked(mask, col, row, width, height):
        return 0.0, col, row
    du = u1 - u0
    dv = v1 - v0
    if du == 0.0 and dv == 0.0:
        return None
    sc = 1 if du > 0 else (-1 if du < 0 else 0)
    sr = 1 if dv > 0 else (-1 if dv < 0 else 0)
    while True:
        if sc > 0:
            tu = (col + 1 - u0) / du
        elif sc < 0:
            tu = (col - u0) / du
        else:
            tu = _INF
        if sr > 0:
            tv = (row + 1 - v0) / dv
        elif sr < 0:
            tv = (row - v0) / dv
        else:
            tv = _INF
        if tu < tv:
            if tu > 1.0:
                return None
            col += sc
            t = tu
        elif tv < tu:
            if tv > 1.0:
                return None
            row += sr
            t = tv
        else:
            # exact corner crossing: both side pixels are touched too
            t = tu
            if t > 1.0:
                return None
            if _blocked(mask, col + sc, row, width, height):
                return t, col + sc, row
            if _blocked(mask, col, row + sr, width, height):
                return t, col, row + sr
            col += sc
            row += sr
        if _blocked(mask, col, row, width, height):
            return t, col, row


def gml_objective(candidates, beacons, log_dhat, rho, kappa, min_dist):
    """F_MLE(y) + kappa * sum(rho_i * |y - b_i|) for every candidate row."""
    diff = candidates[:, None, :] - beacons[None, :, :]
    dist = np.sqrt(np.einsum("mnk,mnk->mn", diff, diff))
    resid = log_dhat[None, :] - np.log10(np.maximum(dist, min_dist))
    score = np.einsum("mn,mn->m", resid, resid)
    if kappa != 0.0:
        score = score + kappa * (dist @ rho)
    return score
