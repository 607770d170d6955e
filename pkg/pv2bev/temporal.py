from __future__ import annotations

import dataclasses

import numpy as np

from numgrad.ops import bilinear_sample
from numgrad.tensor import reshape
from pv2bev.grid import BEVGrid

"""
One-step temporal alignment of a previous BEV grid.
"""


def warp_bev(prev: BEVGrid, motion) -> BEVGrid:
    """
    Resample `prev` into the current ego frame. `motion` = (dx, dy, dyaw) is the
    current ego pose in the previous ego frame. Cells that map outside the
    previous grid are zero.
    """
    dx, dy, dyaw = (float(v) for v in motion)
    meta = prev.meta
    i0, j0 = meta.center_index
    c, s = np.cos(dyaw), np.sin(dyaw)
    rr, cc = np.meshgrid(np.arange(meta.H, dtype=np.float64), np.arange(meta.W, dtype=np.float64), indexing="ij")
    a, b = cc - j0, rr - i0
    # grid units: columns follow x, rows follow y
    col = c * a - s * b + dx / meta.cell + j0
    row = s * a + c * b + dy / meta.cell + i0
    pts = np.stack([row.ravel(), col.ravel()], axis=1)
    warped = bilinear_sample(prev.features, pts)
    return dataclasses.replace(prev, features=reshape(warped, meta.shape))
