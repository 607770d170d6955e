from __future__ import annotations

from typing import NamedTuple

import numpy as np

from numgrad.tensor import (
    ShapeError,
    Tensor,
    apply_op,
    as_tensor,
    exp,
    log,
    matmul,
    mean,
    pad,
    reshape,
    sqrt,
    tsum,
)

"""
Composite and primitive kernels on top of the tensor tape:
normalisations, bilinear sampling, pillar pooling and im2col convolutions.
"""


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    # the max shift is a constant, softmax is shift-invariant
    shift = np.max(x.data, axis=axis, keepdims=True)
    e = exp(x - shift)
    return e / tsum(e, axis=axis, keepdims=True)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x - np.max(x.data, axis=axis, keepdims=True)
    return shifted - log(tsum(exp(shifted), axis=axis, keepdims=True))


def layer_norm(
    x: Tensor,
    gamma: Tensor | None = None,
    beta: Tensor | None = None,
    eps: float = 1e-5,
) -> Tensor:
    """Normalise over the last axis. Constant rows map to zeros before the affine part."""
    centred = x - mean(x, axis=-1, keepdims=True)
    var = mean(centred * centred, axis=-1, keepdims=True)
    y = centred / sqrt(var + eps)
    if gamma is not None:
        y = y * gamma
    if beta is not None:
        y = y + beta
    return y


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    if x.shape[-1] != w.shape[0]:
        raise ShapeError("linear", x.shape, w.shape, detail="input width != weight rows")
    if x.ndim == 1:
        y = reshape(matmul(reshape(x, (1, x.shape[0])), w), (w.shape[1],))
    else:
        y = matmul(x, w)
    return y if b is None else y + b


# bilinear sampling


def _corners(pts: np.ndarray):
    """Four integer corners of each continuous (row, col) point with their weights and weight derivatives"""
    r, c = pts[..., 0], pts[..., 1]
    r0, c0 = np.floor(r), np.floor(c)
    fr, fc = r - r0, c - c0
    r0i, c0i = r0.astype(np.int64), c0.astype(np.int64)
    return (
        # (row, col, weight, d weight / d row, d weight / d col)
        (r0i, c0i, (1 - fr) * (1 - fc), -(1 - fc), -(1 - fr)),
        (r0i, c0i + 1, (1 - fr) * fc, -fc, (1 - fr)),
        (r0i + 1, c0i, fr * (1 - fc), (1 - fc), -fr),
        (r0i + 1, c0i + 1, fr * fc, fc, fr),
    )


def grouped_bilinear_sample(grid: Tensor, pts: Tensor) -> Tensor:
    """
    Sample a (H, W, G, C) grid at (N, G, 2) continuous (row, col) points, one
    point set per group G. Integer coordinates are cell centres; corners outside
    the grid read as zeros. Returns (N, G, C), differentiable in grid and pts.
    """
    if grid.ndim != 4 or pts.ndim != 3 or pts.shape[-1] != 2 or pts.shape[1] != grid.shape[2]:
        raise ShapeError("grouped_bilinear_sample", grid.shape, pts.shape)
    H, W, G, C = grid.shape
    N = pts.shape[0]
    group = np.broadcast_to(np.arange(G), (N, G))
    corners = []
    out = np.zeros((N, G, C), dtype=grid.dtype)
    for ri, ci, w, dwr, dwc in _corners(pts.data):
        valid = (ri >= 0) & (ri < H) & (ci >= 0) & (ci < W)
        rc, cc = np.clip(ri, 0, H - 1), np.clip(ci, 0, W - 1)
        value = grid.data[rc, cc, group] * valid[..., None]
        out += w[..., None] * value
        corners.append((rc, cc, valid, w, dwr, dwc, value))

    def grads(g: np.ndarray):
        ggrid = np.zeros_like(grid.data) if grid.requires_grad else None
        gpts = np.zeros_like(pts.data) if pts.requires_grad else None
        for rc, cc, valid, w, dwr, dwc, value in corners:
            if ggrid is not None:
                np.add.at(ggrid, (rc, cc, group), g * (w * valid)[..., None])
            if gpts is not None:
                gv = np.sum(g * value, axis=-1)
                gpts[..., 0] += gv * dwr
                gpts[..., 1] += gv * dwc
        return ggrid, gpts

    return apply_op("grouped_bilinear_sample", out, (grid, pts), grads)


def bilinear_sample(grid: Tensor, pts: Tensor) -> Tensor:
    """Sample an (H, W, D) grid at (P, 2) continuous (row, col) points, zero padded"""
    pts = as_tensor(pts, like=grid)
    if grid.ndim != 3 or pts.ndim != 2 or pts.shape[1] != 2:
        raise ShapeError("bilinear_sample", grid.shape, pts.shape)
    H, W, D = grid.shape
    sampled = grouped_bilinear_sample(reshape(grid, (H, W, 1, D)), reshape(pts, (pts.shape[0], 1, 2)))
    return reshape(sampled, (pts.shape[0], D))


# pillar pooling


class PoolResult(NamedTuple):
    grid: Tensor
    dropped: int


def scatter_add_pool(cells: np.ndarray, feats: Tensor, H: int, W: int) -> PoolResult:
    """
    Sum point features into their (row, col) cell of an H x W grid.
    Points whose cell is outside the grid are dropped and counted.
    """
    cells = np.asarray(cells)
    if cells.ndim != 2 or cells.shape[1] != 2 or feats.ndim != 2 or feats.shape[0] != cells.shape[0]:
        raise ShapeError("scatter_add_pool", cells.shape, feats.shape)
    rows, cols = cells[:, 0].astype(np.int64), cells[:, 1].astype(np.int64)
    valid = (rows >= 0) & (rows < H) & (cols >= 0) & (cols < W)
    flat = rows * W + cols
    D = feats.shape[1]
    out = np.zeros((H * W, D), dtype=feats.dtype)
    np.add.at(out, flat[valid], feats.data[valid])

    def grads(g: np.ndarray):
        gf = np.zeros_like(feats.data)
        gf[valid] = g.reshape(H * W, D)[flat[valid]]
        return (gf,)

    grid = apply_op("scatter_add_pool", out.reshape(H, W, D), (feats,), grads)
    return PoolResult(grid, int(np.count_nonzero(~valid)))


# convolutions


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """(H, W, Cin) * (k, k, Cin, Cout) -> (H', W', Cout) by im2col"""
    if x.ndim != 3 or w.ndim != 4 or w.shape[0] != w.shape[1] or w.shape[2] != x.shape[2]:
        raise ShapeError("conv2d", x.shape, w.shape)
    k, cin, cout = w.shape[0], w.shape[2], w.shape[3]
    xp = pad(x, ((padding, padding), (padding, padding), (0, 0))) if padding else x
    Ho = (xp.shape[0] - k) // stride + 1
    Wo = (xp.shape[1] - k) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError("conv2d", x.shape, w.shape, detail="kernel larger than padded input")
    rows = (np.arange(Ho) * stride)[:, None] + np.arange(k)[None, :]
    cols = (np.arange(Wo) * stride)[:, None] + np.arange(k)[None, :]
    patches = xp[rows[:, None, :, None], cols[None, :, None, :]]  # Ho, Wo, k, k, Cin
    y = matmul(reshape(patches, (Ho * Wo, k * k * cin)), reshape(w, (k * k * cin, cout)))
    if b is not None:
        y = y + b
    return reshape(y, (Ho, Wo, cout))


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """
    Same-padded 1-D convolution along the sequence axis.
    x is (E, L, Cin) or (L, Cin), w is (k, Cin, Cout) with odd k.
    """
    squeeze = x.ndim == 2
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 3 or w.ndim != 3 or w.shape[1] != x.shape[2] or w.shape[0] % 2 == 0:
        raise ShapeError("conv1d", x.shape, w.shape)
    k, cin, cout = w.shape
    E, L, _ = x.shape
    half = k // 2
    xp = pad(x, ((0, 0), (half, half), (0, 0)))
    idx = np.arange(L)[:, None] + np.arange(k)[None, :]
    windows = xp[:, idx]  # E, L, k, Cin
    y = matmul(reshape(windows, (E, L, k * cin)), reshape(w, (k * cin, cout)))
    if b is not None:
        y = y + b
    return reshape(y, (L, cout)) if squeeze else y


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool = True) -> Tensor:
    if not training or p <= 0.0 or rng is None:
        return x
    if p >= 1.0:
        raise ValueError(f"dropout probability {p} must be < 1")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * keep