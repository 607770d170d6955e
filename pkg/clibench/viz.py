from __future__ import annotations

import logging
import pathlib
import warnings

import numpy as np

from pv2bev.grid import BEVGrid

logger = logging.getLogger(__name__)

MID_GRAY = 128


def first_component(features: np.ndarray) -> tuple[np.ndarray, float]:
    """
    Leading eigenvector of the per-cell sample covariance and its eigenvalue.
    `features` is (cells, D).
    """
    x = features - features.mean(axis=0)
    cov = x.T @ x / max(len(x) - 1, 1)
    values, vectors = np.linalg.eigh(cov)
    return vectors[:, -1], float(values[-1])


def pca_projection(bev: BEVGrid) -> np.ndarray:
    """
    (H, W) projection of every cell onto the first principal component, signed
    so the cell with the largest feature norm lands on the bright side.
    """
    H, W, D = bev.meta.shape
    f = np.asarray(bev.features.data, dtype=np.float64).reshape(H * W, D)
    pc, _ = first_component(f)
    proj = (f - f.mean(axis=0)) @ pc
    brightest = int(np.argmax(np.linalg.norm(f, axis=1)))
    if proj[brightest] < 0:
        proj = -proj
    return proj.reshape(H, W)


def pca_grayscale(bev: BEVGrid) -> np.ndarray:
    """uint8 (H, W) image: first-component projection min-max scaled to [0, 255]"""
    H, W, _ = bev.meta.shape
    f = np.asarray(bev.features.data, dtype=np.float64).reshape(H * W, -1)
    if np.ptp(f, axis=0).max() == 0.0:
        warnings.warn("BEV grid has zero variance, writing uniform mid-gray", RuntimeWarning)
        logger.warning("zero-variance BEV grid at frame %d", bev.frame)
        return np.full((H, W), MID_GRAY, dtype=np.uint8)
    proj = pca_projection(bev)
    lo, hi = proj.min(), proj.max()
    if hi == lo:
        warnings.warn("first principal component is flat, writing uniform mid-gray", RuntimeWarning)
        return np.full((H, W), MID_GRAY, dtype=np.uint8)
    return np.round((proj - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(image: np.ndarray, path: str | pathlib.Path) -> pathlib.Path:
    """binary P5, maxval 255, rows top to bottom as stored"""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got shape {image.shape}")
    rows, cols = image.shape
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + image.tobytes())
    logger.info("wrote %dx%d PGM to %s", rows, cols, path)
    return path


def read_pgm(path: str | pathlib.Path) -> np.ndarray:
    buf = pathlib.Path(path).read_bytes()
    magic, size, maxval, payload = buf.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError(f"{path} is not an 8-bit binary PGM")
    cols, rows = (int(v) for v in size.split())
    if len(payload) != rows * cols:
        raise ValueError(f"{path}: {len(payload)} payload bytes for {rows}x{cols}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(rows, cols)
