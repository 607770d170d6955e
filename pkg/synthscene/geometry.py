from __future__ import annotations

import dataclasses

import numpy as np

"""
Planar geometry in the ego frame: +x to the right, +y forward, metres.
Poses are (x, y, yaw) with yaw the heading measured counter-clockwise from +y.
"""


@dataclasses.dataclass(frozen=True)
class PerceptionRange:
    x_min: float = -15.0
    x_max: float = 15.0
    y_min: float = -30.0
    y_max: float = 30.0

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2])

    @property
    def half_extent(self) -> np.ndarray:
        return np.array([self.width / 2, self.height / 2])

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return (p[:, 0] >= self.x_min) & (p[:, 0] <= self.x_max) & (p[:, 1] >= self.y_min) & (p[:, 1] <= self.y_max)

    def clamp(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return np.stack([np.clip(p[..., 0], self.x_min, self.x_max), np.clip(p[..., 1], self.y_min, self.y_max)], axis=-1)


PERCEPTION_RANGE = PerceptionRange()


def rotation(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s], [s, c]])


def to_world(points: np.ndarray, pose: np.ndarray) -> np.ndarray:
    """points given in the frame of `pose` -> world frame"""
    return np.asarray(points) @ rotation(pose[2]).T + np.asarray(pose[:2])


def to_local(points: np.ndarray, pose: np.ndarray) -> np.ndarray:
    """world points -> frame of `pose`"""
    return (np.asarray(points) - np.asarray(pose[:2])) @ rotation(pose[2])


def relative_pose(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    """Pose of `cur` expressed in the frame of `prev`: the ego motion between the two frames"""
    dxy = to_local(np.asarray(cur[:2])[None], prev)[0]
    dyaw = (cur[2] - prev[2] + np.pi) % (2 * np.pi) - np.pi
    return np.array([dxy[0], dxy[1], dyaw])


def polyline_length(poly: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(poly, axis=0), axis=1)))


def resample_polyline(poly: np.ndarray, n: int) -> np.ndarray:
    """
    n points equally spaced by arc length, endpoints kept.
    The work is done in a canonical direction so reversing the input reverses the output exactly.
    """
    poly = np.asarray(poly, dtype=np.float64)
    if n < 2 or len(poly) < 1:
        raise ValueError(f"cannot resample {len(poly)} vertices to {n}")
    flip = tuple(poly.ravel()) > tuple(poly[::-1].ravel())
    work = poly[::-1] if flip else poly
    seg = np.linalg.norm(np.diff(work, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] == 0.0:
        out = np.repeat(work[:1], n, axis=0)
    else:
        targets = np.linspace(0.0, cum[-1], n)
        out = np.stack([np.interp(targets, cum, work[:, 0]), np.interp(targets, cum, work[:, 1])], axis=1)
        out[0], out[-1] = work[0], work[-1]
    return out[::-1].copy() if flip else out


def point_to_polyline_distance(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to the nearest segment of the polyline"""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    poly = np.asarray(poly, dtype=np.float64)
    if len(poly) == 1:
        return np.linalg.norm(p - poly[0], axis=1)
    a, b = poly[:-1], poly[1:]
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=1), 1e-18)
    t = np.clip(np.einsum("pkd,kd->pk", p[:, None, :] - a[None], ab) / denom, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.min(np.linalg.norm(p[:, None, :] - closest, axis=2), axis=1)


def split_runs(points: np.ndarray, keep: np.ndarray, min_len: int = 2) -> list[np.ndarray]:
    """Maximal runs of consecutive kept points, each with at least min_len points"""
    runs: list[np.ndarray] = []
    start = None
    for i, k in enumerate(list(keep) + [False]):
        if k and start is None:
            start = i
        elif not k and start is not None:
            if i - start >= min_len:
                runs.append(np.asarray(points[start:i]))
            start = None
    return runs


def cell_of(points: np.ndarray, rng: PerceptionRange, rows: int, cols: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer (row, col) cell of each point; rows follow +y, cols follow +x"""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    row = np.floor((p[:, 1] - rng.y_min) * rows / rng.height).astype(np.int64)
    col = np.floor((p[:, 0] - rng.x_min) * cols / rng.width).astype(np.int64)
    return row, col
