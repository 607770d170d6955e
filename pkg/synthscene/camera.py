from __future__ import annotations

import dataclasses
import math

import numpy as np

"""
Pinhole cameras on the ego vehicle.

Camera frame: x right, y down, z forward (optical axis).
Pixels: u along columns, v along rows; pixel (row r, col c) is centred at (c + 0.5, r + 0.5).
"""

MIN_DEPTH = 0.1


@dataclasses.dataclass(frozen=True, eq=False)
class Camera:
    name: str
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # 3x3, camera axes as columns in the ego frame
    translation: np.ndarray  # camera centre in the ego frame
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"camera {self.name}: focal lengths must be positive")
        R = np.asarray(self.rotation, dtype=np.float64)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6):
            raise ValueError(f"camera {self.name}: rotation is not orthonormal")


def azimuth_rotation(azimuth: float) -> np.ndarray:
    """Level camera looking along `azimuth`, measured from +y towards +x"""
    s, c = math.sin(azimuth), math.cos(azimuth)
    right = [c, -s, 0.0]
    down = [0.0, 0.0, -1.0]
    forward = [s, c, 0.0]
    return np.array([right, down, forward]).T


def default_rig(n_cameras: int = 6, rows: int = 64, cols: int = 96, height: float = 1.6, hfov_deg: float = 90.0) -> list[Camera]:
    """Cameras at equal azimuth steps starting straight ahead, all at the same mounting point"""
    f = (cols / 2) / math.tan(math.radians(hfov_deg) / 2)
    rig = []
    for k in range(n_cameras):
        az = 2 * math.pi * k / n_cameras
        rig.append(
            Camera(
                name=f"cam{k}",
                fx=f,
                fy=f,
                cx=cols / 2,
                cy=rows / 2,
                rotation=azimuth_rotation(az),
                translation=np.array([0.0, 0.0, height]),
                rows=rows,
                cols=cols,
            )
        )
    return rig


def project_points(points: np.ndarray, cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    """
    Vectorised projection of (P, 3) ego-frame points.
    Returns (P, 2) pixel (u, v) and a mask of points in front of the camera and inside the image.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pc = (p - cam.translation) @ np.asarray(cam.rotation)
    depth = pc[:, 2]
    front = depth > MIN_DEPTH
    safe = np.where(front, depth, 1.0)
    u = cam.fx * pc[:, 0] / safe + cam.cx
    v = cam.fy * pc[:, 1] / safe + cam.cy
    inside = front & (u >= 0) & (u < cam.cols) & (v >= 0) & (v < cam.rows)
    return np.stack([u, v], axis=1), inside


def project_to_camera(pt3, cam: Camera) -> tuple[float, float] | None:
    uv, ok = project_points(np.asarray(pt3, dtype=np.float64)[None], cam)
    if not ok[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1])


def ray_directions(cam: Camera, uv: np.ndarray | None = None) -> np.ndarray:
    """Unnormalised ego-frame ray directions through pixel coordinates (every pixel centre by default)"""
    if uv is None:
        v, u = np.meshgrid(np.arange(cam.rows) + 0.5, np.arange(cam.cols) + 0.5, indexing="ij")
        uv = np.stack([u.ravel(), v.ravel()], axis=1)
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    d_cam = np.stack([(uv[:, 0] - cam.cx) / cam.fx, (uv[:, 1] - cam.cy) / cam.fy, np.ones(len(uv))], axis=1)
    return d_cam @ np.asarray(cam.rotation).T


def ground_hits(cam: Camera, uv: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Intersections of pixel rays with the ground plane z = 0, and a mask of rays that reach it"""
    d = ray_directions(cam, uv)
    hit = d[:, 2] < 0
    t = np.where(hit, -cam.translation[2] / np.where(hit, d[:, 2], -1.0), 0.0)
    pts = cam.translation[None, :] + t[:, None] * d
    return pts[:, :2], hit


def unproject_to_ground(uv, cam: Camera) -> np.ndarray | None:
    """Ground-plane (x, y) seen at pixel uv, or None when the ray never reaches the ground"""
    pts, hit = ground_hits(cam, np.asarray(uv, dtype=np.float64)[None])
    return pts[0] if hit[0] else None
