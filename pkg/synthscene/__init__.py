from synthscene.camera import Camera, default_rig, project_points, project_to_camera, unproject_to_ground
from synthscene.dataset import DatasetParseError, read_dataset, scene_digest, write_dataset
from synthscene.geometry import PERCEPTION_RANGE, PerceptionRange, resample_polyline
from synthscene.render import render_views
from synthscene.scene import (
    MAP_CLASSES,
    Agent,
    MapElement,
    Scene,
    SceneConfig,
    SceneConfigError,
    VectorMap,
    generate_scene,
    resize_map,
)

__all__ = [
    "MAP_CLASSES",
    "PERCEPTION_RANGE",
    "Agent",
    "Camera",
    "DatasetParseError",
    "MapElement",
    "PerceptionRange",
    "Scene",
    "SceneConfig",
    "SceneConfigError",
    "VectorMap",
    "default_rig",
    "generate_scene",
    "project_points",
    "project_to_camera",
    "read_dataset",
    "render_views",
    "resample_polyline",
    "resize_map",
    "scene_digest",
    "unproject_to_ground",
    "write_dataset",
]
