from __future__ import annotations

import dataclasses

import numpy as np

from numgrad.ops import conv2d
from numgrad.params import ParamStore
from numgrad.tensor import Tensor, concat, relu, reshape

STRIDE = 4


@dataclasses.dataclass(frozen=True, eq=False)
class ViewFeatures:
    maps: Tensor  # cameras x rows' x cols' x D
    stride: int = STRIDE

    @property
    def cameras(self) -> int:
        return self.maps.shape[0]

    @property
    def D(self) -> int:
        return self.maps.shape[-1]

    def camera(self, k: int) -> Tensor:
        return self.maps[k]

    def feature_coords(self, uv: np.ndarray) -> np.ndarray:
        """pixel (u, v) -> continuous (row, col) on the feature map"""
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        return np.stack([uv[:, 1] / self.stride - 0.5, uv[:, 0] / self.stride - 0.5], axis=1)


def conv_stem(image: Tensor, params: ParamStore, D: int, hidden: int = 16) -> Tensor:
    """two 3x3 stride-2 convolutions with ReLU: (rows, cols, C) -> (rows/4, cols/4, D)"""
    cin = image.shape[-1]
    h = relu(conv2d(image, params.get("conv1.w", (3, 3, cin, hidden)), params.bias("conv1.b", hidden), stride=2, padding=1))
    return relu(conv2d(h, params.get("conv2.w", (3, 3, hidden, D)), params.bias("conv2.b", D), stride=2, padding=1))


def encode_views(views: np.ndarray, params: ParamStore, D: int, hidden: int = 16) -> ViewFeatures:
    """Shared stem over every camera image of one frame"""
    maps = []
    for image in np.asarray(views):
        fmap = conv_stem(Tensor(image[..., None]), params, D, hidden)
        maps.append(reshape(fmap, (1,) + fmap.shape))
    return ViewFeatures(concat(maps, axis=0))
