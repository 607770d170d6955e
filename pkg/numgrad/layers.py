from __future__ import annotations


import numpy as np

from numgrad.ops import dropout, layer_norm, linear
from numgrad.params import ParamStore
from numgrad.tensor import Tensor, relu

"""
Parameterised building blocks: each takes the ParamStore scope that owns its weights.
"""


def dense(params: ParamStore, x: Tensor, out_dim: int, bias: bool = True) -> Tensor:
    """x @ w + b, with w (in, out) and b (out,) named `w` / `b` in the scope"""
    w = params.weight("w", x.shape[-1], out_dim)
    return linear(x, w, params.bias("b", out_dim) if bias else None)


def mlp(
    params: ParamStore,
    x: Tensor,
    hidden: int,
    out_dim: int,
    p_drop: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """two layers, ReLU in between"""
    h = relu(dense(params.scope("fc1"), x, hidden))
    h = dropout(h, p_drop, rng)
    return dense(params.scope("fc2"), h, out_dim)


def norm(params: ParamStore, x: Tensor) -> Tensor:
    D = x.shape[-1]
    return layer_norm(x, params.get("gamma", (D,), init="ones"), params.get("beta", (D,), init="zeros"))
