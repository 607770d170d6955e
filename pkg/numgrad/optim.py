from __future__ import annotations

import logging

import numpy as np

from numgrad.params import ParamStore
from numgrad.tensor import ConfigError, NonFiniteError

logger = logging.getLogger(__name__)


def clip_grad_norm(store: ParamStore, max_norm: float) -> float:
    """Rescale all gradients in place so their global L2 norm is at most max_norm. Returns the norm before clipping."""
    grads = [t.grad for _, t in store.items() if t.grad is not None]
    total = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))
    if not np.isfinite(total):
        raise NonFiniteError(f"gradient norm is {total}")
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for _, t in store.items():
            if t.grad is not None:
                t.grad = t.grad * scale
    return total


class Adam:
    """Adam with decoupled weight decay, stepping every parameter of a store that holds a gradient"""

    def __init__(
        self,
        store: ParamStore,
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
        clip: float = 1.0,
    ) -> None:
        if lr < 0 or not (0 <= betas[0] < 1 and 0 <= betas[1] < 1) or weight_decay < 0:
            raise ConfigError(f"invalid Adam settings lr={lr} betas={betas} weight_decay={weight_decay}")
        self.store = store
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip = clip
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def zero_grad(self) -> None:
        self.store.zero_grad()

    def step(self) -> float:
        norm = clip_grad_norm(self.store, self.clip) if self.clip > 0 else float("nan")
        self.t += 1
        b1, b2 = self.betas
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for name, p in self.store.items():
            if p.grad is None:
                continue
            m = self._m.get(name, np.zeros_like(p.data))
            v = self._v.get(name, np.zeros_like(p.data))
            m = b1 * m + (1 - b1) * p.grad
            v = b2 * v + (1 - b2) * p.grad * p.grad
            self._m[name], self._v[name] = m, v
            update = (m / c1) / (np.sqrt(v / c2) + self.eps) + self.weight_decay * p.data
            fresh = (p.data - self.lr * update).astype(p.dtype)
            fresh.flags.writeable = False
            p.data = fresh
        logger.debug("adam step %d grad norm %.4g", self.t, norm)
        return norm
