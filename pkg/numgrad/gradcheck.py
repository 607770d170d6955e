from __future__ import annotations

import logging
from typing import Callable, NamedTuple

import numpy as np

from numgrad.tensor import ConfigError, NonFiniteError, ShapeError, Tensor, backward, precision

logger = logging.getLogger(__name__)


class GradCheckResult(NamedTuple):
    passed: bool
    max_rel_error: float
    worst_index: tuple[int, ...]
    analytic: np.ndarray
    numeric: np.ndarray

    def __bool__(self) -> bool:
        return self.passed


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5, tol: float = 1e-4) -> GradCheckResult:
    """
    Compare the taped gradient of scalar f at x against central differences,
    coordinate by coordinate, in float64. The relative error of a coordinate is
    |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    if not 1e-6 <= h <= 1e-3:
        raise ConfigError(f"finite-difference step {h} outside [1e-6, 1e-3]")
    x0 = np.array(x.data, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise NonFiniteError("grad_check input has non-finite entries")

    with precision(np.float64):

        def value(arr: np.ndarray) -> float:
            out = f(Tensor(arr, dtype=np.float64))
            if out.size != 1:
                raise ShapeError("grad_check", out.shape, detail="f must be scalar-valued")
            return out.item()

        leaf = Tensor(x0, requires_grad=True, dtype=np.float64)
        out = f(leaf)
        if out.size != 1:
            raise ShapeError("grad_check", out.shape, detail="f must be scalar-valued")
        if not np.isfinite(out.item()):
            raise NonFiniteError(f"f(x) = {out.item()}")
        (analytic,) = backward(out, [leaf])

        numeric = np.zeros_like(x0)
        for i in np.ndindex(x0.shape):
            plus, minus = x0.copy(), x0.copy()
            plus[i] += h
            minus[i] -= h
            numeric[i] = (value(plus) - value(minus)) / (2 * h)

    rel = np.abs(analytic - numeric) / np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    worst = np.unravel_index(int(np.argmax(rel)), rel.shape) if rel.size else ()
    worst_err = float(rel[worst]) if rel.size else 0.0
    passed = worst_err <= tol
    if not passed:
        logger.info("grad_check failed: rel error %.3g at %s (tol %.1g)", worst_err, worst, tol)
    return GradCheckResult(passed, worst_err, tuple(int(i) for i in worst), analytic, numeric)
