"""Soft thresholding and its divergence."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np


def soft_threshold(x, theta):
    """Element-wise ``sign(x) * max(|x| - theta, 0)``.

    ``theta`` broadcasts against ``x``, so a column of thresholds applies
    one threshold per row of a batch.
    """
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - theta, 0.0)


def soft_threshold_derivative(x, theta):
    """1 where ``|x| > theta`` and 0 elsewhere (0 on the boundary ``|x| == theta``)."""
    return (np.abs(np.asarray(x, dtype=float)) > theta).astype(float)


def divergence_mean(v, theta):
    """Fraction of entries surviving the threshold, averaged over the last axis.

    Computed from an integer count, so the result is exact and independent
    of summation order.
    """
    v = np.asarray(v, dtype=float)
    count = np.count_nonzero(np.abs(v) > theta, axis=-1)
    return count / v.shape[-1]


@dataclass(frozen=True)
class Denoiser:
    """Soft-threshold denoiser with a constant or per-iteration threshold.

    ``theta`` may be a scalar, a sequence indexed by iteration, or a 1-D
    array of thresholds to run as a batch (``batch=True``).
    """

    theta: Union[float, Sequence[float], np.ndarray] = 1.0
    batch: bool = False
    kind: str = "soft-threshold"

    def __post_init__(self):
        if self.kind != "soft-threshold":
            raise ValueError(f"unsupported denoiser {self.kind!r}")
        if np.any(np.asarray(self.theta, dtype=float) < 0):
            raise ValueError("thresholds must be nonnegative")

    def threshold(self, t: int):
        th = np.asarray(self.theta, dtype=float)
        if self.batch:
            return th[:, None]
        if th.ndim == 0:
            return float(th)
        return float(th[t])

    @property
    def batch_shape(self) -> tuple:
        return (len(self.theta),) if self.batch else ()

    def __call__(self, x, t: int):
        return soft_threshold(x, self.threshold(t))

    def divergence(self, x, t: int):
        return divergence_mean(x, self.threshold(t))
