"""Dense image/feature-map conventions.

A tensor is a numpy array of shape ``(channels, height, width)`` stored
C-contiguous, i.e. channel-major. The synthesis pipeline keeps everything in
float32; the operations themselves preserve the dtype they are handed so
tests can drive them in float64.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, InputError

Tensor = np.ndarray


def as_tensor(data, dtype=np.float32) -> Tensor:
    """Coerce to a C-contiguous (C, H, W) array of the given float dtype."""
    arr = np.ascontiguousarray(data, dtype=dtype)
    require_chw(arr)
    return arr


def require_chw(t: Tensor, name: str = "tensor") -> None:
    if not isinstance(t, np.ndarray) or t.ndim != 3:
        raise ConfigurationError(f"{name} must be a (channels, height, width) array")
    if any(d < 1 for d in t.shape):
        raise ConfigurationError(f"{name} has an empty dimension: {t.shape}")


def check_finite(t: np.ndarray, context: str) -> None:
    if not np.all(np.isfinite(t)):
        raise InputError(f"{context}: non-finite values present")


def clamp_pixels(t: Tensor) -> Tensor:
    """Clamp to the displayable [0, 255] range. Used only on final output."""
    return np.clip(t, 0.0, 255.0)
