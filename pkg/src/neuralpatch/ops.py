"""Low-level layer operations: convolution, ReLU, pooling, resampling.

Convolution is implemented by unrolling 3x3 windows into a matrix and
multiplying (im2col); the same unrolling kernel feeds the patch matcher, so
this file owns the single hot inner loop of the whole engine. Backward
passes compute gradients with respect to inputs only; the network weights
are fixed throughout synthesis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError
from .tensor import Tensor, require_chw


@dataclass(eq=False)
class ConvSpec:
    """A named 3x3 convolution: zero padding 1, stride 1, output size = input size."""

    name: str
    in_channels: int
    out_channels: int
    weight: np.ndarray  # (out, in, 3, 3) float32
    bias: np.ndarray  # (out,) float32
    _backward: "ConvSpec | None" = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.weight.shape != (self.out_channels, self.in_channels, 3, 3):
            raise ConfigurationError(
                f"{self.name}: weight shape {self.weight.shape} does not match "
                f"({self.out_channels}, {self.in_channels}, 3, 3)"
            )
        if self.bias.shape != (self.out_channels,):
            raise ConfigurationError(f"{self.name}: bias shape {self.bias.shape}")

    def backward_spec(self) -> "ConvSpec":
        """Transpose convolution used to push gradients back to the input."""
        if self._backward is None:
            flipped = self.weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            self._backward = ConvSpec(
                name=f"{self.name}.T",
                in_channels=self.out_channels,
                out_channels=self.in_channels,
                weight=np.ascontiguousarray(flipped),
                bias=np.zeros(self.in_channels, dtype=self.weight.dtype),
            )
        return self._backward


def im2col(t: Tensor, k: int, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Unroll k x k windows into rows.

    Returns an array of shape (positions, C*k*k). Rows scan the window grid
    in row-major order; each row flattens its window channel-major, matching
    the (in, kh, kw) layout of convolution weights.
    """
    require_chw(t)
    if pad:
        t = np.pad(t, ((0, 0), (pad, pad), (pad, pad)))
    c, h, w = t.shape
    if h < k or w < k:
        raise ConfigurationError(f"window {k} exceeds spatial dims {(h, w)}")
    windows = sliding_window_view(t, (k, k), axis=(1, 2))
    if stride > 1:
        windows = windows[:, ::stride, ::stride]
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(-1, c * k * k)
    return np.ascontiguousarray(cols)


def conv2d_forward(t: Tensor, spec: ConvSpec) -> Tensor:
    require_chw(t)
    if t.shape[0] != spec.in_channels:
        raise ConfigurationError(
            f"{spec.name}: expected {spec.in_channels} input channels, got {t.shape[0]}"
        )
    _, h, w = t.shape
    cols = im2col(t, 3, pad=1)
    flat = cols @ spec.weight.reshape(spec.out_channels, -1).T + spec.bias
    return np.ascontiguousarray(flat.T.reshape(spec.out_channels, h, w))


def conv2d_backward(t: Tensor, spec: ConvSpec, grad_output: Tensor) -> Tensor:
    """Gradient of a convolution with respect to its input.

    ``t`` is the forward input; it determines the expected shapes but does
    not enter the computation (the map is linear in the input).
    """
    require_chw(grad_output)
    expected = (spec.out_channels, t.shape[1], t.shape[2])
    if grad_output.shape != expected:
        raise ConfigurationError(
            f"{spec.name}: grad shape {grad_output.shape} does not match {expected}"
        )
    return conv2d_forward(grad_output, spec.backward_spec())


def relu_forward(t: Tensor) -> Tensor:
    return np.maximum(t, 0)


def relu_backward(t: Tensor, grad_output: Tensor) -> Tensor:
    """Pass gradient where the forward input was strictly positive."""
    if t.shape != grad_output.shape:
        raise ConfigurationError("relu: input and gradient shapes differ")
    return np.where(t > 0, grad_output, 0)


@dataclass(frozen=True)
class PoolIndices:
    """Argmax routing recorded by a 2x2 max-pool forward pass.

    ``window_arg`` holds, per output cell, the row-major index (0..3) of the
    window cell that won. Odd inputs are padded to even by edge replication
    before pooling; the original and padded extents are kept so the backward
    pass can fold replicated-cell gradients onto their source pixels.
    """

    window_arg: np.ndarray  # (C, H/2, W/2) uint8
    input_height: int
    input_width: int
    padded_height: int
    padded_width: int


def maxpool2_forward(t: Tensor) -> tuple[Tensor, PoolIndices]:
    require_chw(t)
    c, h, w = t.shape
    ph, pw = h % 2, w % 2
    p = np.pad(t, ((0, 0), (0, ph), (0, pw)), mode="edge") if ph or pw else t
    hp, wp = h + ph, w + pw
    windows = p.reshape(c, hp // 2, 2, wp // 2, 2).transpose(0, 1, 3, 2, 4)
    flat = np.ascontiguousarray(windows).reshape(c, hp // 2, wp // 2, 4)
    arg = flat.argmax(axis=3)  # first maximum in window scan order
    out = np.take_along_axis(flat, arg[..., None], axis=3)[..., 0]
    idx = PoolIndices(arg.astype(np.uint8), h, w, hp, wp)
    return np.ascontiguousarray(out), idx


def maxpool2_backward(idx: PoolIndices, grad_output: Tensor) -> Tensor:
    c, h2, w2 = grad_output.shape
    if (h2, w2) != (idx.padded_height // 2, idx.padded_width // 2):
        raise ConfigurationError(
            f"pool: grad shape {grad_output.shape} does not match recorded "
            f"pooled dims ({idx.padded_height // 2}, {idx.padded_width // 2})"
        )
    canvas = np.zeros((c, idx.padded_height, idx.padded_width), dtype=grad_output.dtype)
    arg = idx.window_arg.astype(np.intp)
    iy = np.arange(h2)[None, :, None] * 2 + arg // 2
    ix = np.arange(w2)[None, None, :] * 2 + arg % 2
    ic = np.arange(c)[:, None, None]
    canvas[ic, iy, ix] = grad_output  # window cells are disjoint; plain scatter
    h, w = idx.input_height, idx.input_width
    if idx.padded_height != h:
        canvas[:, h - 1, :] += canvas[:, h, :]
    if idx.padded_width != w:
        canvas[:, :, w - 1] += canvas[:, :, w]
    return np.ascontiguousarray(canvas[:, :h, :w])


def _axis_positions(n_in: int, n_out: int) -> np.ndarray:
    """Corner-aligned sample positions: endpoints map to endpoints exactly."""
    if n_out == 1:
        return np.zeros(1)
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def bilinear_resize(t: Tensor, new_height: int, new_width: int) -> Tensor:
    """Corner-aligned bilinear resample to (new_height, new_width).

    Interpolation uses the ``a + f*(b - a)`` form so resizing to the same
    size is the identity and constant images stay exactly constant. No
    prefilter is applied; heavy downsampling aliases by design.
    """
    require_chw(t)
    if new_height < 1 or new_width < 1:
        raise ConfigurationError(f"target dims must be positive: {(new_height, new_width)}")
    c, h, w = t.shape
    if (new_height, new_width) == (h, w):
        return t.copy()

    ys = _axis_positions(h, new_height)
    y0 = np.clip(np.floor(ys).astype(np.intp), 0, h - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fy = (ys - y0).astype(t.dtype)[None, :, None]
    rows = t[:, y0, :]
    rows = rows + fy * (t[:, y1, :] - rows)

    xs = _axis_positions(w, new_width)
    x0 = np.clip(np.floor(xs).astype(np.intp), 0, w - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fx = (xs - x0).astype(t.dtype)[None, None, :]
    out = rows[:, :, x0]
    out = out + fx * (rows[:, :, x1] - out)
    return np.ascontiguousarray(out)


def rotate_image(t: Tensor, angle: float) -> Tensor:
    """Rotate about the image center by ``angle`` radians.

    Samples the source bilinearly through the inverse map; coordinates
    falling outside the frame clamp to the border, which realizes
    edge-replication fill for the uncovered corners.
    """
    require_chw(t)
    if angle == 0.0:
        return t.copy()
    c, h, w = t.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    src_x = np.clip(cx + cos_a * xx + sin_a * yy, 0, w - 1)
    src_y = np.clip(cy - sin_a * xx + cos_a * yy, 0, h - 1)

    x0 = np.floor(src_x).astype(np.intp)
    y0 = np.floor(src_y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (src_x - x0).astype(t.dtype)
    fy = (src_y - y0).astype(t.dtype)

    top = t[:, y0, x0]
    top = top + fx * (t[:, y0, x1] - top)
    bottom = t[:, y1, x0]
    bottom = bottom + fx * (t[:, y1, x1] - bottom)
    return np.ascontiguousarray(top + fy * (bottom - top))
