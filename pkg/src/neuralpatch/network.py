"""Fixed VGG-19 feature trunk: architecture table, forward taps, backward.

The trunk runs through relu5_1 and is used purely as a feature extractor;
weights never change during synthesis. Channel handling follows the classic
Caffe-heritage convention: the network sees blue-green-red planes with fixed
per-channel means subtracted from raw [0, 255] pixels. Images everywhere
else in this package are RGB; the permutation happens in one place here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .ops import (
    ConvSpec,
    conv2d_backward,
    conv2d_forward,
    maxpool2_backward,
    maxpool2_forward,
    relu_backward,
    relu_forward,
)
from .tensor import Tensor, require_chw


@dataclass(frozen=True)
class LayerDef:
    name: str
    kind: str  # "conv" | "relu" | "pool"
    in_channels: int = 0
    out_channels: int = 0


def _block(index: int, convs: int, in_c: int, out_c: int, pool: bool) -> list[LayerDef]:
    layers = []
    width = in_c
    for j in range(1, convs + 1):
        layers.append(LayerDef(f"conv{index}_{j}", "conv", width, out_c))
        layers.append(LayerDef(f"relu{index}_{j}", "relu"))
        width = out_c
    if pool:
        layers.append(LayerDef(f"pool{index}", "pool"))
    return layers


# Trunk evaluated by the engine: everything up to and including relu5_1.
ARCHITECTURE: tuple[LayerDef, ...] = tuple(
    _block(1, 2, 3, 64, True)
    + _block(2, 2, 64, 128, True)
    + _block(3, 4, 128, 256, True)
    + _block(4, 4, 256, 512, True)
    + _block(5, 1, 512, 512, False)
)

# Full conv trunk as released (16 conv layers); files may carry all of them
# even though the engine only ever evaluates through conv5_1.
FULL_CONV_TABLE: tuple[LayerDef, ...] = tuple(
    [l for l in ARCHITECTURE if l.kind == "conv"]
    + [LayerDef(f"conv5_{j}", "conv", 512, 512) for j in (2, 3, 4)]
)

CONV_LAYERS: tuple[LayerDef, ...] = tuple(l for l in ARCHITECTURE if l.kind == "conv")

# Mean pixel of the training corpus in network (B, G, R) channel order.
CHANNEL_MEANS = np.array([103.939, 116.779, 123.68], dtype=np.float32)

# RGB input planes -> network planes. The permutation is its own inverse.
RGB_TO_NET = np.array([2, 1, 0])

ALLOWED_TEST_SCALES = (0.125, 0.25, 0.5)
ALLOWED_FILE_SCALES = (0.125, 0.25, 0.5, 1.0)

_LAYER_INDEX = {l.name: i for i, l in enumerate(ARCHITECTURE)}

# First conv is scaled down by the pixel dynamic range so test-network
# activations come out O(1) from [0, 255] inputs.
_FIRST_LAYER_GAIN = 1.0 / 255.0


def scaled_width(width: int, scale: float) -> int:
    if width == 3:
        return 3
    scaled = width * scale
    if scaled != int(scaled) or scaled < 1:
        raise ConfigurationError(f"width scale {scale} does not divide width {width}")
    return int(scaled)


@dataclass
class NetworkDef:
    """A concrete trunk: one ConvSpec per conv layer of ARCHITECTURE."""

    convs: dict[str, ConvSpec]
    width_scale: float = 1.0

    def __post_init__(self) -> None:
        for layer in CONV_LAYERS:
            spec = self.convs.get(layer.name)
            if spec is None:
                raise ConfigurationError(f"missing conv layer {layer.name}")
            expect = (
                scaled_width(layer.in_channels, self.width_scale),
                scaled_width(layer.out_channels, self.width_scale),
            )
            if (spec.in_channels, spec.out_channels) != expect:
                raise ConfigurationError(
                    f"{layer.name}: channels {(spec.in_channels, spec.out_channels)} "
                    f"do not match {expect} at width scale {self.width_scale}"
                )


def tap_names() -> tuple[str, ...]:
    """Valid tap layers: every named trunk layer plus the pseudo-tap 'input'."""
    return ("input",) + tuple(l.name for l in ARCHITECTURE)


def layer_feature_stride(name: str) -> int:
    """Cumulative pooling factor between pixels and this layer's grid."""
    if name == "input":
        return 1
    if name not in _LAYER_INDEX:
        raise ConfigurationError(f"unknown layer {name!r}")
    pools = sum(1 for l in ARCHITECTURE[: _LAYER_INDEX[name]] if l.kind == "pool")
    return 2**pools


def feature_dims(name: str, height: int, width: int) -> tuple[int, int]:
    """Spatial dims of a layer's output for a given input image size."""
    if name == "input":
        return height, width
    if name not in _LAYER_INDEX:
        raise ConfigurationError(f"unknown layer {name!r}")
    h, w = height, width
    for layer in ARCHITECTURE[: _LAYER_INDEX[name] + 1]:
        if layer.kind == "pool":
            h, w = math.ceil(h / 2), math.ceil(w / 2)
    return h, w


def make_test_network(seed: int, width_scale: float = 0.125) -> NetworkDef:
    """Deterministic random trunk with proportionally reduced widths.

    Weights use variance-preserving fan-in scaling so activations neither
    explode nor vanish with depth; the allowed scales are 1/8, 1/4, 1/2.
    """
    if width_scale not in ALLOWED_TEST_SCALES:
        raise ConfigurationError(
            f"width_scale must be one of {ALLOWED_TEST_SCALES}, got {width_scale}"
        )
    rng = np.random.default_rng(seed)
    convs: dict[str, ConvSpec] = {}
    for layer in CONV_LAYERS:
        in_c = scaled_width(layer.in_channels, width_scale)
        out_c = scaled_width(layer.out_channels, width_scale)
        std = math.sqrt(2.0 / (in_c * 9))
        weight = rng.standard_normal((out_c, in_c, 3, 3), dtype=np.float32) * np.float32(std)
        if layer.name == "conv1_1":
            weight *= np.float32(_FIRST_LAYER_GAIN)
        bias = rng.standard_normal(out_c, dtype=np.float32) * np.float32(0.05)
        convs[layer.name] = ConvSpec(layer.name, in_c, out_c, weight, bias)
    return NetworkDef(convs=convs, width_scale=width_scale)


def preprocess(image: Tensor) -> Tensor:
    """RGB pixels -> network planes: permute to BGR, subtract channel means."""
    require_chw(image)
    if image.shape[0] != 3:
        raise ConfigurationError(f"expected a 3-channel image, got {image.shape[0]}")
    return image[RGB_TO_NET] - CHANNEL_MEANS.astype(image.dtype)[:, None, None]


@dataclass
class _ForwardCache:
    outputs: list[Tensor]
    pool_indices: dict[int, object]
    preprocessed: Tensor


@dataclass
class LayerActivations:
    """Forward results at the requested tap layers.

    ``activations`` holds exactly the requested taps. ``preprocessed`` is the
    mean-subtracted network-order input; it doubles as the 'input' tap.
    When built with ``cache_for_backward`` the intermediate outputs needed by
    :func:`backward_multi_tap` ride along in ``cache``.
    """

    activations: dict[str, Tensor]
    preprocessed: Tensor
    cache: _ForwardCache | None = field(default=None, repr=False)


def _validate_taps(taps) -> set[str]:
    taps = set(taps)
    valid = set(tap_names())
    unknown = taps - valid
    if unknown:
        raise ConfigurationError(f"unknown tap layer(s): {sorted(unknown)}")
    return taps


def forward_tapped(
    net: NetworkDef, image: Tensor, taps, cache_for_backward: bool = False
) -> LayerActivations:
    """Run the trunk and collect activations at the requested layers.

    Evaluation stops at the deepest requested tap. The input image is raw
    RGB pixels; all taps see post-activation (or post-pool) values.
    """
    taps = _validate_taps(taps)
    x = preprocess(image)
    pre = x
    activations: dict[str, Tensor] = {}
    if "input" in taps:
        activations["input"] = x
    deepest = max((_LAYER_INDEX[t] for t in taps if t != "input"), default=-1)

    outputs: list[Tensor] = []
    pool_indices: dict[int, object] = {}
    for i in range(deepest + 1):
        layer = ARCHITECTURE[i]
        if layer.kind == "conv":
            x = conv2d_forward(x, net.convs[layer.name])
        elif layer.kind == "relu":
            x = relu_forward(x)
        else:
            x, idx = maxpool2_forward(x)
            pool_indices[i] = idx
        if cache_for_backward:
            outputs.append(x)
        if layer.name in taps:
            activations[layer.name] = x

    cache = _ForwardCache(outputs, pool_indices, pre) if cache_for_backward else None
    return LayerActivations(activations=activations, preprocessed=pre, cache=cache)


def backward_multi_tap(net: NetworkDef, acts: LayerActivations, tap_grads: dict[str, Tensor]) -> Tensor:
    """Push gradients injected at several taps back to raw RGB pixels.

    Gradients accumulate where paths merge: walking from the deepest tap
    toward the input, each tap's contribution joins the running gradient at
    the layer where it was recorded.
    """
    for name, g in tap_grads.items():
        if name not in acts.activations:
            raise ConfigurationError(f"tap {name!r} was not recorded in the forward pass")
        if g.shape != acts.activations[name].shape:
            raise ConfigurationError(
                f"tap {name!r}: gradient shape {g.shape} does not match "
                f"activation shape {acts.activations[name].shape}"
            )
    deepest = max((_LAYER_INDEX[t] for t in tap_grads if t != "input"), default=-1)
    if deepest >= 0:
        if acts.cache is None:
            raise ConfigurationError("forward pass was not run with cache_for_backward")
        cache = acts.cache
        g = np.zeros_like(cache.outputs[deepest])
        for i in range(deepest, -1, -1):
            layer = ARCHITECTURE[i]
            if layer.name in tap_grads:
                g = g + tap_grads[layer.name]
            if layer.kind == "conv":
                below = cache.outputs[i - 1] if i > 0 else cache.preprocessed
                g = conv2d_backward(below, net.convs[layer.name], g)
            elif layer.kind == "relu":
                below = cache.outputs[i - 1] if i > 0 else cache.preprocessed
                g = relu_backward(below, g)
            else:
                g = maxpool2_backward(cache.pool_indices[i], g)
    else:
        g = np.zeros_like(acts.preprocessed)
    if "input" in tap_grads:
        g = g + tap_grads["input"]
    # Mean subtraction has identity Jacobian; undo the channel permutation.
    return np.ascontiguousarray(g[RGB_TO_NET])
