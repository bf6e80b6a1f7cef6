"""Binary weight files.

Layout, all integers little-endian u32, all floats little-endian float32:

    "NMRF" | version (=1) | layer count
    per conv layer:
        name length | name (UTF-8)
        out, in, kh, kw
        weights, out-major (out * in * kh * kw floats)
        biases (out floats)

A file must carry the conv trunk in architecture order: at least through
conv5_1 (13 layers, what the engine evaluates) and at most the full released
trunk (16 layers); widths may be a uniform fraction of the released ones.
Anything after the last layer record is an error.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import WeightFormatError
from .network import (
    ALLOWED_FILE_SCALES,
    CONV_LAYERS,
    FULL_CONV_TABLE,
    NetworkDef,
    scaled_width,
)
from .ops import ConvSpec

MAGIC = b"NMRF"
VERSION = 1

_ENGINE_LAYERS = len(CONV_LAYERS)  # 13
_FULL_LAYERS = len(FULL_CONV_TABLE)  # 16


def save_weights(path, net: NetworkDef) -> None:
    """Write the engine's 13-layer trunk in the binary format above."""
    records = [
        (l.name, net.convs[l.name].weight, net.convs[l.name].bias) for l in CONV_LAYERS
    ]
    Path(path).write_bytes(serialize_weights(records))


def serialize_weights(records) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(records))]
    for name, weight, bias in records:
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<IIII", *weight.shape))
        chunks.append(np.ascontiguousarray(weight, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(bias, dtype="<f4").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise WeightFormatError(f"truncated file while reading {what}")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_weights(path) -> NetworkDef:
    """Read a weight file and validate it against the architecture table."""
    data = Path(path).read_bytes()
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise WeightFormatError("bad magic: not a weight file")
    version = r.u32("version")
    if version != VERSION:
        raise WeightFormatError(f"unsupported version {version}")
    count = r.u32("layer count")
    if not _ENGINE_LAYERS <= count <= _FULL_LAYERS:
        raise WeightFormatError(
            f"layer count {count} outside the trunk range "
            f"[{_ENGINE_LAYERS}, {_FULL_LAYERS}]"
        )

    scale: float | None = None
    convs: dict[str, ConvSpec] = {}
    for i in range(count):
        name_len = r.u32("name length")
        try:
            name = r.take(name_len, "layer name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightFormatError(f"layer {i}: undecodable name") from exc
        expect = FULL_CONV_TABLE[i]
        if name != expect.name:
            raise WeightFormatError(
                f"layer {i}: found {name!r}, expected {expect.name!r}"
            )
        out_c, in_c, kh, kw = (r.u32(f"{name} dims") for _ in range(4))
        if (kh, kw) != (3, 3):
            raise WeightFormatError(f"{name}: kernel {kh}x{kw} is not 3x3")
        if scale is None:
            scale = out_c / expect.out_channels
            if scale not in ALLOWED_FILE_SCALES:
                raise WeightFormatError(
                    f"{name}: output width {out_c} is not an allowed fraction "
                    f"of {expect.out_channels}"
                )
        want = (scaled_width(expect.in_channels, scale), scaled_width(expect.out_channels, scale))
        if (in_c, out_c) != want:
            raise WeightFormatError(
                f"{name}: channels ({in_c}, {out_c}) do not match {want} "
                f"at width scale {scale}"
            )
        n = out_c * in_c * kh * kw
        weight = np.frombuffer(r.take(4 * n, f"{name} weights"), dtype="<f4")
        bias = np.frombuffer(r.take(4 * out_c, f"{name} biases"), dtype="<f4")
        if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
            raise WeightFormatError(f"{name}: non-finite values")
        if name in {l.name for l in CONV_LAYERS}:
            convs[name] = ConvSpec(
                name,
                in_c,
                out_c,
                weight.reshape(out_c, in_c, kh, kw).copy(),
                bias.copy(),
            )
    if r.offset != len(data):
        raise WeightFormatError(f"{len(data) - r.offset} trailing bytes after last layer")
    return NetworkDef(convs=convs, width_scale=scale if scale is not None else 1.0)
