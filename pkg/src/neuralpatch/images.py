"""Image file IO: PNG/JPEG in, PNG out, 8-bit RGB."""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import InputError
from .tensor import Tensor


def decode_image(data: bytes) -> Tensor:
    """Decode PNG or JPEG bytes to a (3, H, W) float32 tensor in [0, 255]."""
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise InputError(f"cannot decode image: {exc}") from exc
    if img.format not in ("PNG", "JPEG"):
        raise InputError(f"unsupported image format {img.format!r}; use PNG or JPEG")
    if img.mode != "RGB":
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.uint8)
    return np.ascontiguousarray(arr.transpose(2, 0, 1)).astype(np.float32)


def load_image(path) -> Tensor:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read image file {path}: {exc}") from exc
    return decode_image(data)


def encode_png(t: Tensor) -> bytes:
    """Encode a (3, H, W) tensor as PNG, rounding and clamping to 8 bits."""
    arr = np.clip(np.rint(t), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    buf = io.BytesIO()
    Image.fromarray(arr, "RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(path, t: Tensor) -> None:
    Path(path).write_bytes(encode_png(t))
