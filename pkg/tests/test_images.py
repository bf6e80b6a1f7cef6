from __future__ import annotations

import io

import numpy as np
import pytest
from PIL import Image

from neuralpatch.errors import InputError
from neuralpatch.images import decode_image, encode_png, load_image, save_png


def png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


class TestDecode:
    def test_png_round_trip_exact(self, rng):
        arr = rng.integers(0, 256, size=(10, 12, 3), dtype=np.uint8)
        t = decode_image(png_bytes(arr))
        assert t.shape == (3, 10, 12)
        assert t.dtype == np.float32
        np.testing.assert_array_equal(t, arr.transpose(2, 0, 1).astype(np.float32))

    def test_jpeg_accepted(self, rng):
        arr = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        buf = io.BytesIO()
        Image.fromarray(arr).save(buf, format="JPEG", quality=95)
        t = decode_image(buf.getvalue())
        assert t.shape == (3, 16, 16)

    def test_grayscale_promoted_to_three_channels(self):
        arr = np.arange(64, dtype=np.uint8).reshape(8, 8)
        t = decode_image(png_bytes(arr))
        assert t.shape == (3, 8, 8)
        np.testing.assert_array_equal(t[0], t[1])

    def test_rgba_flattened(self, rng):
        arr = rng.integers(0, 256, size=(6, 6, 4), dtype=np.uint8)
        t = decode_image(png_bytes(arr))
        assert t.shape == (3, 6, 6)

    def test_other_formats_rejected(self, rng):
        arr = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        buf = io.BytesIO()
        Image.fromarray(arr).save(buf, format="BMP")
        with pytest.raises(InputError, match="PNG or JPEG"):
            decode_image(buf.getvalue())

    def test_garbage_bytes_rejected(self):
        with pytest.raises(InputError):
            decode_image(b"this is not an image at all")


class TestEncode:
    def test_round_trip_through_png(self, rng):
        t = rng.integers(0, 256, size=(3, 9, 7)).astype(np.float32)
        back = decode_image(encode_png(t))
        np.testing.assert_array_equal(back, t)

    def test_values_clamp_and_round(self):
        t = np.array(
            [[[-5.0, 0.4]], [[255.9, 128.5]], [[300.0, 17.49]]], dtype=np.float32
        )
        back = decode_image(encode_png(t))
        # banker's rounding on .5, clamp outside [0, 255]
        np.testing.assert_array_equal(
            back, np.array([[[0.0, 0.0]], [[255.0, 128.0]], [[255.0, 17.0]]], np.float32)
        )


class TestFiles:
    def test_save_and_load(self, tmp_path, rng):
        t = rng.integers(0, 256, size=(3, 5, 5)).astype(np.float32)
        p = tmp_path / "img.png"
        save_png(p, t)
        np.testing.assert_array_equal(load_image(p), t)

    def test_missing_file_is_input_error(self, tmp_path):
        with pytest.raises(InputError):
            load_image(tmp_path / "nope.png")
