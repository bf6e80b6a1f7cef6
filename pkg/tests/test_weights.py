from __future__ import annotations

import struct

import numpy as np
import pytest

from neuralpatch.errors import WeightFormatError
from neuralpatch.network import CONV_LAYERS, forward_tapped, make_test_network
from neuralpatch.weights import MAGIC, VERSION, load_weights, save_weights


@pytest.fixture
def weight_file(tmp_path, tiny_net):
    path = tmp_path / "net.nmrf"
    save_weights(path, tiny_net)
    return path


class TestRoundTrip:
    def test_bit_exact(self, weight_file, tiny_net):
        loaded = load_weights(weight_file)
        assert loaded.width_scale == tiny_net.width_scale
        for name, spec in tiny_net.convs.items():
            np.testing.assert_array_equal(loaded.convs[name].weight, spec.weight)
            np.testing.assert_array_equal(loaded.convs[name].bias, spec.bias)

    def test_loaded_network_runs_identically(self, weight_file, tiny_net, image_64):
        loaded = load_weights(weight_file)
        a = forward_tapped(tiny_net, image_64, ("relu4_1",)).activations["relu4_1"]
        b = forward_tapped(loaded, image_64, ("relu4_1",)).activations["relu4_1"]
        np.testing.assert_array_equal(a, b)

    def test_header_layout(self, weight_file):
        raw = weight_file.read_bytes()
        assert raw[:4] == MAGIC
        version, count = struct.unpack_from("<II", raw, 4)
        assert version == VERSION
        assert count == 13

    def test_quarter_scale_round_trip(self, tmp_path, image_64):
        net = make_test_network(seed=9, width_scale=0.25)
        path = tmp_path / "q.nmrf"
        save_weights(path, net)
        loaded = load_weights(path)
        assert loaded.width_scale == 0.25
        assert loaded.convs["conv1_1"].weight.shape == (16, 3, 3, 3)
        a = forward_tapped(net, image_64, ("relu3_1",)).activations["relu3_1"]
        b = forward_tapped(loaded, image_64, ("relu3_1",)).activations["relu3_1"]
        np.testing.assert_array_equal(a, b)


def corrupt(raw: bytes, offset: int, data: bytes) -> bytes:
    return raw[:offset] + data + raw[offset + len(data) :]


class TestRejection:
    def test_bad_magic(self, weight_file, tmp_path):
        bad = tmp_path / "bad.nmrf"
        bad.write_bytes(corrupt(weight_file.read_bytes(), 0, b"XGBM"))
        with pytest.raises(WeightFormatError, match="magic"):
            load_weights(bad)

    def test_unsupported_version(self, weight_file, tmp_path):
        bad = tmp_path / "bad.nmrf"
        bad.write_bytes(corrupt(weight_file.read_bytes(), 4, struct.pack("<I", 2)))
        with pytest.raises(WeightFormatError, match="version"):
            load_weights(bad)

    def test_layer_count_out_of_range(self, weight_file, tmp_path):
        bad = tmp_path / "bad.nmrf"
        bad.write_bytes(corrupt(weight_file.read_bytes(), 8, struct.pack("<I", 12)))
        with pytest.raises(WeightFormatError):
            load_weights(bad)

    def test_truncated_file(self, weight_file, tmp_path):
        bad = tmp_path / "bad.nmrf"
        bad.write_bytes(weight_file.read_bytes()[:-40])
        with pytest.raises(WeightFormatError, match="truncated"):
            load_weights(bad)

    def test_trailing_bytes(self, weight_file, tmp_path):
        bad = tmp_path / "bad.nmrf"
        bad.write_bytes(weight_file.read_bytes() + b"\x00\x00\x00\x00")
        with pytest.raises(WeightFormatError, match="trailing"):
            load_weights(bad)

    def test_wrong_layer_name(self, weight_file, tmp_path):
        raw = weight_file.read_bytes()
        # first record starts right after the 12-byte header; its name is
        # length-prefixed UTF-8 "conv1_1"
        name_len = struct.unpack_from("<I", raw, 12)[0]
        assert raw[16 : 16 + name_len] == b"conv1_1"
        bad = tmp_path / "bad.nmrf"
        bad.write_bytes(corrupt(raw, 16, b"conv9_9"))
        with pytest.raises(WeightFormatError):
            load_weights(bad)

    def test_non_finite_values(self, weight_file, tmp_path):
        raw = bytearray(weight_file.read_bytes())
        name_len = struct.unpack_from("<I", raw, 12)[0]
        weights_at = 16 + name_len + 16  # name + four u32 dims
        struct.pack_into("<f", raw, weights_at, float("nan"))
        bad = tmp_path / "bad.nmrf"
        bad.write_bytes(bytes(raw))
        with pytest.raises(WeightFormatError, match="finite"):
            load_weights(bad)

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            load_weights(tmp_path / "absent.nmrf")


class TestFullDepthFiles:
    def make_full_file(self, tmp_path, n_extra: int):
        """Write a file carrying the engine's 13 layers plus conv5_2..conv5_4."""
        from neuralpatch.network import FULL_CONV_TABLE, scaled_width
        from neuralpatch.weights import serialize_weights

        rng = np.random.default_rng(0)
        records = []
        for layer in list(FULL_CONV_TABLE)[: 13 + n_extra]:
            cin = scaled_width(layer.in_channels, 0.125)
            cout = scaled_width(layer.out_channels, 0.125)
            records.append(
                (
                    layer.name,
                    rng.standard_normal((cout, cin, 3, 3)).astype(np.float32),
                    rng.standard_normal(cout).astype(np.float32),
                )
            )
        path = tmp_path / f"full{n_extra}.nmrf"
        path.write_bytes(serialize_weights(records))
        return path

    @pytest.mark.parametrize("n_extra", [0, 1, 2, 3])
    def test_loader_accepts_trailing_block5_layers(self, tmp_path, n_extra):
        loaded = load_weights(self.make_full_file(tmp_path, n_extra))
        assert set(loaded.convs) == {l.name for l in CONV_LAYERS}
