from __future__ import annotations

import numpy as np
import pytest

from neuralpatch.ops import (
    ConvSpec,
    bilinear_resize,
    conv2d_backward,
    conv2d_forward,
    im2col,
    maxpool2_backward,
    maxpool2_forward,
    relu_backward,
    relu_forward,
    rotate_image,
)
from oracles import finite_difference_grad, naive_conv2d, naive_maxpool2, rel_err


def random_conv(rng, in_c: int, out_c: int) -> ConvSpec:
    return ConvSpec(
        name="test",
        in_channels=in_c,
        out_channels=out_c,
        weight=rng.standard_normal((out_c, in_c, 3, 3)).astype(np.float32) * 0.2,
        bias=rng.standard_normal(out_c).astype(np.float32) * 0.1,
    )


class TestIm2col:
    def test_rows_are_channel_major_windows(self, rng):
        t = rng.standard_normal((2, 5, 6)).astype(np.float32)
        cols = im2col(t, 3, stride=1, pad=0)
        assert cols.shape == (3 * 4, 2 * 9)
        # row 0 is the top-left window; channel 0's 3x3 block comes first
        expected = np.concatenate([t[0, :3, :3].ravel(), t[1, :3, :3].ravel()])
        np.testing.assert_array_equal(cols[0], expected)
        # row for grid position (1, 2)
        expected = np.concatenate([t[0, 1:4, 2:5].ravel(), t[1, 1:4, 2:5].ravel()])
        np.testing.assert_array_equal(cols[1 * 4 + 2], expected)

    def test_stride_two_picks_every_other_window(self, rng):
        t = rng.standard_normal((1, 7, 7)).astype(np.float32)
        cols = im2col(t, 3, stride=2)
        assert cols.shape == (9, 9)
        np.testing.assert_array_equal(cols[4], t[0, 2:5, 2:5].ravel())

    def test_padding_zero_fills(self, rng):
        t = rng.standard_normal((1, 3, 3)).astype(np.float32)
        cols = im2col(t, 3, stride=1, pad=1)
        assert cols.shape == (9, 9)
        top_left = cols[0].reshape(3, 3)
        assert np.all(top_left[0, :] == 0) and np.all(top_left[:, 0] == 0)
        np.testing.assert_array_equal(top_left[1:, 1:], t[0, :2, :2])


class TestConv:
    def test_matches_naive_float64(self, rng):
        spec = random_conv(rng, 3, 5)
        t = rng.standard_normal((3, 6, 7)).astype(np.float32)
        got = conv2d_forward(t, spec)
        want = naive_conv2d(
            t.astype(np.float64), spec.weight.astype(np.float64), spec.bias.astype(np.float64)
        )
        assert got.shape == (5, 6, 7)
        assert rel_err(got, want) < 1e-6

    def test_preserves_dtype(self, rng):
        spec = random_conv(rng, 2, 2)
        t64 = rng.standard_normal((2, 4, 4))
        assert conv2d_forward(t64, spec).dtype == np.float64
        assert conv2d_forward(t64.astype(np.float32), spec).dtype == np.float32

    def test_backward_matches_finite_differences(self, rng):
        spec = random_conv(rng, 2, 3)
        t = rng.standard_normal((2, 5, 5))
        ref = rng.standard_normal((3, 5, 5))

        def loss(x):
            d = conv2d_forward(x, spec) - ref
            return float(np.sum(d * d))

        g = conv2d_backward(t, spec, 2.0 * (conv2d_forward(t, spec) - ref))
        fd = finite_difference_grad(loss, t, 1e-5)
        assert rel_err(g, fd) < 1e-6

    def test_backward_spec_is_cached(self, rng):
        spec = random_conv(rng, 2, 3)
        assert spec.backward_spec() is spec.backward_spec()


class TestRelu:
    def test_forward_clamps_negatives(self):
        t = np.array([[[-1.0, 0.0], [2.5, -0.5]]], dtype=np.float32)
        np.testing.assert_array_equal(
            relu_forward(t), np.array([[[0.0, 0.0], [2.5, 0.0]]], dtype=np.float32)
        )

    def test_backward_gates_on_strictly_positive(self):
        out = np.array([[[0.0, 3.0]]], dtype=np.float32)
        grad = np.array([[[5.0, 7.0]]], dtype=np.float32)
        np.testing.assert_array_equal(
            relu_backward(out, grad), np.array([[[0.0, 7.0]]], dtype=np.float32)
        )


class TestMaxpool:
    @pytest.mark.parametrize("h,w", [(4, 4), (5, 5), (4, 7), (7, 4), (1, 1), (3, 3)])
    def test_matches_naive_including_odd_sizes(self, rng, h, w):
        t = rng.standard_normal((2, h, w)).astype(np.float32)
        got, _ = maxpool2_forward(t)
        want = naive_maxpool2(t)
        assert got.shape == want.shape == (2, (h + 1) // 2, (w + 1) // 2)
        np.testing.assert_array_equal(got, want)

    def test_backward_routes_to_argmax(self):
        t = np.array([[[1.0, 2.0], [4.0, 3.0]]], dtype=np.float32)
        out, idx = maxpool2_forward(t)
        g = maxpool2_backward(idx, np.array([[[10.0]]], dtype=np.float32))
        np.testing.assert_array_equal(g, np.array([[[0.0, 0.0], [10.0, 0.0]]], dtype=np.float32))

    def test_backward_ties_pick_first_in_scan_order(self):
        t = np.ones((1, 2, 2), dtype=np.float32)
        out, idx = maxpool2_forward(t)
        g = maxpool2_backward(idx, np.array([[[1.0]]], dtype=np.float32))
        np.testing.assert_array_equal(g, np.array([[[1.0, 0.0], [0.0, 0.0]]], dtype=np.float32))

    def test_backward_odd_input_folds_padding_onto_last_row(self, rng):
        # with replicated padding the duplicate column's gradient must land on
        # the real last column, verified against finite differences
        t = rng.standard_normal((1, 3, 3)).astype(np.float64)

        def loss(x):
            out, _ = maxpool2_forward(x)
            return float(np.sum(out * out))

        out, idx = maxpool2_forward(t)
        g = maxpool2_backward(idx, 2.0 * out)
        fd = finite_difference_grad(loss, t, 1e-6)
        assert rel_err(g, fd) < 1e-6

    def test_backward_matches_finite_differences_even(self, rng):
        t = rng.standard_normal((2, 6, 4)).astype(np.float64)

        def loss(x):
            out, _ = maxpool2_forward(x)
            return float(np.sum(out * out))

        out, idx = maxpool2_forward(t)
        g = maxpool2_backward(idx, 2.0 * out)
        fd = finite_difference_grad(loss, t, 1e-6)
        assert rel_err(g, fd) < 1e-6


class TestBilinearResize:
    def test_identity_is_exact_copy(self, rng):
        t = rng.standard_normal((3, 5, 7)).astype(np.float32)
        out = bilinear_resize(t, 5, 7)
        np.testing.assert_array_equal(out, t)
        assert out is not t

    def test_constant_image_stays_constant(self):
        t = np.full((2, 4, 4), 3.25, dtype=np.float32)
        out = bilinear_resize(t, 9, 5)
        np.testing.assert_array_equal(out, np.full((2, 9, 5), 3.25, dtype=np.float32))

    def test_corners_align(self, rng):
        t = rng.standard_normal((1, 6, 6)).astype(np.float32)
        out = bilinear_resize(t, 11, 3)
        assert out[0, 0, 0] == t[0, 0, 0]
        assert out[0, -1, -1] == t[0, -1, -1]
        assert out[0, 0, -1] == t[0, 0, -1]

    def test_doubling_interpolates_midpoints(self):
        t = np.array([[[0.0, 2.0]]], dtype=np.float32)
        out = bilinear_resize(t, 1, 3)
        np.testing.assert_allclose(out[0, 0], [0.0, 1.0, 2.0])

    def test_single_pixel_target(self, rng):
        t = rng.standard_normal((1, 4, 4)).astype(np.float32)
        out = bilinear_resize(t, 1, 1)
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == t[0, 0, 0]


class TestRotate:
    def test_zero_angle_is_identity(self, rng):
        t = rng.standard_normal((3, 5, 5)).astype(np.float32)
        np.testing.assert_allclose(rotate_image(t, 0.0), t, atol=1e-6)

    def test_quarter_turn_matches_rot90_interior(self, rng):
        # odd size keeps the grid on itself under a 90-degree turn
        t = rng.standard_normal((1, 7, 7)).astype(np.float32)
        out = rotate_image(t, np.pi / 2.0)
        want = np.rot90(t[0], k=-1)
        np.testing.assert_allclose(out[0, 1:-1, 1:-1], want[1:-1, 1:-1], atol=1e-4)

    def test_constant_image_unchanged(self):
        t = np.full((1, 8, 8), 7.0, dtype=np.float32)
        np.testing.assert_allclose(rotate_image(t, 0.37), t, atol=1e-5)

    def test_preserves_shape_and_dtype(self, rng):
        t = rng.standard_normal((3, 6, 9)).astype(np.float32)
        out = rotate_image(t, -np.pi / 12.0)
        assert out.shape == t.shape and out.dtype == np.float32
