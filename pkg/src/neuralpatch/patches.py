"""Neural patch banks and nearest-neighbour matching.

The style prior works on k x k windows of feature maps ("neural patches").
A bank flattens every patch of one or more augmented copies of the style
image into rows of a matrix. Matching scores query patches against the bank
by normalized cross-correlation and is evaluated as one big inner-product
matrix: with patches flattened exactly like convolution weights, scoring a
bank against a feature map IS a convolution with the style patches as
filters, sharing the im2col kernel the conv layers use.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .network import NetworkDef, forward_tapped
from .ops import bilinear_resize, im2col, rotate_image
from .tensor import Tensor, require_chw

log = logging.getLogger(__name__)

DEFAULT_SCALES = (0.85, 0.90, 0.95, 1.0, 1.05, 1.10, 1.15)
DEFAULT_ROTATIONS = (
    -math.pi / 12,
    -math.pi / 24,
    0.0,
    math.pi / 24,
    math.pi / 12,
)

# Matching block size: bounds the score matrix to a few tens of MB.
_SCORE_BLOCK_FLOATS = 8_000_000


@dataclass(frozen=True)
class AugmentationSet:
    """Synthetic style copies: a scale sweep, optionally a rotation sweep.

    Rotations past identity are only worth the bank growth for deformable
    subjects, so they default to off; ``scales`` always applies.
    """

    scales: tuple[float, ...] = DEFAULT_SCALES
    rotations: tuple[float, ...] = DEFAULT_ROTATIONS
    enabled_rotations: bool = False

    def __post_init__(self) -> None:
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ConfigurationError("scales must be a non-empty positive sequence")
        if self.enabled_rotations and not self.rotations:
            raise ConfigurationError("rotations enabled but no angles given")

    def angles(self) -> tuple[float, ...]:
        return self.rotations if self.enabled_rotations else (0.0,)


IDENTITY_AUGMENTATION = AugmentationSet(scales=(1.0,), enabled_rotations=False)


@dataclass(frozen=True)
class AugmentedCopy:
    index: int
    scale: float
    rotation: float
    image_height: int
    image_width: int
    feature_height: int
    feature_width: int


@dataclass
class PatchBank:
    """Flattened neural patches plus provenance.

    ``patches`` is (m, C*k*k) float32, rows scanning copies in order and each
    copy's feature grid row-major. ``norms`` carries precomputed patch
    magnitudes; query-side magnitudes are cheap enough to recompute per
    evaluation. ``provenance[i]`` is (copy index, grid y, grid x).
    """

    patches: np.ndarray
    norms: np.ndarray
    provenance: np.ndarray
    k: int
    stride: int
    channels: int
    layer: str
    copies: tuple[AugmentedCopy, ...]

    def __len__(self) -> int:
        return self.patches.shape[0]


def _patch_norms(patches: np.ndarray) -> np.ndarray:
    # accumulate in float64, store float32
    return np.sqrt(np.einsum("ij,ij->i", patches, patches, dtype=np.float64)).astype(
        np.float32
    )


def extract_patches(
    feature: Tensor, k: int, stride: int = 1, layer: str = "", copy: AugmentedCopy | None = None
) -> PatchBank:
    """All k x k windows of one feature map as a single-copy bank."""
    require_chw(feature)
    if k < 1 or stride < 1:
        raise ConfigurationError(f"patch size {k} / stride {stride} must be >= 1")
    c, h, w = feature.shape
    if h < k or w < k:
        raise ConfigurationError(f"patch size {k} exceeds feature dims {(h, w)}")
    pats = im2col(feature, k, stride=stride).astype(np.float32, copy=False)
    gh = (h - k) // stride + 1
    gw = (w - k) // stride + 1
    if copy is None:
        copy = AugmentedCopy(0, 1.0, 0.0, h, w, h, w)
    ys, xs = np.divmod(np.arange(gh * gw), gw)
    prov = np.column_stack([np.full(gh * gw, copy.index), ys * stride, xs * stride])
    return PatchBank(
        patches=pats,
        norms=_patch_norms(pats),
        provenance=prov.astype(np.int32),
        k=k,
        stride=stride,
        channels=c,
        layer=layer,
        copies=(copy,),
    )


def build_style_bank(
    net: NetworkDef,
    style: Tensor,
    layer: str,
    k: int,
    augmentation: AugmentationSet = IDENTITY_AUGMENTATION,
    stride: int = 1,
) -> PatchBank:
    """Extract the style's patch bank at one layer over all augmented copies.

    Copies whose feature map is smaller than the patch size are skipped with
    a warning; if every copy is too small the configuration is rejected.
    """
    require_chw(style)
    _, h, w = style.shape
    parts: list[PatchBank] = []
    copies: list[AugmentedCopy] = []
    index = 0
    for scale in augmentation.scales:
        sh, sw = max(1, round(h * scale)), max(1, round(w * scale))
        scaled = bilinear_resize(style, sh, sw)
        for angle in augmentation.angles():
            img = rotate_image(scaled, angle) if angle != 0.0 else scaled
            feat = forward_tapped(net, img, {layer}).activations[layer]
            fh, fw = feat.shape[1], feat.shape[2]
            if fh < k or fw < k:
                log.warning(
                    "style copy scale=%.3f rotation=%.4f skipped: feature map "
                    "%dx%d smaller than patch size %d",
                    scale, angle, fh, fw, k,
                )
                index += 1
                continue
            copy = AugmentedCopy(index, scale, angle, sh, sw, fh, fw)
            parts.append(extract_patches(feat, k, stride, layer, copy))
            copies.append(copy)
            index += 1
    if not parts:
        raise ConfigurationError(
            f"every augmented style copy is smaller than patch size {k} at {layer}"
        )
    return PatchBank(
        patches=np.concatenate([p.patches for p in parts]),
        norms=np.concatenate([p.norms for p in parts]),
        provenance=np.concatenate([p.provenance for p in parts]),
        k=k,
        stride=stride,
        channels=parts[0].channels,
        layer=layer,
        copies=tuple(copies),
    )


def _rescore_f64(q_block: np.ndarray, style: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Inner products <q_i, style[idx_i]> accumulated in float64."""
    rows = style[idx].astype(np.float64)
    return np.einsum("ij,ij->i", q_block.astype(np.float64), rows)


def match_patches(
    query: PatchBank, style: PatchBank, return_scores: bool = False
):
    """Best style index per query patch under normalized cross-correlation.

    Ties resolve to the lowest style index. Queries with zero norm fall back
    to the unnormalized inner product. Scoring runs as blocked float32
    matrix products; the top two candidates per query are re-scored in
    float64 so near-ties resolve the same way double-precision scoring would.
    """
    if query.k != style.k or query.channels != style.channels:
        raise ConfigurationError(
            "query and style banks disagree on patch size or channel count"
        )
    m_q, dim = query.patches.shape
    m_s = len(style)
    if m_s == 0:
        raise ConfigurationError("style bank is empty")

    s_mat = style.patches
    s_norm = style.norms.astype(np.float64)
    s_safe = np.where(s_norm > 0, s_norm, 1.0).astype(np.float32)

    assignments = np.empty(m_q, dtype=np.int64)
    scores = np.empty(m_q, dtype=np.float64) if return_scores else None
    block = max(1, _SCORE_BLOCK_FLOATS // max(1, m_s))
    for start in range(0, m_q, block):
        stop = min(start + block, m_q)
        q_block = query.patches[start:stop]
        raw = q_block @ s_mat.T
        zero_rows = query.norms[start:stop] == 0
        cand = raw / s_safe  # row-positive scaling; never flips an argmax
        if np.any(zero_rows):
            cand[zero_rows] = raw[zero_rows]
        top1 = cand.argmax(axis=1)
        rows = np.arange(stop - start)
        backup = cand[rows, top1].copy()
        cand[rows, top1] = -np.inf
        top2 = cand.argmax(axis=1)
        cand[rows, top1] = backup

        v1 = _rescore_f64(q_block, s_mat, top1)
        v2 = _rescore_f64(q_block, s_mat, top2)
        norm1 = np.where(zero_rows, 1.0, s_norm[top1])
        norm2 = np.where(zero_rows, 1.0, s_norm[top2])
        norm1 = np.where(norm1 > 0, norm1, 1.0)
        norm2 = np.where(norm2 > 0, norm2, 1.0)
        v1, v2 = v1 / norm1, v2 / norm2
        take2 = (v2 > v1) | ((v2 == v1) & (top2 < top1))
        best = np.where(take2, top2, top1)
        assignments[start:stop] = best
        if return_scores:
            best_v = np.where(take2, v2, v1)
            q_norm = np.sqrt(
                np.einsum("ij,ij->i", q_block, q_block, dtype=np.float64)
            )
            ncc = np.where(q_norm > 0, best_v / np.where(q_norm > 0, q_norm, 1.0), 0.0)
            scores[start:stop] = np.clip(ncc, -1.0, 1.0)  # rounding can graze past 1
    if return_scores:
        return assignments, scores
    return assignments


def _coverage_count(shape, k: int, stride: int, dtype) -> np.ndarray:
    """How many patches cover each feature cell."""
    c, h, w = shape
    gh = (h - k) // stride + 1
    gw = (w - k) // stride + 1
    count = np.zeros((1, h, w), dtype=dtype)
    ones = np.ones((gh, gw), dtype=dtype)
    for dy in range(k):
        for dx in range(k):
            count[0, dy : dy + (gh - 1) * stride + 1 : stride,
                  dx : dx + (gw - 1) * stride + 1 : stride] += ones
    return np.broadcast_to(count, (c, h, w))


def style_energy_and_grad(
    feature: Tensor, bank: PatchBank, assignments: np.ndarray
) -> tuple[float, Tensor]:
    """Sum of squared distances to the assigned style patches, and its gradient.

    The gradient folds each patch residual ``2 * (query - matched)`` back
    over its k x k footprint, which equals ``2 * (coverage * feature - R)``
    with R the footprint sum of matched patches; the stationary point is the
    overlap-average reconstruction. Work proceeds in bands of grid rows so
    the gathered patch matrix never has to materialize whole.
    """
    require_chw(feature)
    c, h, w = feature.shape
    k, stride = bank.k, bank.stride
    gh = (h - k) // stride + 1
    gw = (w - k) // stride + 1
    if assignments.shape != (gh * gw,):
        raise ConfigurationError(
            f"assignments length {assignments.shape} does not match the "
            f"{gh}x{gw} patch grid"
        )

    energy = 0.0
    fold = np.zeros_like(feature)
    rows_per_band = max(1, int(2_000_000 // max(1, gw * bank.patches.shape[1])))
    for y0 in range(0, gh, rows_per_band):
        y1 = min(y0 + rows_per_band, gh)
        band = feature[:, y0 * stride : (y1 - 1) * stride + k, :]
        q_block = im2col(np.ascontiguousarray(band), k, stride=stride)
        diff = q_block - bank.patches[assignments[y0 * gw : y1 * gw]]
        energy += float(np.sum(diff * diff, dtype=np.float64))
        block = diff.reshape(y1 - y0, gw, c, k, k)
        for dy in range(k):
            for dx in range(k):
                fold[:, y0 * stride + dy : (y1 - 1) * stride + dy + 1 : stride,
                     dx : dx + (gw - 1) * stride + 1 : stride] += block[:, :, :, dy, dx].transpose(2, 0, 1)
    grad = 2.0 * fold
    return energy, grad.astype(feature.dtype, copy=False)


def overlap_average(feature_shape, bank: PatchBank, assignments: np.ndarray, dtype=np.float32) -> Tensor:
    """The unique minimizer of the style energy for fixed assignments."""
    zero = np.zeros(feature_shape, dtype=dtype)
    _, grad = style_energy_and_grad(zero, bank, assignments)
    count = _coverage_count(feature_shape, bank.k, bank.stride, np.float64)
    recon = np.asarray(-grad, dtype=np.float64) / 2.0
    return (recon / np.maximum(count, 1)).astype(dtype)
