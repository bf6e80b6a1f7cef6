"""Coarse-to-fine synthesis jobs: transfer, inversion, match reports.

A job runs the objective through L-BFGS on an image pyramid: repeated
ceil-halvings of the output size until the longest side drops under 64
pixels, then levels run coarse to fine, each seeding the next through
bilinear upsampling. Patch banks and content targets are rebuilt per level
from rescaled inputs. Pixels stay unclamped between levels; only the final
output is clamped to [0, 255].
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyConfig, EnergyReport, SynthesisContext, evaluate
from .errors import ConfigurationError, InputError
from .lbfgs import MinimizeOptions, minimize
from .network import NetworkDef, forward_tapped, layer_feature_stride
from .ops import bilinear_resize
from .patches import PatchBank, build_style_bank, extract_patches, match_patches
from .tensor import Tensor, as_tensor, check_finite, clamp_pixels, require_chw

log = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 200
MIN_COARSE_DIM = 64  # halving stops once the longest side is below this


@dataclass(frozen=True)
class PyramidLevel:
    height: int
    width: int
    iterations: int


@dataclass(frozen=True)
class PyramidSchedule:
    """Level dims, coarse to fine; the last level is the requested size."""

    levels: tuple[PyramidLevel, ...]

    @staticmethod
    def build(height: int, width: int, iterations: int = DEFAULT_ITERATIONS) -> "PyramidSchedule":
        if height < 1 or width < 1:
            raise ConfigurationError(f"output dims must be positive: {(height, width)}")
        if iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        dims = [(height, width)]
        while max(dims[-1]) >= MIN_COARSE_DIM:
            h, w = dims[-1]
            dims.append((math.ceil(h / 2), math.ceil(w / 2)))
        levels = tuple(
            PyramidLevel(h, w, iterations) for h, w in reversed(dims)
        )
        return PyramidSchedule(levels=levels)

    def __len__(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    total: float
    style: tuple[float, ...]
    content: float
    tv: float


@dataclass(frozen=True)
class LevelTrace:
    level: int
    height: int
    width: int
    records: tuple[IterationRecord, ...]

    def energies(self) -> list[float]:
        return [r.total for r in self.records]


@dataclass(frozen=True)
class SynthesisJob:
    style: Tensor
    content: Tensor | None
    config: EnergyConfig = EnergyConfig()
    seed: int = 0
    iterations: int = DEFAULT_ITERATIONS
    output_size: tuple[int, int] | None = None  # (H, W); only used unguided


@dataclass
class TransferResult:
    image: Tensor  # clamped to [0, 255]
    levels: tuple[LevelTrace, ...]
    skipped_levels: tuple[int, ...] = ()


def _noise_image(rng: np.random.Generator, height: int, width: int) -> Tensor:
    return rng.random((3, height, width), dtype=np.float32) * np.float32(255.0)


def _trace_logger(level_index: int, records: list[IterationRecord]):
    def on_report(report: EnergyReport, iteration: int) -> None:
        rec = IterationRecord(
            iteration=iteration,
            total=report.total,
            style=report.style,
            content=report.content,
            tv=report.tv,
        )
        records.append(rec)
        log.info(
            "level=%d iter=%d total=%.6e style=%.6e content=%.6e tv=%.6e",
            level_index, iteration, rec.total, sum(rec.style), rec.content, rec.tv,
        )
    return on_report


def _minimize_energy(
    ctx: SynthesisContext,
    init: Tensor,
    iterations: int,
    level_index: int,
    records: list[IterationRecord],
) -> Tensor:
    shape = init.shape
    last_report: list[EnergyReport] = []
    on_report = _trace_logger(level_index, records)

    def objective(flat: np.ndarray) -> tuple[float, np.ndarray]:
        image = as_tensor(flat.reshape(shape), dtype=np.float32)
        report = evaluate(image, ctx)
        last_report.clear()
        last_report.append(report)
        return report.total, report.grad.astype(np.float64).ravel()

    def on_accept(iteration: int, _x: np.ndarray, _fx: float) -> None:
        on_report(last_report[0], iteration)

    result = minimize(
        objective,
        init.astype(np.float64).ravel(),
        MinimizeOptions(max_iters=iterations),
        on_accept=on_accept,
    )
    return result.x.reshape(shape).astype(np.float32)


def _halve_chain(height: int, width: int, times: int) -> tuple[int, int]:
    for _ in range(times):
        height, width = math.ceil(height / 2), math.ceil(width / 2)
    return height, width


def run_transfer(job: SynthesisJob, net: NetworkDef) -> TransferResult:
    """Synthesize an image matching the style's local feature statistics.

    Guided mode (alpha_content > 0) requires a content image, which fixes the
    output size; unguided mode takes the size from the job or the style.
    """
    cfg = job.config
    require_chw(job.style)
    check_finite(job.style, "style image")
    guided = cfg.alpha_content > 0
    if guided and job.content is None:
        raise ConfigurationError("content image required when alpha_content > 0")
    if job.content is not None:
        require_chw(job.content)
        check_finite(job.content, "content image")

    if guided:
        out_h, out_w = job.content.shape[1], job.content.shape[2]
    elif job.output_size is not None:
        out_h, out_w = job.output_size
    else:
        out_h, out_w = job.style.shape[1], job.style.shape[2]

    schedule = PyramidSchedule.build(out_h, out_w, job.iterations)
    n_levels = len(schedule)
    rng = np.random.default_rng(job.seed)

    current: Tensor | None = None
    traces: list[LevelTrace] = []
    skipped: list[int] = []
    for index, level in enumerate(schedule.levels):
        style_h, style_w = _halve_chain(job.style.shape[1], job.style.shape[2], n_levels - 1 - index)
        style_level = bilinear_resize(job.style, style_h, style_w)

        try:
            banks: dict[str, PatchBank] = {}
            for layer, weight in zip(cfg.mrf_layers, cfg.mrf_layer_weights):
                if weight > 0 and layer not in banks:
                    banks[layer] = build_style_bank(
                        net, style_level, layer, cfg.patch_size, cfg.augmentation, cfg.stride
                    )
        except ConfigurationError as exc:
            log.warning("level %d (%dx%d) skipped: %s", index, level.height, level.width, exc)
            skipped.append(index)
            continue

        content_targets: dict[str, Tensor] = {}
        if guided:
            content_level = bilinear_resize(job.content, level.height, level.width)
            acts = forward_tapped(net, content_level, {cfg.content_layer})
            content_targets[cfg.content_layer] = acts.activations[cfg.content_layer]

        ctx = SynthesisContext(
            net=net, config=cfg, style_banks=banks, content_targets=content_targets
        )
        if current is None:
            init = _noise_image(rng, level.height, level.width)
        else:
            init = bilinear_resize(current, level.height, level.width)

        records: list[IterationRecord] = []
        current = _minimize_energy(ctx, init, level.iterations, index, records)
        traces.append(LevelTrace(index, level.height, level.width, tuple(records)))

    if current is None:
        raise ConfigurationError("every pyramid level was skipped; style too small")
    return TransferResult(
        image=clamp_pixels(current),
        levels=tuple(traces),
        skipped_levels=tuple(skipped),
    )


@dataclass
class InversionResult:
    image: Tensor
    trace: LevelTrace


def run_invert(
    image: Tensor,
    taps: tuple[str, ...],
    net: NetworkDef,
    alpha_tv: float = 0.001,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
    image_b: Tensor | None = None,
    blend: float = 1.0,
) -> InversionResult:
    """Reconstruct an image from target activations at the given taps.

    With a second image, targets are the per-tap convex blend
    ``blend * A + (1 - blend) * B``. Runs single-level from seeded noise.
    """
    require_chw(image)
    if not taps:
        raise ConfigurationError("at least one tap layer is required")
    if image_b is not None and image_b.shape != image.shape:
        raise InputError("blend images must share dimensions")

    acts_a = forward_tapped(net, image, set(taps))
    targets = {t: acts_a.activations[t] for t in taps}
    if image_b is not None:
        acts_b = forward_tapped(net, image_b, set(taps))
        lam = np.float32(blend)
        targets = {
            t: lam * targets[t] + (np.float32(1.0) - lam) * acts_b.activations[t]
            for t in taps
        }

    cfg = EnergyConfig(
        alpha_content=1.0,
        alpha_tv=alpha_tv,
        mrf_layers=(),
        mrf_layer_weights=(),
        patch_size=3,
        stride=1,
    )
    ctx = SynthesisContext(net=net, config=cfg, content_targets=targets)
    rng = np.random.default_rng(seed)
    init = _noise_image(rng, image.shape[1], image.shape[2])
    records: list[IterationRecord] = []
    out = _minimize_energy(ctx, init, iterations, 0, records)
    return InversionResult(
        image=clamp_pixels(out),
        trace=LevelTrace(0, image.shape[1], image.shape[2], tuple(records)),
    )


@dataclass(frozen=True)
class MatchReportRow:
    layer: str
    query_x: int
    query_y: int
    match_x: int
    match_y: int
    ncc: float


def run_match_report(
    image_a: Tensor,
    image_b: Tensor,
    coords: list[tuple[int, int]],
    layers: tuple[str, ...],
    net: NetworkDef,
    patch_size: int = 3,
) -> list[MatchReportRow]:
    """Where do A's neural patches land in B, layer by layer?

    Coordinates are (x, y) pixels in A. Each maps to the layer's grid by its
    cumulative pooling stride (clamped so a full patch fits), matches against
    B's un-augmented bank, and maps back to pixels the same way.
    """
    require_chw(image_a)
    require_chw(image_b)
    if not coords:
        raise ConfigurationError("at least one query coordinate is required")
    if not layers:
        raise ConfigurationError("at least one layer is required")
    _, h, w = image_a.shape
    for x, y in coords:
        if not (0 <= x < w and 0 <= y < h):
            raise InputError(f"query ({x}, {y}) outside image bounds {w}x{h}")

    acts_a = forward_tapped(net, image_a, set(layers))
    acts_b = forward_tapped(net, image_b, set(layers))
    rows: list[MatchReportRow] = []
    for layer in layers:
        stride = layer_feature_stride(layer)
        feat_a = acts_a.activations[layer]
        feat_b = acts_b.activations[layer]
        bank = extract_patches(feat_b, patch_size, 1, layer)
        fh, fw = feat_a.shape[1], feat_a.shape[2]
        if fh < patch_size or fw < patch_size:
            raise ConfigurationError(
                f"{layer}: feature map {fh}x{fw} smaller than patch size {patch_size}"
            )
        for x, y in coords:
            fy = min(y // stride, fh - patch_size)
            fx = min(x // stride, fw - patch_size)
            window = feat_a[:, fy : fy + patch_size, fx : fx + patch_size]
            query = extract_patches(np.ascontiguousarray(window), patch_size, 1, layer)
            assigned, scores = match_patches(query, bank, return_scores=True)
            _, by, bx = bank.provenance[assigned[0]]
            rows.append(
                MatchReportRow(
                    layer=layer,
                    query_x=fx * stride,
                    query_y=fy * stride,
                    match_x=int(bx) * stride,
                    match_y=int(by) * stride,
                    ncc=float(scores[0]),
                )
            )
    return rows
