"""The synthesis objective: style + content + smoothness, with gradients.

total = sum_l w_l * E_style,l + alpha_content * E_content + alpha_tv * TV

Style terms live on feature maps of the trunk, matched against fixed patch
banks; the content term penalizes squared distance to target activations;
the smoothness term is a squared forward-difference penalty on raw pixels.
All terms are unnormalized sums of squares unless ``normalize_terms`` is
set, which divides each term (and its gradient) by its element count.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, OptimizationError
from .network import NetworkDef, backward_multi_tap, forward_tapped, tap_names
from .patches import AugmentationSet, PatchBank, extract_patches, match_patches, style_energy_and_grad
from .tensor import Tensor, require_chw


@dataclass(frozen=True)
class EnergyConfig:
    """Knobs of the objective. Defaults reproduce the reference behaviour."""

    alpha_content: float = 1.0
    alpha_tv: float = 0.001
    mrf_layers: tuple[str, ...] = ("relu3_1", "relu4_1")
    mrf_layer_weights: tuple[float, ...] = (1.0, 1.0)
    content_layer: str = "relu4_2"
    patch_size: int = 3
    stride: int = 1
    augmentation: AugmentationSet = AugmentationSet()
    normalize_terms: bool = False

    def __post_init__(self) -> None:
        if self.alpha_content < 0 or self.alpha_tv < 0:
            raise ConfigurationError("term weights must be non-negative")
        if self.patch_size < 1 or self.stride < 1:
            raise ConfigurationError("patch size and stride must be >= 1")
        if len(self.mrf_layers) != len(self.mrf_layer_weights):
            raise ConfigurationError(
                "mrf_layers and mrf_layer_weights must have equal length"
            )
        if any(w < 0 for w in self.mrf_layer_weights):
            raise ConfigurationError("style layer weights must be non-negative")
        valid = set(tap_names())
        for name in (*self.mrf_layers, self.content_layer):
            if name not in valid:
                raise ConfigurationError(f"unknown layer {name!r}")


def content_energy_and_grad(act: Tensor, target: Tensor) -> tuple[float, Tensor]:
    """Unnormalized squared distance to the target activations."""
    if act.shape != target.shape:
        raise ConfigurationError(
            f"content target shape {target.shape} does not match {act.shape}"
        )
    diff = act - target
    return float(np.sum(diff * diff, dtype=np.float64)), 2.0 * diff


def tv_energy_and_grad(image: Tensor) -> tuple[float, Tensor]:
    """Squared forward differences per channel; last row/column omitted."""
    require_chw(image)
    dh = image[:, :, 1:] - image[:, :, :-1]
    dv = image[:, 1:, :] - image[:, :-1, :]
    energy = float(np.sum(dh * dh, dtype=np.float64) + np.sum(dv * dv, dtype=np.float64))
    grad = np.zeros_like(image)
    grad[:, :, 1:] += 2.0 * dh
    grad[:, :, :-1] -= 2.0 * dh
    grad[:, 1:, :] += 2.0 * dv
    grad[:, :-1, :] -= 2.0 * dv
    return energy, grad


@dataclass
class SynthesisContext:
    """Everything fixed during one optimization: network, targets, knobs."""

    net: NetworkDef
    config: EnergyConfig
    style_banks: dict[str, PatchBank] = field(default_factory=dict)
    content_targets: dict[str, Tensor] = field(default_factory=dict)

    def active_mrf_layers(self) -> list[tuple[str, float]]:
        return [
            (layer, weight)
            for layer, weight in zip(self.config.mrf_layers, self.config.mrf_layer_weights)
            if weight > 0
        ]


@dataclass
class EnergyReport:
    """One evaluation of the objective at one image."""

    total: float
    style: tuple[float, ...]  # one per configured style layer, already weighted
    content: float  # pre-weight content term
    tv: float  # pre-weight smoothness term
    grad: Tensor
    assignments: tuple[np.ndarray | None, ...]

    @property
    def style_total(self) -> float:
        return float(sum(self.style))


def evaluate(
    image: Tensor,
    ctx: SynthesisContext,
    frozen_assignments: tuple[np.ndarray | None, ...] | None = None,
) -> EnergyReport:
    """Evaluate the full objective and its pixel gradient at one image.

    Matching is re-run for every call (the descent property of the outer
    optimization relies on each evaluation using its own best assignments);
    passing ``frozen_assignments`` pins the matches instead, which makes the
    objective a fixed quadratic-plus-network composition.
    """
    require_chw(image)
    cfg = ctx.config
    mrf_active = ctx.active_mrf_layers()
    content_active = cfg.alpha_content > 0 and ctx.content_targets

    taps = {layer for layer, _ in mrf_active}
    if content_active:
        taps |= set(ctx.content_targets)
    need_backward = bool(taps)
    acts = forward_tapped(ctx.net, image, taps, cache_for_backward=need_backward)

    tap_grads: dict[str, Tensor] = {}
    style_terms: list[float] = []
    assignments_out: list[np.ndarray | None] = []
    for i, (layer, weight) in enumerate(zip(cfg.mrf_layers, cfg.mrf_layer_weights)):
        if weight == 0:
            style_terms.append(0.0)
            assignments_out.append(None)
            continue
        bank = ctx.style_banks.get(layer)
        if bank is None:
            raise ConfigurationError(f"no style bank built for layer {layer!r}")
        feature = acts.activations[layer]
        query = extract_patches(feature, cfg.patch_size, cfg.stride, layer)
        if frozen_assignments is not None:
            assigned = frozen_assignments[i]
            if assigned is None:
                raise ConfigurationError(f"frozen assignments missing for {layer!r}")
        else:
            assigned = match_patches(query, bank)
        term, grad = style_energy_and_grad(feature, bank, assigned)
        if cfg.normalize_terms:
            term /= len(query)
            grad = grad / len(query)
        style_terms.append(weight * term)
        prev = tap_grads.get(layer)
        scaled = weight * grad
        tap_grads[layer] = scaled if prev is None else prev + scaled
        assignments_out.append(assigned)

    content_term = 0.0
    if content_active:
        for layer, target in ctx.content_targets.items():
            term, grad = content_energy_and_grad(acts.activations[layer], target)
            if cfg.normalize_terms:
                term /= target.size
                grad = grad / target.size
            content_term += term
            scaled = cfg.alpha_content * grad
            prev = tap_grads.get(layer)
            tap_grads[layer] = scaled if prev is None else prev + scaled

    tv_term, tv_grad = tv_energy_and_grad(image)
    if cfg.normalize_terms:
        tv_term /= image.size
        tv_grad = tv_grad / image.size

    if tap_grads:
        pixel_grad = backward_multi_tap(ctx.net, acts, tap_grads)
    else:
        pixel_grad = np.zeros_like(image)
    grad = pixel_grad + cfg.alpha_tv * tv_grad

    total = float(sum(style_terms) + cfg.alpha_content * content_term + cfg.alpha_tv * tv_term)
    if not np.isfinite(total) or not np.all(np.isfinite(grad)):
        raise OptimizationError("objective produced a non-finite energy or gradient")
    return EnergyReport(
        total=total,
        style=tuple(style_terms),
        content=content_term,
        tv=tv_term,
        grad=grad,
        assignments=tuple(assignments_out),
    )
