"""Patch-matching neural style synthesis.

Synthesizes images whose deep features locally match a style exemplar while
optionally tracking a content image, by minimizing a patch-matching energy
over a fixed convolutional feature pyramid with L-BFGS, coarse to fine.
"""

__version__ = "0.1.0"

from .energy import EnergyConfig, EnergyReport, SynthesisContext, evaluate
from .errors import (
    ConfigurationError,
    EngineError,
    InputError,
    OptimizationError,
    WeightFormatError,
)
from .lbfgs import MinimizeOptions, MinimizeResult, minimize
from .network import (
    ARCHITECTURE,
    NetworkDef,
    backward_multi_tap,
    forward_tapped,
    make_test_network,
)
from .patches import (
    AugmentationSet,
    PatchBank,
    build_style_bank,
    extract_patches,
    match_patches,
    style_energy_and_grad,
)
from .pipeline import (
    PyramidSchedule,
    SynthesisJob,
    TransferResult,
    run_invert,
    run_match_report,
    run_transfer,
)
from .weights import load_weights, save_weights

__all__ = [
    "__version__",
    "ARCHITECTURE",
    "AugmentationSet",
    "ConfigurationError",
    "EnergyConfig",
    "EnergyReport",
    "EngineError",
    "InputError",
    "MinimizeOptions",
    "MinimizeResult",
    "NetworkDef",
    "OptimizationError",
    "PatchBank",
    "PyramidSchedule",
    "SynthesisContext",
    "SynthesisJob",
    "TransferResult",
    "WeightFormatError",
    "backward_multi_tap",
    "build_style_bank",
    "evaluate",
    "extract_patches",
    "forward_tapped",
    "load_weights",
    "make_test_network",
    "match_patches",
    "minimize",
    "run_invert",
    "run_match_report",
    "run_transfer",
    "save_weights",
    "style_energy_and_grad",
]
