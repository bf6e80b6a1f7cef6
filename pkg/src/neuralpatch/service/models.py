"""Request/response schemas for the HTTP service.

Images travel as base64-encoded PNG/JPEG bytes inside JSON. Option models
mirror the engine's EnergyConfig so a request maps one-to-one onto a job.
"""
from __future__ import annotations

from pydantic import BaseModel, Field, model_validator

from ..patches import DEFAULT_ROTATIONS, DEFAULT_SCALES
from ..pipeline import DEFAULT_ITERATIONS


class WeightsSource(BaseModel):
    """Where the trunk weights come from: a file on the server, or a seeded test net."""

    path: str | None = None
    test_seed: int | None = None
    width_scale: float = 0.125

    @model_validator(mode="after")
    def _exactly_one(self) -> "WeightsSource":
        if (self.path is None) == (self.test_seed is None):
            raise ValueError("provide exactly one of 'path' or 'test_seed'")
        return self

    def cache_key(self) -> str:
        if self.path is not None:
            return f"file:{self.path}"
        return f"test:{self.test_seed}:{self.width_scale}"


class EnergyOptions(BaseModel):
    alpha_content: float = Field(default=1.0, ge=0)
    alpha_tv: float = Field(default=0.001, ge=0)
    mrf_layers: list[str] = Field(default_factory=lambda: ["relu3_1", "relu4_1"])
    mrf_layer_weights: list[float] = Field(default_factory=lambda: [1.0, 1.0])
    content_layer: str = "relu4_2"
    patch_size: int = Field(default=3, ge=1)
    stride: int = Field(default=1, ge=1)
    scales: list[float] = Field(default_factory=lambda: list(DEFAULT_SCALES))
    rotations: list[float] = Field(default_factory=lambda: list(DEFAULT_ROTATIONS))
    enable_rotations: bool = False
    normalize_terms: bool = False


class IterationRecordModel(BaseModel):
    iteration: int
    total: float
    style: list[float]
    content: float
    tv: float


class LevelTraceModel(BaseModel):
    level: int
    height: int
    width: int
    records: list[IterationRecordModel]


class TransferRequest(BaseModel):
    style_image: str  # base64 PNG/JPEG
    content_image: str | None = None
    weights: WeightsSource
    options: EnergyOptions = Field(default_factory=EnergyOptions)
    iterations: int = Field(default=DEFAULT_ITERATIONS, ge=1)
    output_size: tuple[int, int] | None = None  # (height, width), unguided only
    seed: int = 0


class TransferResponse(BaseModel):
    image: str  # base64 PNG
    levels: list[LevelTraceModel]
    skipped_levels: list[int]
    elapsed_seconds: float


class InvertRequest(BaseModel):
    image: str
    image_b: str | None = None
    blend: float = Field(default=1.0, ge=0.0, le=1.0)
    taps: list[str] = Field(default_factory=lambda: ["relu3_1"])
    alpha_tv: float = Field(default=0.001, ge=0)
    iterations: int = Field(default=DEFAULT_ITERATIONS, ge=1)
    seed: int = 0
    weights: WeightsSource


class InvertResponse(BaseModel):
    image: str
    trace: LevelTraceModel
    elapsed_seconds: float


class MatchReportRequest(BaseModel):
    image_a: str
    image_b: str
    coords: list[tuple[int, int]]  # (x, y) pixels in image A
    layers: list[str] = Field(default_factory=lambda: ["relu3_1", "relu4_1"])
    patch_size: int = Field(default=3, ge=1)
    weights: WeightsSource


class MatchRowModel(BaseModel):
    layer: str
    query_x: int
    query_y: int
    match_x: int
    match_y: int
    ncc: float


class MatchReportResponse(BaseModel):
    rows: list[MatchRowModel]


class TestWeightsRequest(BaseModel):
    seed: int = 0
    width_scale: float = 0.125


class TestWeightsResponse(BaseModel):
    weights: str  # base64 weight-file bytes
    layer_count: int
    byte_size: int


class HealthResponse(BaseModel):
    status: str
    version: str
