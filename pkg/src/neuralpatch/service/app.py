"""FastAPI application wrapping the synthesis engine.

The service keeps loaded trunks in an in-process cache keyed by their
source, so repeated jobs against the same weights skip the file parse. Jobs
run synchronously in the request worker; one request is one job.
"""
from __future__ import annotations

import base64
import binascii
import threading
import time

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..energy import EnergyConfig
from ..errors import ConfigurationError, EngineError, InputError, WeightFormatError
from ..images import decode_image, encode_png
from ..network import NetworkDef, make_test_network
from ..patches import AugmentationSet
from ..pipeline import (
    LevelTrace,
    SynthesisJob,
    run_invert,
    run_match_report,
    run_transfer,
)
from ..weights import load_weights, serialize_weights
from ..network import CONV_LAYERS
from .models import (
    EnergyOptions,
    HealthResponse,
    InvertRequest,
    InvertResponse,
    IterationRecordModel,
    LevelTraceModel,
    MatchReportRequest,
    MatchReportResponse,
    MatchRowModel,
    TestWeightsRequest,
    TestWeightsResponse,
    TransferRequest,
    TransferResponse,
    WeightsSource,
)


class WeightCache:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._cache: dict[str, NetworkDef] = {}

    def resolve(self, source: WeightsSource) -> NetworkDef:
        key = source.cache_key()
        with self._lock:
            net = self._cache.get(key)
            if net is None:
                if source.path is not None:
                    try:
                        net = load_weights(source.path)
                    except OSError as exc:
                        raise InputError(f"cannot read weights file: {exc}") from exc
                else:
                    net = make_test_network(source.test_seed, source.width_scale)
                self._cache[key] = net
        return net


def _b64_image(field: str, data: str):
    try:
        raw = base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise InputError(f"{field}: invalid base64 payload") from exc
    return decode_image(raw)


def _config_from_options(opt: EnergyOptions) -> EnergyConfig:
    return EnergyConfig(
        alpha_content=opt.alpha_content,
        alpha_tv=opt.alpha_tv,
        mrf_layers=tuple(opt.mrf_layers),
        mrf_layer_weights=tuple(opt.mrf_layer_weights),
        content_layer=opt.content_layer,
        patch_size=opt.patch_size,
        stride=opt.stride,
        augmentation=AugmentationSet(
            scales=tuple(opt.scales),
            rotations=tuple(opt.rotations),
            enabled_rotations=opt.enable_rotations,
        ),
        normalize_terms=opt.normalize_terms,
    )


def _trace_model(trace: LevelTrace) -> LevelTraceModel:
    return LevelTraceModel(
        level=trace.level,
        height=trace.height,
        width=trace.width,
        records=[
            IterationRecordModel(
                iteration=r.iteration,
                total=r.total,
                style=list(r.style),
                content=r.content,
                tv=r.tv,
            )
            for r in trace.records
        ],
    )


def create_app() -> FastAPI:
    app = FastAPI(title="neuralpatch", version=__version__)
    cache = WeightCache()

    @app.exception_handler(EngineError)
    async def _engine_error(_req: Request, exc: EngineError) -> JSONResponse:
        if isinstance(exc, InputError):
            status = 400
        elif isinstance(exc, (ConfigurationError, WeightFormatError)):
            status = 422
        else:
            status = 500
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.get("/healthz", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/v1/transfer", response_model=TransferResponse)
    def transfer(req: TransferRequest) -> TransferResponse:
        start = time.monotonic()
        net = cache.resolve(req.weights)
        style = _b64_image("style_image", req.style_image)
        content = (
            _b64_image("content_image", req.content_image)
            if req.content_image is not None
            else None
        )
        job = SynthesisJob(
            style=style,
            content=content,
            config=_config_from_options(req.options),
            seed=req.seed,
            iterations=req.iterations,
            output_size=req.output_size,
        )
        result = run_transfer(job, net)
        return TransferResponse(
            image=base64.b64encode(encode_png(result.image)).decode("ascii"),
            levels=[_trace_model(t) for t in result.levels],
            skipped_levels=list(result.skipped_levels),
            elapsed_seconds=time.monotonic() - start,
        )

    @app.post("/v1/invert", response_model=InvertResponse)
    def invert(req: InvertRequest) -> InvertResponse:
        start = time.monotonic()
        net = cache.resolve(req.weights)
        image = _b64_image("image", req.image)
        image_b = _b64_image("image_b", req.image_b) if req.image_b is not None else None
        result = run_invert(
            image,
            taps=tuple(req.taps),
            net=net,
            alpha_tv=req.alpha_tv,
            iterations=req.iterations,
            seed=req.seed,
            image_b=image_b,
            blend=req.blend,
        )
        return InvertResponse(
            image=base64.b64encode(encode_png(result.image)).decode("ascii"),
            trace=_trace_model(result.trace),
            elapsed_seconds=time.monotonic() - start,
        )

    @app.post("/v1/match-report", response_model=MatchReportResponse)
    def match_report(req: MatchReportRequest) -> MatchReportResponse:
        net = cache.resolve(req.weights)
        rows = run_match_report(
            _b64_image("image_a", req.image_a),
            _b64_image("image_b", req.image_b),
            coords=[(int(x), int(y)) for x, y in req.coords],
            layers=tuple(req.layers),
            net=net,
            patch_size=req.patch_size,
        )
        return MatchReportResponse(
            rows=[
                MatchRowModel(
                    layer=r.layer,
                    query_x=r.query_x,
                    query_y=r.query_y,
                    match_x=r.match_x,
                    match_y=r.match_y,
                    ncc=r.ncc,
                )
                for r in rows
            ]
        )

    @app.post("/v1/test-weights", response_model=TestWeightsResponse)
    def test_weights(req: TestWeightsRequest) -> TestWeightsResponse:
        net = make_test_network(req.seed, req.width_scale)
        records = [
            (l.name, net.convs[l.name].weight, net.convs[l.name].bias)
            for l in CONV_LAYERS
        ]
        blob = serialize_weights(records)
        return TestWeightsResponse(
            weights=base64.b64encode(blob).decode("ascii"),
            layer_count=len(records),
            byte_size=len(blob),
        )

    return app


app = create_app()
