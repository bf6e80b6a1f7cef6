"""Command-line client for the synthesis service.

The CLI is a thin client: every subcommand builds a service request and
posts it either to an in-process application (the default; no server
needed) or to a remote one given with --server. File handling stays on the
client: images are read as raw bytes and shipped base64-encoded, results are
written back to disk.

Exit codes: 0 success, 2 usage/input errors, 1 runtime failures.
"""
from __future__ import annotations

import argparse
import base64
import json
import logging
import math
import sys
from pathlib import Path

log = logging.getLogger("neuralpatch.cli")

_DEFAULT_SCALES = "0.85,0.9,0.95,1.0,1.05,1.1,1.15"
_DEFAULT_ROTATIONS = ",".join(
    str(a) for a in (-math.pi / 12, -math.pi / 24, 0.0, math.pi / 24, math.pi / 12)
)


class _UsageError(Exception):
    pass


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise _UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _csv_names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip() != ""]


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError as exc:
        raise _UsageError(f"--size expects HEIGHTxWIDTH, got {text!r}") from exc


def _parse_coord(text: str) -> tuple[int, int]:
    try:
        x, y = text.split(",")
        return int(x), int(y)
    except ValueError as exc:
        raise _UsageError(f"--coords expects X,Y pixel pairs, got {text!r}") from exc


def _read_file_b64(path: str, what: str) -> str:
    try:
        return base64.b64encode(Path(path).read_bytes()).decode("ascii")
    except OSError as exc:
        raise _UsageError(f"cannot read {what} {path!r}: {exc}") from exc


def _weights_payload(args) -> dict:
    if getattr(args, "weights", None) is not None and getattr(args, "test_net", None) is not None:
        raise _UsageError("pass either --weights or --test-net, not both")
    if getattr(args, "weights", None) is not None:
        if not Path(args.weights).exists() and not args.server:
            raise _UsageError(f"weights file not found: {args.weights}")
        return {"path": args.weights}
    if getattr(args, "test_net", None) is not None:
        return {"test_seed": args.test_net, "width_scale": args.test_net_scale}
    raise _UsageError("one of --weights or --test-net is required")


def _apply_threads(count: int) -> None:
    """Cap BLAS worker threads; 0 keeps every core."""
    if count < 0:
        raise _UsageError("--threads must be >= 0")
    if count == 0:
        return
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=count)
    except ImportError:  # pragma: no cover - dependency is declared
        log.warning("threadpoolctl unavailable; --threads ignored")


def _post(args, path: str, payload: dict) -> dict:
    import httpx

    if getattr(args, "server", None):
        with httpx.Client(base_url=args.server, timeout=None) as client:
            response = client.post(path, json=payload)
    else:
        import asyncio

        from .service.app import create_app

        async def _go():
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                transport=transport, base_url="http://engine", timeout=None
            ) as client:
                return await client.post(path, json=payload)

        response = asyncio.run(_go())

    if response.status_code in (400, 422):
        raise _UsageError(_extract_detail(response))
    if response.status_code != 200:
        raise RuntimeError(f"service error {response.status_code}: {_extract_detail(response)}")
    return response.json()


def _extract_detail(response) -> str:
    try:
        detail = response.json().get("detail", response.text)
    except ValueError:
        return response.text
    if isinstance(detail, list):  # pydantic validation report
        return "; ".join(
            f"{'.'.join(str(p) for p in item.get('loc', []))}: {item.get('msg', '')}"
            for item in detail
        )
    return str(detail)


def _energy_options(args) -> dict:
    return {
        "alpha_content": args.alpha_content,
        "alpha_tv": args.alpha_tv,
        "mrf_layers": _csv_names(args.mrf_layers),
        "mrf_layer_weights": _csv_floats(args.mrf_layer_weights),
        "content_layer": args.content_layer,
        "patch_size": args.patch_size,
        "stride": args.stride,
        "scales": _csv_floats(args.scales),
        "rotations": _csv_floats(args.rotations),
        "enable_rotations": args.enable_rotations,
        "normalize_terms": args.normalize_terms,
    }


def _write_trace(path: str, levels: list[dict]) -> None:
    lines = []
    for level in levels:
        for rec in level["records"]:
            lines.append(
                json.dumps(
                    {
                        "level": level["level"],
                        "iter": rec["iteration"],
                        "total": rec["total"],
                        "style": rec["style"],
                        "content": rec["content"],
                        "tv": rec["tv"],
                    }
                )
            )
    Path(path).write_text("\n".join(lines) + "\n")


def _write_image(path: str, b64_png: str) -> None:
    try:
        Path(path).write_bytes(base64.b64decode(b64_png))
    except OSError as exc:
        raise RuntimeError(f"cannot write output {path!r}: {exc}") from exc


def _cmd_transfer(args) -> int:
    if args.alpha_content > 0 and args.content is None:
        raise _UsageError("--content is required unless --alpha-content is 0")
    if args.alpha_content == 0 and args.content is not None:
        log.warning("content image is ignored because --alpha-content is 0")
    payload = {
        "style_image": _read_file_b64(args.style, "style image"),
        "content_image": (
            _read_file_b64(args.content, "content image")
            if args.content is not None and args.alpha_content > 0
            else None
        ),
        "weights": _weights_payload(args),
        "options": _energy_options(args),
        "iterations": args.iterations,
        "output_size": _parse_size(args.size) if args.size else None,
        "seed": args.seed,
    }
    result = _post(args, "/v1/transfer", payload)
    _write_image(args.output, result["image"])
    if args.trace:
        _write_trace(args.trace, result["levels"])
    finals = result["levels"][-1]["records"]
    final_total = finals[-1]["total"] if finals else float("nan")
    print(f"{args.output}: {len(result['levels'])} level(s), final energy {final_total:.6e}")
    return 0


def _cmd_invert(args) -> int:
    payload = {
        "image": _read_file_b64(args.image, "image"),
        "image_b": _read_file_b64(args.image_b, "second image") if args.image_b else None,
        "blend": args.blend,
        "taps": _csv_names(args.taps),
        "alpha_tv": args.alpha_tv,
        "iterations": args.iterations,
        "seed": args.seed,
        "weights": _weights_payload(args),
    }
    result = _post(args, "/v1/invert", payload)
    _write_image(args.output, result["image"])
    if args.trace:
        _write_trace(args.trace, [result["trace"]])
    records = result["trace"]["records"]
    final_total = records[-1]["total"] if records else float("nan")
    print(f"{args.output}: final energy {final_total:.6e}")
    return 0


def _cmd_match_report(args) -> int:
    coords = args.coords
    if isinstance(coords, str):  # value came from a config file
        coords = [c for c in coords.split(";") if c.strip()]
    if not coords:
        raise _UsageError("at least one --coords X,Y is required")
    payload = {
        "image_a": _read_file_b64(args.a, "image A"),
        "image_b": _read_file_b64(args.b, "image B"),
        "coords": [_parse_coord(c) for c in coords],
        "layers": _csv_names(args.layers),
        "patch_size": args.patch_size,
        "weights": _weights_payload(args),
    }
    result = _post(args, "/v1/match-report", payload)
    print(f"{'layer':<10} {'query':<12} {'match':<12} ncc")
    for row in result["rows"]:
        query = f"({row['query_x']},{row['query_y']})"
        match = f"({row['match_x']},{row['match_y']})"
        print(f"{row['layer']:<10} {query:<12} {match:<12} {row['ncc']:.6f}")
    return 0


def _cmd_gen_test_weights(args) -> int:
    payload = {"seed": args.seed, "width_scale": args.width_scale}
    result = _post(args, "/v1/test-weights", payload)
    try:
        Path(args.output).write_bytes(base64.b64decode(result["weights"]))
    except OSError as exc:
        raise RuntimeError(f"cannot write {args.output!r}: {exc}") from exc
    print(f"{args.output}: {result['layer_count']} layers, {result['byte_size']} bytes")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("neuralpatch.service.app:app", host=args.host, port=args.port)
    return 0


def _add_client_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--server", help="base URL of a running service (default: run in process)")
    p.add_argument("--config", help="key=value file supplying flag defaults")
    p.add_argument("--threads", type=int, default=0, help="BLAS thread cap (0 = all cores)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")


def _add_weight_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--weights", help="path to a weight file (server-local path with --server)")
    p.add_argument("--test-net", type=int, metavar="SEED", help="use a seeded random test trunk")
    p.add_argument(
        "--test-net-scale",
        type=float,
        default=0.125,
        choices=(0.125, 0.25, 0.5),
        help="width fraction of the test trunk",
    )


def _add_energy_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha-content", type=float, default=1.0, help="content term weight")
    p.add_argument("--alpha-tv", type=float, default=0.001, help="smoothness term weight")
    p.add_argument("--mrf-layers", default="relu3_1,relu4_1", help="style layers (comma-separated)")
    p.add_argument("--mrf-layer-weights", default="1,1", help="per-layer style weights")
    p.add_argument("--content-layer", default="relu4_2")
    p.add_argument("--patch-size", type=int, default=3)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--scales", default=_DEFAULT_SCALES, help="style scale sweep")
    p.add_argument("--rotations", default=_DEFAULT_ROTATIONS, help="style rotation sweep (radians)")
    p.add_argument("--enable-rotations", action="store_true")
    p.add_argument("--normalize-terms", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuralpatch", description="Patch-matching neural style synthesis"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("transfer", help="synthesize an image in the style of an exemplar")
    _add_client_options(t)
    _add_weight_options(t)
    _add_energy_options(t)
    t.add_argument("--style", required=True, help="style exemplar (PNG/JPEG)")
    t.add_argument("--content", help="content image (required unless --alpha-content 0)")
    t.add_argument("--size", help="output HEIGHTxWIDTH for unguided synthesis")
    t.add_argument("--iterations", type=int, default=200, help="iterations per pyramid level")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--trace", help="write per-iteration energies as JSON lines")
    t.add_argument("-o", "--output", required=True, help="output PNG path")
    t.set_defaults(handler=_cmd_transfer)

    i = sub.add_parser("invert", help="reconstruct an image from its activations")
    _add_client_options(i)
    _add_weight_options(i)
    i.add_argument("--image", required=True)
    i.add_argument("--image-b", help="optional second image for feature blending")
    i.add_argument("--blend", type=float, default=1.0, help="blend weight on the first image")
    i.add_argument("--taps", default="relu3_1", help="target layers (comma-separated)")
    i.add_argument("--alpha-tv", type=float, default=0.001)
    i.add_argument("--iterations", type=int, default=200)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--trace", help="write per-iteration energies as JSON lines")
    i.add_argument("-o", "--output", required=True)
    i.set_defaults(handler=_cmd_invert)

    m = sub.add_parser("match-report", help="report nearest style patches between two images")
    _add_client_options(m)
    _add_weight_options(m)
    m.add_argument("--a", required=True, help="query image")
    m.add_argument("--b", required=True, help="bank image")
    m.add_argument("--coords", action="append", default=[], help="X,Y pixel in A (repeatable)")
    m.add_argument("--layers", default="relu3_1,relu4_1")
    m.add_argument("--patch-size", type=int, default=3)
    m.set_defaults(handler=_cmd_match_report)

    g = sub.add_parser("gen-test-weights", help="write a seeded random test trunk")
    _add_client_options(g)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument(
        "--width-scale", type=float, default=0.125, choices=(0.125, 0.25, 0.5)
    )
    g.add_argument("-o", "--output", required=True, help="output weight-file path")
    g.set_defaults(handler=_cmd_gen_test_weights)

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.set_defaults(handler=_cmd_serve)
    return parser


def _load_config_entries(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _UsageError(f"cannot read config file {path!r}: {exc}") from exc
    entries: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise _UsageError(f"{path}:{number}: expected key=value")
        key, value = stripped.split("=", 1)
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def _apply_config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Feed key=value file entries in as defaults; explicit flags still win."""
    config_path = None
    for index, token in enumerate(argv):
        if token == "--config" and index + 1 < len(argv):
            config_path = argv[index + 1]
        elif token.startswith("--config="):
            config_path = token.split("=", 1)[1]
    if config_path is None:
        return
    entries = _load_config_entries(config_path)
    command = next((t for t in argv if not t.startswith("-")), None)
    sub_actions = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    subparser = sub_actions[0].choices.get(command) if sub_actions and command else None
    if subparser is None:
        return
    dests = {a.dest: a for a in subparser._actions}
    unknown = set(entries) - set(dests)
    if unknown:
        raise _UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    defaults = {}
    for key, raw in entries.items():
        action = dests[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except (TypeError, ValueError) as exc:
                raise _UsageError(f"config key {key!r}: bad value {raw!r}") from exc
        else:
            defaults[key] = raw
    subparser.set_defaults(**defaults)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
        level = logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2)
        logging.basicConfig(
            level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
        )
        _apply_threads(getattr(args, "threads", 0))
        return args.handler(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # runtime failures map to exit code 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
