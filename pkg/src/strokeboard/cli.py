"""Headless command line: run one optimization, serve the API, export
storyboards, preview QuickDraw lines.

Exit codes: 0 success, 2 configuration error, 3 guidance backend error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .augment import AugmentConfig
from .backends import BackendSpecError, build_guidance
from .guidance import GuidanceConfig, GuidanceError
from .model import Rng, Sketch, random_init_strokes
from .optimize import OptimizeAbort, OptimizeConfig, optimize_sketch
from .protocol import BackendError, ProtocolError
from .quickdraw import QuickDrawError, load_quickdraw
from .raster import render, write_png
from .svg import SvgError, export_svg, import_svg

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strokeboard",
        description="Text-and-sketch storyboard ideation via Bezier stroke optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one optimization headlessly")
    run.add_argument("--prompt", required=True, help="text prompt for the round")
    run.add_argument("--init", help="initial sketch (.ndjson QuickDraw line or .svg)")
    run.add_argument("--strokes", type=int, default=16)
    run.add_argument("--segments", type=int, default=5)
    run.add_argument("--iters", type=int, default=1000)
    run.add_argument("--lr", type=float, default=1.0)
    run.add_argument("--omega", type=float, default=100.0)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument(
        "--guidance",
        required=True,
        help="zero | pixel:PATH | mock:PATH | remote:URL",
    )
    run.add_argument("--out", required=True, help="output SVG path")
    run.add_argument("--png", help="also rasterize the result to this PNG")
    run.add_argument("--trace", help="write per-iteration trace JSONL here")
    run.add_argument("--canvas", type=int, default=600, help="square canvas size")
    run.add_argument("--width", type=float, default=3.0, help="stroke width for new strokes")
    run.add_argument("--cond-blend", type=float, default=0.5, help="mock backend target/condition blend")
    run.add_argument("--no-augment", action="store_true", help="disable random perspective/crop")

    serve = sub.add_parser("serve", help="host the HTTP API")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--state", help="session persistence directory")

    export = sub.add_parser("export", help="export a session's storyboard SVG")
    export.add_argument("--state", required=True, help="session persistence directory")
    export.add_argument("--session", required=True, help="session id")
    export.add_argument("--out", required=True, help="output SVG path")

    preview = sub.add_parser("quickdraw-preview", help="render a QuickDraw ndjson line")
    preview.add_argument("--in", dest="infile", required=True, help="ndjson file")
    preview.add_argument("--line", type=int, default=0, help="0-based line number")
    preview.add_argument("--out", required=True, help="output SVG path")
    preview.add_argument("--png", help="also rasterize to this PNG")
    preview.add_argument("--canvas", type=int, default=600)
    return parser


def _load_init(path: str, canvas: int) -> Sketch:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"init sketch {path!r} does not exist")
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".ndjson":
        first = next((line for line in text.splitlines() if line.strip()), None)
        if first is None:
            raise QuickDrawError(f"{path!r} contains no ndjson lines")
        return load_quickdraw(first, canvas, canvas)
    if p.suffix.lower() == ".svg":
        sketch = import_svg(text)
        # Imported strokes arrive as the condition sketch.
        return sketch.with_strokes(s.with_trainable(False) for s in sketch.strokes)
    raise ValueError(f"init sketch {path!r} must be .ndjson or .svg")


def _cmd_run(args) -> int:
    canvas = args.canvas
    out_size = 512 if canvas >= 512 else canvas
    if args.init:
        initial = _load_init(args.init, canvas)
        if (initial.canvas_w, initial.canvas_h) != (canvas, canvas):
            # SVG files carry their own canvas; trust it.
            canvas_w, canvas_h = initial.canvas_w, initial.canvas_h
        else:
            canvas_w = canvas_h = canvas
    else:
        initial = Sketch(strokes=(), canvas_w=canvas, canvas_h=canvas)
        canvas_w = canvas_h = canvas
    trainable = random_init_strokes(
        args.strokes, args.segments, canvas_w, canvas_h, Rng(args.seed), width=args.width
    )
    if args.no_augment:
        aug = AugmentConfig.identity(out_size=out_size)
    else:
        aug = AugmentConfig(out_size=out_size)
    base_guidance = GuidanceConfig(
        prompt=args.prompt, omega=args.omega, backend="zero"
    )
    guidance = build_guidance(
        args.guidance, base_guidance, prompt=args.prompt,
        out_size=out_size, cond_blend=args.cond_blend,
    )
    cfg = OptimizeConfig(
        iterations=args.iters,
        lr=args.lr,
        augment=aug,
        guidance=guidance,
        seed=args.seed,
        guidance_spec=args.guidance,
    )
    trace_file = open(args.trace, "w", encoding="utf-8") if args.trace else None
    try:
        on_event = None
        if trace_file is not None:
            on_event = lambda ev: trace_file.write(ev.to_json() + "\n")
        result = optimize_sketch(initial, trainable, cfg, on_event=on_event)
    finally:
        if trace_file is not None:
            trace_file.close()
    combined = initial.with_strokes(
        tuple(initial.strokes) + tuple(result.sketch.strokes)
    )
    Path(args.out).write_text(export_svg(combined), encoding="utf-8")
    if args.png:
        write_png(render(combined), args.png)
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(state_dir=args.state), host=args.host, port=args.port)
    return EXIT_OK


def _cmd_export(args) -> int:
    from . import session as sess

    path = Path(args.state) / f"{args.session}.json"
    if not path.exists():
        raise FileNotFoundError(f"no session file at {path}")
    loaded = sess.load_session(path.read_text(encoding="utf-8"))
    Path(args.out).write_text(sess.export_storyboard(loaded), encoding="utf-8")
    return EXIT_OK


def _cmd_quickdraw_preview(args) -> int:
    lines = Path(args.infile).read_text(encoding="utf-8").splitlines()
    if not 0 <= args.line < len(lines):
        raise ValueError(f"line {args.line} out of range (file has {len(lines)} lines)")
    sketch = load_quickdraw(lines[args.line], args.canvas, args.canvas)
    Path(args.out).write_text(export_svg(sketch), encoding="utf-8")
    if args.png:
        write_png(render(sketch), args.png)
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "serve": _cmd_serve,
    "export": _cmd_export,
    "quickdraw-preview": _cmd_quickdraw_preview,
}

_CONFIG_ERRORS = (
    BackendSpecError,
    QuickDrawError,
    SvgError,
    FileNotFoundError,
    ValueError,
)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _CONFIG_ERRORS as e:
        print(f"strokeboard: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OptimizeAbort as e:
        print(f"strokeboard: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except (BackendError, ProtocolError, GuidanceError) as e:
        print(f"strokeboard: {e}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
