"""SVG import/export for the restricted subset this tool emits.

One <path> per stroke (absolute M/C commands, 6 decimal places), stroke
color from ink as a gray hex, a white background rect. Importing is limited
to exactly this subset; anything else raises UnsupportedSvgError.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET

import numpy as np

from .model import Sketch, Stroke

__all__ = ["SvgError", "UnsupportedSvgError", "export_svg", "import_svg"]

SVG_NS = "http://www.w3.org/2000/svg"


class SvgError(ValueError):
    """Malformed SVG input."""


class UnsupportedSvgError(SvgError):
    """SVG uses features outside the emitted subset."""


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _ink_to_hex(ink: float) -> str:
    level = int(round((1.0 - ink) * 255.0))
    return f"#{level:02x}{level:02x}{level:02x}"


def _hex_to_ink(color: str) -> float:
    m = re.fullmatch(r"#([0-9a-fA-F]{2})([0-9a-fA-F]{2})([0-9a-fA-F]{2})", color)
    if not m:
        raise UnsupportedSvgError(f"unsupported stroke color {color!r}")
    r, g, b = (int(h, 16) for h in m.groups())
    if not r == g == b:
        raise UnsupportedSvgError(f"non-gray stroke color {color!r}")
    return 1.0 - r / 255.0


def _path_d(stroke: Stroke) -> str:
    pts = stroke.points
    parts = [f"M {_fmt(pts[0, 0])} {_fmt(pts[0, 1])}"]
    for j in range(stroke.num_segments):
        p1, p2, p3 = pts[3 * j + 1], pts[3 * j + 2], pts[3 * j + 3]
        parts.append(
            "C "
            + " ".join(_fmt(c) for c in (p1[0], p1[1], p2[0], p2[1], p3[0], p3[1]))
        )
    return " ".join(parts)


def export_svg(sketch: Sketch) -> str:
    """Deterministic SVG text for a sketch (byte-stable for a given input)."""
    w, h = sketch.canvas_w, sketch.canvas_h
    lines = [
        f'<svg xmlns="{SVG_NS}" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>',
    ]
    for stroke in sketch.strokes:
        lines.append(
            f'<path d="{_path_d(stroke)}" fill="none" '
            f'stroke="{_ink_to_hex(stroke.ink)}" '
            f'stroke-width="{_fmt(stroke.width)}" '
            f'stroke-opacity="{_fmt(stroke.opacity)}" '
            f'stroke-linecap="round" stroke-linejoin="round" '
            f'data-trainable="{1 if stroke.trainable else 0}"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_TOKEN_RE = re.compile(rf"({_NUM})|([MCmc])|(\S)")


def _parse_path_d(d: str) -> np.ndarray:
    """Parse an absolute M + C* path into a (3m+1, 2) control point array."""
    tokens: list[str] = []
    for m in _TOKEN_RE.finditer(d):
        num, cmd, bad = m.groups()
        if bad is not None and bad not in ",":
            raise UnsupportedSvgError(f"unsupported path token {bad!r}")
        if num is not None:
            tokens.append(num)
        elif cmd is not None:
            if cmd in "mc":
                raise UnsupportedSvgError("relative path commands are unsupported")
            tokens.append(cmd)
    if not tokens or tokens[0] != "M":
        raise UnsupportedSvgError("path must start with an absolute M command")
    i = 1
    coords: list[float] = []
    try:
        coords.extend([float(tokens[i]), float(tokens[i + 1])])
    except (IndexError, ValueError) as e:
        raise SvgError("M command needs two coordinates") from e
    i += 2
    while i < len(tokens):
        if tokens[i] != "C":
            raise UnsupportedSvgError(f"unsupported path command {tokens[i]!r}")
        i += 1
        chunk = tokens[i : i + 6]
        if len(chunk) != 6 or any(c in "MC" for c in chunk):
            raise SvgError("C command needs six coordinates")
        coords.extend(float(c) for c in chunk)
        i += 6
    pts = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 4:
        raise SvgError("path needs at least one C command")
    return pts


def _local_tag(elem: ET.Element) -> str:
    tag = elem.tag
    return tag.rsplit("}", 1)[-1] if "}" in tag else tag


def import_svg(text: str) -> Sketch:
    """Reconstruct a Sketch from SVG text restricted to the emitted subset."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        raise SvgError(f"malformed SVG: {e}") from e
    if _local_tag(root) != "svg":
        raise UnsupportedSvgError(f"root element <{_local_tag(root)}> is not <svg>")
    try:
        canvas_w = int(round(float(root.get("width", ""))))
        canvas_h = int(round(float(root.get("height", ""))))
    except ValueError as e:
        raise SvgError("svg element needs numeric width/height") from e

    strokes: list[Stroke] = []
    for elem in root:
        tag = _local_tag(elem)
        if tag == "rect":
            continue  # background
        if tag != "path":
            raise UnsupportedSvgError(f"unsupported SVG element <{tag}>")
        d = elem.get("d")
        if d is None:
            raise SvgError("path element is missing its d attribute")
        pts = _parse_path_d(d)
        strokes.append(
            Stroke(
                points=pts,
                width=float(elem.get("stroke-width", "3.0")),
                ink=_hex_to_ink(elem.get("stroke", "#000000")),
                opacity=float(elem.get("stroke-opacity", "1.0")),
                trainable=elem.get("data-trainable", "1") == "1",
            )
        )
    return Sketch(strokes=tuple(strokes), canvas_w=canvas_w, canvas_h=canvas_h)
