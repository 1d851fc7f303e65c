"""strokeboard: interactive text-and-sketch storyboard ideation.

Optimizes the control points of Bezier-stroke sketches against a pluggable
guidance signal through a differentiable rasterizer, with multi-round
storyboard sessions where strokes are edited and prompts expanded between
rounds.
"""

from ._kernels import BACKEND as kernel_backend
from .model import Rng, Sketch, Stroke, fit_polyline_to_bezier, random_init_strokes
from .quickdraw import load_quickdraw
from .raster import compose_ink, eval_bezier, flatten, render, render_backward
from .svg import export_svg, import_svg

__version__ = "0.1.0"

__all__ = [
    "kernel_backend",
    "Rng",
    "Sketch",
    "Stroke",
    "fit_polyline_to_bezier",
    "random_init_strokes",
    "load_quickdraw",
    "render",
    "render_backward",
    "compose_ink",
    "eval_bezier",
    "flatten",
    "export_svg",
    "import_svg",
    "__version__",
]
