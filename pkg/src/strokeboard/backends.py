"""Build live guidance configs from serializable backend spec strings.

Spec forms: "zero", "pixel:PATH", "mock:PATH", "remote:URL". Paths may be
PNG (any PIL-readable raster) or SVG in the emitted subset; rasters are
resized to the augmented view size, since guidance compares in that frame.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .augment import AugmentParams, apply_augmentation
from .guidance import GuidanceConfig, TargetRegistry
from .raster import read_png, render
from .svg import import_svg

__all__ = ["BackendSpecError", "resize_image", "load_target_image", "build_guidance"]


class BackendSpecError(ValueError):
    pass


def resize_image(image: np.ndarray, out_size: int) -> np.ndarray:
    """Bilinear resize through the augmentation pipeline's identity params."""
    h, w = image.shape
    if (h, w) == (out_size, out_size):
        return image
    params = AugmentParams(
        apply_perspective=False,
        homography=np.eye(3),
        crop_rect=(0.0, 0.0, float(w), float(h)),
        out_size=out_size,
        src_w=w,
        src_h=h,
    )
    return apply_augmentation(image, params)


def load_target_image(path: str, out_size: int) -> np.ndarray:
    if path.lower().endswith(".svg"):
        with open(path, "r", encoding="utf-8") as f:
            image = render(import_svg(f.read()))
    else:
        image = read_png(path)
    return resize_image(image, out_size)


def build_guidance(
    spec: str,
    base: GuidanceConfig,
    prompt: str,
    out_size: int,
    cond_blend: float = 0.5,
) -> GuidanceConfig:
    """Resolve a backend spec into a runnable GuidanceConfig."""
    if spec == "zero":
        return replace(base, prompt=prompt, backend="zero")
    if spec.startswith("pixel:"):
        target = load_target_image(spec[len("pixel:") :], out_size)
        return replace(base, prompt=prompt, backend="pixel_target", target=target)
    if spec.startswith("mock:"):
        target = load_target_image(spec[len("mock:") :], out_size)
        registry = TargetRegistry()
        registry.register(prompt, target, cond_blend=cond_blend)
        return replace(base, prompt=prompt, backend="mock_latent", registry=registry)
    if spec.startswith("remote:"):
        endpoint = spec[len("remote:") :]
        if not endpoint:
            raise BackendSpecError("remote: spec needs a URL")
        return replace(base, prompt=prompt, backend="remote", endpoint=endpoint)
    raise BackendSpecError(
        f"unknown guidance spec {spec!r}; expected zero|pixel:PATH|mock:PATH|remote:URL"
    )
