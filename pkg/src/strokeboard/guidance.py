"""Guidance gradients: noise schedule, classifier-free combination, latent
encoder stand-in, and the per-pixel score-distillation gradient.

Backends:
  pixel_target  -- bypasses the latent path; gradient of mean squared pixel
                   distance to a fixed target image (testing/fitting oracle).
  mock_latent   -- analytic denoiser centered on a registered target blended
                   with the condition image; classifier-free combined against
                   the all-white unconditional center.
  remote        -- framed HTTP call to an external diffusion service.
  zero          -- always-zero gradient (stub for wiring/UI tests).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Rng

__all__ = [
    "GuidanceError",
    "UnknownPromptError",
    "NoiseSchedule",
    "GuidanceConfig",
    "GuidanceDiagnostics",
    "TargetRegistry",
    "schedule_at",
    "cfg_combine",
    "encode_latent",
    "encode_backward",
    "mock_denoiser",
    "sds_pixel_grad",
]

DEFAULT_TIMESTEPS = 1000
DEFAULT_BETA_START = 8.5e-4
DEFAULT_BETA_END = 1.2e-2
DEFAULT_POOL = 8

BACKENDS = ("pixel_target", "mock_latent", "remote", "zero")


class GuidanceError(Exception):
    pass


class UnknownPromptError(GuidanceError):
    """No target registered for this prompt in the mock backend."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Signal/noise mixing coefficients indexed by timestep t in [1, T].

    alpha_t = sqrt(alpha_bar_t) and sigma_t = sqrt(1 - alpha_bar_t), so
    alpha_t^2 + sigma_t^2 = 1 holds by construction.
    """

    betas: np.ndarray
    alpha_bar: np.ndarray

    @property
    def timesteps(self) -> int:
        return len(self.betas)

    @classmethod
    def scaled_linear(
        cls,
        timesteps: int = DEFAULT_TIMESTEPS,
        beta_start: float = DEFAULT_BETA_START,
        beta_end: float = DEFAULT_BETA_END,
    ) -> "NoiseSchedule":
        """Per-step variances linear in sqrt space (latent-diffusion convention)."""
        betas = np.linspace(beta_start**0.5, beta_end**0.5, timesteps) ** 2
        alpha_bar = np.cumprod(1.0 - betas)
        for arr in (betas, alpha_bar):
            arr.flags.writeable = False
        return cls(betas=betas, alpha_bar=alpha_bar)

    def at(self, t: int) -> tuple[float, float]:
        return schedule_at(self, t)


def schedule_at(sched: NoiseSchedule, t: int) -> tuple[float, float]:
    """(alpha_t, sigma_t) for 1-indexed timestep t."""
    if not 1 <= t <= sched.timesteps:
        raise ValueError(f"timestep {t} outside [1, {sched.timesteps}]")
    ab = sched.alpha_bar[t - 1]
    return float(np.sqrt(ab)), float(np.sqrt(1.0 - ab))


def cfg_combine(eps_cond: np.ndarray, eps_uncond: np.ndarray, omega: float) -> np.ndarray:
    """Classifier-free extrapolation (1 + omega) * cond - omega * uncond."""
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError(f"shape mismatch: {eps_cond.shape} vs {eps_uncond.shape}")
    return (1.0 + omega) * eps_cond - omega * eps_uncond


def encode_latent(image: np.ndarray, pool: int = DEFAULT_POOL) -> np.ndarray:
    """Average-pool stand-in for the latent encoder (pool x pool blocks)."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    if h % pool or w % pool:
        raise ValueError(f"image dims {image.shape} not divisible by pool {pool}")
    return image.reshape(h // pool, pool, w // pool, pool).mean(axis=(1, 3))


def encode_backward(dL_dz: np.ndarray, pool: int = DEFAULT_POOL) -> np.ndarray:
    """Exact adjoint of encode_latent: spread each cell over its block / pool^2."""
    dL_dz = np.asarray(dL_dz, dtype=np.float64)
    return np.repeat(np.repeat(dL_dz, pool, axis=0), pool, axis=1) / (pool * pool)


class TargetRegistry:
    """Prompt-keyed raster targets for the mock denoiser.

    ``cond_blend`` is the weight of the registered target against the live
    condition image when forming the mock's conditional center.
    """

    def __init__(self):
        self._targets: dict[str, tuple[np.ndarray, float]] = {}

    def register(self, prompt: str, target: np.ndarray, cond_blend: float = 0.5) -> None:
        if not 0.0 <= cond_blend <= 1.0:
            raise ValueError("cond_blend must be in [0, 1]")
        self._targets[prompt] = (np.asarray(target, dtype=np.float64), cond_blend)

    def lookup(self, prompt: str) -> tuple[np.ndarray, float]:
        try:
            return self._targets[prompt]
        except KeyError:
            raise UnknownPromptError(f"no target registered for prompt {prompt!r}") from None

    def __contains__(self, prompt: str) -> bool:
        return prompt in self._targets


def mock_denoiser(
    z_t: np.ndarray,
    t: int,
    prompt: str,
    cond_image: np.ndarray,
    registry: TargetRegistry,
    sched: NoiseSchedule,
    pool: int = DEFAULT_POOL,
) -> np.ndarray:
    """Analytic noise prediction centered on the blended target.

    eps_hat = (z_t - alpha_t * z_target) / sigma_t with
    z_target = encode(blend * target + (1 - blend) * cond_image), so for
    z_t = alpha z + sigma eps the residual eps_hat - eps equals
    (alpha/sigma) (z - z_target).
    """
    target, blend = registry.lookup(prompt)
    cond_image = np.asarray(cond_image, dtype=np.float64)
    if target.shape != cond_image.shape:
        raise GuidanceError(
            f"registered target shape {target.shape} != condition {cond_image.shape}"
        )
    z_target = encode_latent(blend * target + (1.0 - blend) * cond_image, pool)
    alpha, sigma = schedule_at(sched, t)
    return (z_t - alpha * z_target) / sigma


@dataclass(frozen=True)
class GuidanceConfig:
    prompt: str
    omega: float = 100.0
    t_range: tuple[int, int] = (50, 950)
    weight_fn: str = "uniform"  # or "sigma2"
    backend: str = "mock_latent"
    pool: int = DEFAULT_POOL
    # backend payloads (exactly one of these is used, per backend)
    target: np.ndarray | None = None
    registry: TargetRegistry | None = None
    endpoint: str | None = None
    negative_prompt: str | None = None
    timeout: float = 120.0
    retries: int = 2

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError("omega must be >= 0")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; expected one of {BACKENDS}")
        if self.weight_fn not in ("uniform", "sigma2"):
            raise ValueError(f"unknown weight_fn {self.weight_fn!r}")
        lo, hi = self.t_range
        if not 1 <= lo <= hi:
            raise ValueError(f"invalid t_range {self.t_range}")

    def validate_against(self, sched: NoiseSchedule) -> None:
        if self.t_range[1] > sched.timesteps:
            raise ValueError(
                f"t_range {self.t_range} exceeds schedule length {sched.timesteps}"
            )


@dataclass
class GuidanceDiagnostics:
    t: int
    loss: float | None


def _weight(cfg: GuidanceConfig, sigma: float) -> float:
    return sigma * sigma if cfg.weight_fn == "sigma2" else 1.0


def sds_pixel_grad(
    aug_image: np.ndarray,
    aug_cond: np.ndarray,
    cfg: GuidanceConfig,
    sched: NoiseSchedule,
    rng: Rng,
) -> tuple[np.ndarray, GuidanceDiagnostics]:
    """Per-pixel guidance gradient on the augmented composite image.

    Produces w(t) * E^T(eps_hat - eps) for the latent backends (E^T is the
    encoder adjoint); the pixel_target backend returns 2 (I - target) / N
    directly in pixel space.
    """
    aug_image = np.asarray(aug_image, dtype=np.float64)
    aug_cond = np.asarray(aug_cond, dtype=np.float64)
    if aug_image.shape != aug_cond.shape:
        raise ValueError(f"image/cond shape mismatch: {aug_image.shape} vs {aug_cond.shape}")
    cfg.validate_against(sched)
    h, w = aug_image.shape
    if h % cfg.pool or w % cfg.pool:
        raise ValueError(f"image dims {aug_image.shape} not divisible by pool {cfg.pool}")

    t = rng.integers(cfg.t_range[0], cfg.t_range[1])
    eps = rng.normal(size=(h // cfg.pool, w // cfg.pool))
    alpha, sigma = schedule_at(sched, t)

    if cfg.backend == "pixel_target":
        if cfg.target is None:
            raise GuidanceError("pixel_target backend needs cfg.target")
        if cfg.target.shape != aug_image.shape:
            raise GuidanceError(
                f"target shape {cfg.target.shape} != image {aug_image.shape}"
            )
        n = aug_image.size
        resid = aug_image - cfg.target
        grad = 2.0 * resid / n
        return grad, GuidanceDiagnostics(t=t, loss=float((resid**2).sum() / n))

    if cfg.backend == "zero":
        return np.zeros_like(aug_image), GuidanceDiagnostics(t=t, loss=None)

    if cfg.backend == "mock_latent":
        if cfg.registry is None:
            raise GuidanceError("mock_latent backend needs cfg.registry")
        z = encode_latent(aug_image, cfg.pool)
        z_t = alpha * z + sigma * eps
        eps_cond = mock_denoiser(z_t, t, cfg.prompt, aug_cond, cfg.registry, sched, cfg.pool)
        # Unconditional center: the latent of the all-white canvas.
        eps_uncond = (z_t - alpha * np.ones_like(z)) / sigma
        eps_hat = cfg_combine(eps_cond, eps_uncond, cfg.omega)
        resid = eps_hat - eps
        grad = _weight(cfg, sigma) * encode_backward(resid, cfg.pool)
        return grad, GuidanceDiagnostics(t=t, loss=float((resid**2).sum()))

    # remote
    from . import protocol

    if not cfg.endpoint:
        raise GuidanceError("remote backend needs cfg.endpoint")
    response = protocol.remote_guidance_call(
        cfg.endpoint,
        protocol.GuidanceRequest(
            prompt=cfg.prompt,
            negative_prompt=cfg.negative_prompt,
            omega=cfg.omega,
            timestep=t,
            width=w,
            height=h,
            image=aug_image.astype(np.float32),
            cond=aug_cond.astype(np.float32),
        ),
        timeout=cfg.timeout,
        retries=cfg.retries,
    )
    if response.space == "latent":
        grad = encode_backward(response.grad.astype(np.float64), response.pool)
    else:
        grad = response.grad.astype(np.float64)
    if grad.shape != aug_image.shape:
        raise protocol.ProtocolError(
            f"remote gradient shape {grad.shape} != image {aug_image.shape}"
        )
    return _weight(cfg, sigma) * grad, GuidanceDiagnostics(t=t, loss=response.loss)
