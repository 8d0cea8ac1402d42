"""DDPM ancestral sampling with split classifier-free guidance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .diffusion import DiffusionSchedule, to_x0_eps
from .errors import InvalidArgument
from .guidance import CUSTOM_WEIGHTS, GuidanceSchedule, make_tryon_schedule, split_cfg

DEFAULT_SAMPLING_STEPS = 1000


@dataclass
class SamplerConfig:
    num_steps: int = DEFAULT_SAMPLING_STEPS
    seed: int = 0
    guidance: GuidanceSchedule = field(default_factory=lambda: make_tryon_schedule(*CUSTOM_WEIGHTS))
    prediction_target: str = "epsilon"
    clip_intermediate: bool = False
    strict_guidance: bool = True

    def to_dict(self) -> dict:
        return {
            "num_steps": self.num_steps,
            "seed": self.seed,
            "guidance": self.guidance.to_dict(),
            "prediction_target": self.prediction_target,
            "clip_intermediate": self.clip_intermediate,
            "strict_guidance": self.strict_guidance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        d = dict(d)
        if "guidance" in d:
            d["guidance"] = GuidanceSchedule.from_dict(d["guidance"])
        return cls(**d)

    def metadata(self, checkpoint_hash: str | None = None) -> dict:
        return {
            "seed": self.seed,
            "cfg_weights": list(self.guidance.weights),
            "steps": self.num_steps,
            "prediction_target": self.prediction_target,
            "checkpoint_hash": checkpoint_hash,
        }


def sampling_timesteps(num_steps: int, sched: DiffusionSchedule) -> list[int]:
    """Descending timesteps; evenly respaced when fewer than the schedule's."""
    if not 1 <= num_steps <= sched.num_steps:
        raise InvalidArgument(f"num_steps must lie in [1, {sched.num_steps}], got {num_steps}")
    if num_steps == sched.num_steps:
        return list(range(sched.num_steps - 1, -1, -1))
    grid = np.unique(np.round(np.linspace(0, sched.num_steps - 1, num_steps)).astype(int))
    return [int(t) for t in grid[::-1]]


def as_denoiser(model, num_frames: int):
    """Adapt a TryOnDenoiser (or compatible callable) to the guidance signature."""
    config = getattr(model, "config", None)
    if config is not None and hasattr(model, "temporal_enabled"):
        branch = "video" if model.temporal_enabled and num_frames > 1 else "image"

        def call(z, t, cond, nulls):
            return model(z, t, cond, nulls=nulls, branch=branch)

        return call
    return model


def posterior(z_t, x0, t: int, s: int, sched: DiffusionSchedule):
    """Mean and std of q(z_s | z_t, x0) for s < t."""
    a_t, s_t = float(sched.alphas[t]), float(sched.sigmas[t])
    a_s, s_s = float(sched.alphas[s]), float(sched.sigmas[s])
    a_ts = a_t / a_s
    var_ts = max(s_t**2 - a_ts**2 * s_s**2, 0.0)
    mean = (a_ts * s_s**2 / s_t**2) * z_t + (a_s * var_ts / s_t**2) * x0
    std = float(np.sqrt(var_ts * s_s**2 / s_t**2))
    return mean, std


@torch.no_grad()
def ddpm_sample(model, cond, shape, cfg: SamplerConfig, sched: DiffusionSchedule, callback=None):
    """Sample a (B, T, H, W, C) video in [-1, 1]; deterministic in ``cfg.seed``.

    ``callback(step_index, t, x0_hat)`` is invoked after every denoising step.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) != 5:
        raise InvalidArgument(f"shape must be (B, T, H, W, C), got {shape}")
    B, T = shape[:2]
    if cond.batch_size != B or cond.num_frames != T:
        raise InvalidArgument(
            f"conditioning is for B={cond.batch_size}, T={cond.num_frames}; requested shape {shape}"
        )
    config = getattr(model, "config", None)
    if config is not None and getattr(config, "prediction_target", cfg.prediction_target) != cfg.prediction_target:
        raise InvalidArgument(
            f"sampler expects {cfg.prediction_target!r} predictions, model emits {config.prediction_target!r}"
        )
    steps = sampling_timesteps(cfg.num_steps, sched)
    params = list(model.parameters()) if isinstance(model, torch.nn.Module) else []
    dtype = params[0].dtype if params else torch.float32
    cond = cond.to_torch(dtype=dtype) if not isinstance(cond.agnostic, torch.Tensor) else cond
    gen = torch.Generator().manual_seed(int(cfg.seed))
    z = torch.randn(shape, generator=gen, dtype=dtype)
    denoiser = as_denoiser(model, T)
    x0 = z
    for i, t in enumerate(steps):
        t_batch = torch.full((B,), t, dtype=torch.long)
        pred = split_cfg(denoiser, z, t_batch, cond, cfg.guidance, strict=cfg.strict_guidance)
        x0, _ = to_x0_eps(cfg.prediction_target, z, pred, t_batch, sched)
        if cfg.clip_intermediate:
            x0 = x0.clamp(-1.0, 1.0)
        if callback is not None:
            callback(i, t, x0)
        if i + 1 == len(steps):
            break
        mean, std = posterior(z, x0, t, steps[i + 1], sched)
        z = mean + std * torch.randn(shape, generator=gen, dtype=dtype)
    return x0.clamp(-1.0, 1.0)
