"""Discrete variance-preserving noise schedules and v/eps/x0 conversions.

Timesteps are integers 0..num_steps-1 with t=0 the least noisy level. The
marginal at step t is z_t = alpha_t * x0 + sigma_t * eps with
alpha_t**2 + sigma_t**2 = 1.

All conversions accept numpy arrays or torch tensors whose leading axis is
the batch. ``t`` is either a Python int (shared by the batch) or a 1-D
array/tensor of per-sample indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import torch

from .errors import InvalidArgument

# Index-space offset for the cosine schedule is COSINE_OFFSET * num_steps,
# which keeps sigma_0 near 0.0125 regardless of num_steps.
COSINE_OFFSET = 0.008
# Endpoint margin for the linear-in-alpha^2 schedule.
LINEAR_EDGE = 1e-3


class ScheduleKind(str, Enum):
    COSINE = "cosine"
    LINEAR = "linear"


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    num_steps: int
    alphas: np.ndarray
    sigmas: np.ndarray
    kind: ScheduleKind = ScheduleKind.COSINE
    _torch_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if len(self.alphas) != self.num_steps or len(self.sigmas) != self.num_steps:
            raise InvalidArgument("alphas/sigmas length must equal num_steps")

    def to_dict(self) -> dict:
        return {"num_steps": self.num_steps, "kind": self.kind.value}

    @classmethod
    def from_dict(cls, d: dict) -> "DiffusionSchedule":
        return make_schedule(d["num_steps"], d.get("kind", "cosine"))

    def alpha_sigma(self, t, like=None):
        """Coefficients for timestep(s) ``t`` shaped to broadcast against ``like``."""
        return _gather(self, self.alphas, t, like), _gather(self, self.sigmas, t, like)


def cosine_alpha(t: float, num_steps: int) -> float:
    """Closed form used by the cosine schedule."""
    off = COSINE_OFFSET * num_steps
    return math.cos(0.5 * math.pi * (t + off) / (num_steps + off))


def make_schedule(num_steps: int, kind: str | ScheduleKind = "cosine") -> DiffusionSchedule:
    if not isinstance(num_steps, (int, np.integer)) or num_steps < 2:
        raise InvalidArgument(f"num_steps must be an integer >= 2, got {num_steps!r}")
    try:
        kind = ScheduleKind(kind)
    except ValueError:
        raise InvalidArgument(f"unknown schedule kind {kind!r}") from None
    t = np.arange(num_steps, dtype=np.float64)
    if kind is ScheduleKind.COSINE:
        off = COSINE_OFFSET * num_steps
        alphas = np.cos(0.5 * np.pi * (t + off) / (num_steps + off))
    else:
        alpha_sq = np.linspace(1.0 - LINEAR_EDGE, LINEAR_EDGE, num_steps)
        alphas = np.sqrt(alpha_sq)
    alphas = np.clip(alphas, 0.0, 1.0)
    sigmas = np.sqrt(1.0 - alphas**2)
    return DiffusionSchedule(int(num_steps), alphas, sigmas, kind)


def _gather(sched: DiffusionSchedule, values: np.ndarray, t, like):
    if isinstance(like, torch.Tensor):
        key = (id(values), like.dtype, like.device)
        table = sched._torch_cache.get(key)
        if table is None:
            table = torch.as_tensor(values, dtype=like.dtype, device=like.device)
            sched._torch_cache[key] = table
        if isinstance(t, (int, np.integer)):
            _check_t(sched, int(t))
            return table[int(t)]
        t = torch.as_tensor(t, device=like.device).long()
        if t.numel() and (t.min() < 0 or t.max() >= sched.num_steps):
            raise InvalidArgument(f"timestep out of range [0, {sched.num_steps})")
        return table[t].reshape((-1,) + (1,) * (like.dim() - 1))
    if isinstance(t, (int, np.integer)):
        _check_t(sched, int(t))
        return values[int(t)]
    t = np.asarray(t, dtype=np.int64)
    if t.size and (t.min() < 0 or t.max() >= sched.num_steps):
        raise InvalidArgument(f"timestep out of range [0, {sched.num_steps})")
    ndim = np.ndim(like) if like is not None else 1
    return values[t].reshape((-1,) + (1,) * (ndim - 1))


def _check_t(sched: DiffusionSchedule, t: int):
    if not 0 <= t < sched.num_steps:
        raise InvalidArgument(f"timestep {t} out of range [0, {sched.num_steps})")


def _same_shape(a, b, what: str):
    if tuple(a.shape) != tuple(b.shape):
        raise InvalidArgument(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def add_noise(x0, t, noise, sched: DiffusionSchedule):
    """Forward process z_t = alpha_t * x0 + sigma_t * noise."""
    _same_shape(x0, noise, "add_noise")
    a, s = sched.alpha_sigma(t, x0)
    return a * x0 + s * noise


def v_from(x0, noise, t, sched: DiffusionSchedule):
    _same_shape(x0, noise, "v_from")
    a, s = sched.alpha_sigma(t, x0)
    return a * noise - s * x0


def x0_from_v(z_t, v, t, sched: DiffusionSchedule):
    _same_shape(z_t, v, "x0_from_v")
    a, s = sched.alpha_sigma(t, z_t)
    return a * z_t - s * v


def eps_from_v(z_t, v, t, sched: DiffusionSchedule):
    _same_shape(z_t, v, "eps_from_v")
    a, s = sched.alpha_sigma(t, z_t)
    return s * z_t + a * v


def x0_from_eps(z_t, eps, t, sched: DiffusionSchedule):
    _same_shape(z_t, eps, "x0_from_eps")
    a, s = sched.alpha_sigma(t, z_t)
    return (z_t - s * eps) / a


def target_for(prediction_target: str, x0, noise, t, sched: DiffusionSchedule):
    """Regression target for a denoiser emitting ``prediction_target``."""
    if prediction_target == "v":
        return v_from(x0, noise, t, sched)
    if prediction_target == "epsilon":
        return noise
    raise InvalidArgument(f"unknown prediction target {prediction_target!r}")


def to_x0_eps(prediction_target: str, z_t, pred, t, sched: DiffusionSchedule):
    """Map a model prediction to (x0_hat, eps_hat)."""
    if prediction_target == "v":
        return x0_from_v(z_t, pred, t, sched), eps_from_v(z_t, pred, t, sched)
    if prediction_target == "epsilon":
        return x0_from_eps(z_t, pred, t, sched), pred
    raise InvalidArgument(f"unknown prediction target {prediction_target!r}")
