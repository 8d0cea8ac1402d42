"""Desk-scale video virtual try-on with temporally inflated diffusion models.

Modules:
    diffusion   noise schedules and parameterization identities
    data        synthetic articulated-figure scenes and conditioning inputs
    model       the conditional denoiser, temporal inflation, checkpoints
    guidance    split classifier-free guidance
    sampler     DDPM ancestral sampling
    training    progressive, joint image/video training
    evaluation  Fréchet metrics, garment similarity, ablation tables
    config/cli  run configuration and command-line entry points
"""

from .diffusion import DiffusionSchedule, ScheduleKind, make_schedule
from .errors import InvalidArgument, InvalidState, NumericalFailure, TrainingDivergence, UndefinedScore
from .guidance import CUSTOM_WEIGHTS, UBC_WEIGHTS, GuidanceSchedule, make_tryon_schedule, split_cfg
from .sampler import SamplerConfig, ddpm_sample

__version__ = "0.1.0"

__all__ = [
    "CUSTOM_WEIGHTS",
    "DiffusionSchedule",
    "GuidanceSchedule",
    "InvalidArgument",
    "InvalidState",
    "NumericalFailure",
    "SamplerConfig",
    "ScheduleKind",
    "TrainingDivergence",
    "UBC_WEIGHTS",
    "UndefinedScore",
    "ddpm_sample",
    "make_schedule",
    "make_tryon_schedule",
    "split_cfg",
]
