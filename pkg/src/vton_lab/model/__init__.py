from .checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from .denoiser import (
    PARAM_GROUPS,
    ModelConfig,
    TryOnDenoiser,
    build_model,
    clone_model,
    inflate_temporal,
    inject_temporal_resampling,
)
from .layers import MixingGate, temporal_mix

__all__ = [
    "PARAM_GROUPS",
    "MixingGate",
    "ModelConfig",
    "TryOnDenoiser",
    "build_model",
    "checkpoint_hash",
    "clone_model",
    "inflate_temporal",
    "inject_temporal_resampling",
    "load_checkpoint",
    "save_checkpoint",
    "temporal_mix",
]
