"""Conditional try-on denoiser with inflatable temporal blocks."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, replace
from typing import Mapping

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..data import INPUT_NAMES, NUM_JOINTS, TryOnConditioning, channel_spec
from ..errors import InvalidArgument, InvalidState
from .layers import (
    ConvEncoder,
    DiTBlock,
    ResBlock,
    TemporalBlock,
    TemporalResampler,
    TimestepEmbedding,
    groups_for,
)

PARAM_GROUPS = ("spatial", "temporal", "temporal_resampling", "conditioning_encoders", "pose_embedders", "dit")

# Top-level attribute -> parameter group.
_GROUP_OF = {
    "time_embed": "spatial",
    "in_conv": "spatial",
    "down": "spatial",
    "up": "spatial",
    "out_norm": "spatial",
    "out_conv": "spatial",
    "temporal": "temporal",
    "resampler": "temporal_resampling",
    "agnostic_encoder": "conditioning_encoders",
    "garment_encoder": "conditioning_encoders",
    "null_agnostic": "conditioning_encoders",
    "null_garment": "conditioning_encoders",
    "person_pose_embed": "pose_embedders",
    "garment_pose_embed": "pose_embedders",
    "null_person_pose": "pose_embedders",
    "null_garment_pose": "pose_embedders",
    "dit": "dit",
}


@dataclass(frozen=True)
class ModelConfig:
    base_channels: int = 32
    channel_multipliers: tuple[int, ...] = (1, 2, 2)
    num_dit_blocks: int = 8
    attention_heads: int = 4
    pose_channels: int = NUM_JOINTS
    pose_embed_dim: int = 8
    image_channels: int = 3
    temporal_enabled: bool = False
    temporal_resampling_enabled: bool = False
    frame_length: int = 1
    prediction_target: str = "epsilon"

    def __post_init__(self):
        object.__setattr__(self, "channel_multipliers", tuple(int(m) for m in self.channel_multipliers))
        if self.num_dit_blocks < 1:
            raise InvalidArgument("num_dit_blocks must be >= 1")
        if not self.channel_multipliers or min(self.channel_multipliers) < 1:
            raise InvalidArgument("channel_multipliers must be a non-empty list of positive ints")
        if self.base_channels < 1 or self.pose_embed_dim < 1:
            raise InvalidArgument("channel widths must be positive")
        if self.temporal_resampling_enabled and not self.temporal_enabled:
            raise InvalidArgument("temporal resampling requires temporal blocks")
        if self.prediction_target not in ("v", "epsilon"):
            raise InvalidArgument(f"prediction_target must be 'v' or 'epsilon', got {self.prediction_target!r}")
        if self.frame_length < 1:
            raise InvalidArgument("frame_length must be >= 1")
        for ch in self.channels:
            if ch % self.attention_heads:
                raise InvalidArgument(f"channel width {ch} not divisible by {self.attention_heads} heads")

    @property
    def channels(self) -> list[int]:
        return [self.base_channels * m for m in self.channel_multipliers]

    @property
    def temporal_levels(self) -> list[int]:
        L = len(self.channel_multipliers)
        return list(range(max(0, L - 2), L))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel_multipliers"] = list(self.channel_multipliers)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgument(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def _normalize_nulls(nulls, B: int, device) -> dict[str, torch.Tensor]:
    """Per-input boolean masks of shape (B,)."""
    out = {n: torch.zeros(B, dtype=torch.bool, device=device) for n in INPUT_NAMES}
    if nulls is None:
        return out
    if isinstance(nulls, Mapping):
        for name, flag in nulls.items():
            if name not in out:
                raise InvalidArgument(f"unknown conditioning input {name!r}")
            flag = torch.as_tensor(flag, dtype=torch.bool, device=device)
            out[name] = flag.expand(B).clone() if flag.dim() == 0 else flag.reshape(B)
        return out
    for name in nulls:
        if name not in out:
            raise InvalidArgument(f"unknown conditioning input {name!r}")
        out[name][:] = True
    return out


def _channels_first(x: torch.Tensor) -> torch.Tensor:
    """(B, T, H, W, C) -> (B*T, C, H, W)."""
    B, T, H, W, C = x.shape
    return x.permute(0, 1, 4, 2, 3).reshape(B * T, C, H, W)


class _Level(nn.Module):
    def __init__(self, block: ResBlock, resample: nn.Module | None):
        super().__init__()
        self.block = block
        self.resample = resample


class TryOnDenoiser(nn.Module):
    """UNet over frames with conditioning encoders and a DiT bottleneck.

    Call as ``model(z_t, t, cond, nulls=None, branch="video")`` with
    ``z_t`` of shape (B, T, H, W, 3) and ``t`` of shape (B,). The output
    has the same shape and is the configured prediction target.
    """

    def __init__(self, config: ModelConfig, temporal_init: str = "identity"):
        super().__init__()
        self.config = config
        chans = config.channels
        L = len(chans)
        base = config.base_channels
        emb_dim = 4 * base
        low = chans[-1]
        P = config.pose_embed_dim
        K = config.pose_channels
        cspec = channel_spec(config.image_channels, K)

        self.time_embed = TimestepEmbedding(base, emb_dim)
        self.in_conv = nn.Conv2d(config.image_channels, chans[0], 3, padding=1)
        self.down = nn.ModuleList()
        for l, ch in enumerate(chans):
            prev = chans[l - 1] if l else chans[0]
            resample = nn.Conv2d(ch, ch, 3, stride=2, padding=1) if l < L - 1 else None
            self.down.append(_Level(ResBlock(prev, ch, emb_dim, 2 * P), resample))
        self.up = nn.ModuleList()
        for l, ch in enumerate(chans):
            below = chans[l + 1] if l < L - 1 else low
            self.up.append(_Level(ResBlock(below + ch, ch, emb_dim, 2 * P), None))
        self.out_norm = nn.GroupNorm(groups_for(chans[0]), chans[0])
        self.out_conv = nn.Conv2d(chans[0], config.image_channels, 3, padding=1)

        self.agnostic_encoder = ConvEncoder(cspec["agnostic"], chans, low)
        self.garment_encoder = ConvEncoder(cspec["garment"], chans, low)
        self.null_agnostic = nn.Parameter(torch.randn(low) * 0.02)
        self.null_garment = nn.Parameter(torch.randn(low) * 0.02)

        self.person_pose_embed = nn.Conv2d(K, P, 1)
        self.garment_pose_embed = nn.Conv2d(K, P, 1)
        self.null_person_pose = nn.Parameter(torch.randn(P) * 0.02)
        self.null_garment_pose = nn.Parameter(torch.randn(P) * 0.02)

        self.dit = nn.ModuleList(
            DiTBlock(low, config.attention_heads, emb_dim) for _ in range(config.num_dit_blocks)
        )

        self.temporal = nn.ModuleDict()
        if config.temporal_enabled:
            for l in config.temporal_levels:
                self.temporal[f"down{l}"] = TemporalBlock(chans[l], config.attention_heads, temporal_init)
                self.temporal[f"up{l}"] = TemporalBlock(chans[l], config.attention_heads, temporal_init)
        self.resampler = TemporalResampler(low) if config.temporal_resampling_enabled else None

    # -- parameter groups -------------------------------------------------

    def group_of(self, param_name: str) -> str:
        return _GROUP_OF[param_name.split(".", 1)[0]]

    def parameter_groups(self) -> dict[str, dict[str, nn.Parameter]]:
        groups: dict[str, dict[str, nn.Parameter]] = {g: {} for g in PARAM_GROUPS}
        for name, p in self.named_parameters():
            groups[self.group_of(name)][name] = p
        return groups

    @property
    def temporal_enabled(self) -> bool:
        return self.config.temporal_enabled

    # -- forward ----------------------------------------------------------

    def _check_inputs(self, z_t, t, cond: TryOnConditioning, branch: str):
        if z_t.dim() != 5:
            raise InvalidArgument(f"z_t must be (B, T, H, W, C), got shape {tuple(z_t.shape)}")
        B, T, H, W, C = z_t.shape
        if C != self.config.image_channels:
            raise InvalidArgument(f"z_t has {C} channels, model expects {self.config.image_channels}")
        if t.shape != (B,):
            raise InvalidArgument(f"t must have shape ({B},), got {tuple(t.shape)}")
        expected = channel_spec(self.config.image_channels, self.config.pose_channels)
        frames = {"agnostic": T, "person_pose": T, "garment": 1, "garment_pose": 1}
        for name in INPUT_NAMES:
            a = getattr(cond, name)
            want = (B, frames[name], H, W, expected[name])
            if tuple(a.shape) != want:
                raise InvalidArgument(f"conditioning {name!r} has shape {tuple(a.shape)}, expected {want}")
        if branch not in ("image", "video"):
            raise InvalidArgument(f"branch must be 'image' or 'video', got {branch!r}")
        if branch == "video":
            if not self.config.temporal_enabled:
                raise InvalidState("video branch requested on a model without temporal blocks")
            if self.resampler is not None and T % 2:
                raise InvalidArgument(f"temporal resampling needs an even frame count, got T={T}")

    def forward(self, z_t, t, cond: TryOnConditioning, nulls=None, branch: str = "video"):
        t = torch.as_tensor(t, device=z_t.device)
        if t.dim() == 0:
            t = t.expand(z_t.shape[0])
        self._check_inputs(z_t, t, cond, branch)
        B, T, H, W, C = z_t.shape
        video = branch == "video"
        N = B * T
        dtype = z_t.dtype
        masks = _normalize_nulls(nulls, B, z_t.device)
        frame_masks = {k: v.repeat_interleave(T) for k, v in masks.items()}

        emb = self.time_embed(t.repeat_interleave(T))

        agn = self.agnostic_encoder(_channels_first(cond.agnostic.to(dtype)))
        agn = torch.where(frame_masks["agnostic"][:, None, None, None], self.null_agnostic[None, :, None, None], agn)
        gar = self.garment_encoder(_channels_first(cond.garment.to(dtype)))
        gar = gar.flatten(2).transpose(1, 2)
        gar = torch.where(masks["garment"][:, None, None], self.null_garment[None, None, :], gar)
        gar = gar.repeat_interleave(T, dim=0)

        person_pose = _channels_first(cond.person_pose.to(dtype))
        garment_pose = _channels_first(cond.garment_pose.to(dtype))
        pose_cache: dict[tuple[int, int], torch.Tensor] = {}

        def pose_features(size):
            if size not in pose_cache:
                pp = self.person_pose_embed(F.adaptive_avg_pool2d(person_pose, size))
                pp = torch.where(frame_masks["person_pose"][:, None, None, None], self.null_person_pose[None, :, None, None], pp)
                gp = self.garment_pose_embed(F.adaptive_avg_pool2d(garment_pose, size))
                gp = torch.where(masks["garment_pose"][:, None, None, None], self.null_garment_pose[None, :, None, None], gp)
                pose_cache[size] = torch.cat([pp, gp.repeat_interleave(T, dim=0)], dim=1)
            return pose_cache[size]

        h = self.in_conv(_channels_first(z_t))
        skips = []
        temporal_levels = set(self.config.temporal_levels) if video else set()
        for l, level in enumerate(self.down):
            h = level.block(h, emb, pose_features(tuple(h.shape[-2:])))
            if l in temporal_levels:
                h = self.temporal[f"down{l}"](h, B, T)
            skips.append(h)
            if level.resample is not None:
                h = level.resample(h)

        if video and self.resampler is not None:
            h = self.resampler(h, B, T, self._dit_stage, emb, agn, gar)
        else:
            h = self._dit_stage(h, emb, agn, gar)

        for l in reversed(range(len(self.up))):
            h = torch.cat([h, skips[l]], dim=1)
            h = self.up[l].block(h, emb, pose_features(tuple(h.shape[-2:])))
            if l in temporal_levels:
                h = self.temporal[f"up{l}"](h, B, T)
            if l > 0:
                h = F.interpolate(h, size=skips[l - 1].shape[-2:], mode="nearest")

        out = self.out_conv(F.silu(self.out_norm(h)))
        return out.reshape(B, T, C, H, W).permute(0, 1, 3, 4, 2)

    def _dit_stage(self, h, emb, agn, gar):
        N, C, hh, ww = h.shape
        x = h.flatten(2).transpose(1, 2)
        a = agn.flatten(2).transpose(1, 2)
        for block in self.dit:
            x = block(x, emb, a, gar)
        return x.transpose(1, 2).reshape(N, C, hh, ww)


def _seeded_build(config: ModelConfig, seed: int, temporal_init: str = "identity") -> TryOnDenoiser:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return TryOnDenoiser(config, temporal_init)


def build_model(config: ModelConfig, conditioning_spec: Mapping[str, int] | None = None, seed: int = 0) -> TryOnDenoiser:
    """Construct a denoiser; identical (config, seed) give identical weights."""
    expected = channel_spec(config.image_channels, config.pose_channels)
    if conditioning_spec is not None and dict(conditioning_spec) != expected:
        raise InvalidArgument(f"conditioning channels {dict(conditioning_spec)} do not match model {expected}")
    return _seeded_build(config, seed)


def _copy_into(dst: TryOnDenoiser, src: TryOnDenoiser) -> None:
    src_state = src.state_dict()
    missing = [k for k in dst.state_dict() if k not in src_state]
    with torch.no_grad():
        for name, p in dst.state_dict().items():
            if name in src_state:
                p.copy_(src_state[name])
    for name in missing:
        if dst.group_of(name) not in ("temporal", "temporal_resampling"):
            raise InvalidState(f"parameter {name} missing from source model")


def inflate_temporal(image_model: TryOnDenoiser, init: str = "identity", seed: int = 0) -> TryOnDenoiser:
    """Add temporal blocks to an image model, copying every existing weight.

    ``identity`` zero-initializes the residual output layers of each temporal
    block, so the inflated model reproduces the image model frame by frame.
    ``random`` keeps PyTorch's default initializers (Kaiming-uniform convs
    and projections) and a mixing logit of 0, i.e. alpha = 0.5.
    """
    if image_model.config.temporal_enabled:
        raise InvalidState("model already has temporal blocks")
    config = replace(image_model.config, temporal_enabled=True)
    model = _seeded_build(config, seed, temporal_init=init)
    _copy_into(model, image_model)
    return model.to(next(image_model.parameters()).dtype)


def inject_temporal_resampling(model: TryOnDenoiser, seed: int = 0) -> TryOnDenoiser:
    if not model.config.temporal_enabled:
        raise InvalidState("temporal resampling requires a temporal model")
    if model.config.temporal_resampling_enabled:
        raise InvalidState("temporal resampling already present")
    config = replace(model.config, temporal_resampling_enabled=True)
    new = _seeded_build(config, seed)
    _copy_into(new, model)
    return new.to(next(model.parameters()).dtype)


def with_frame_length(model: TryOnDenoiser, T: int) -> TryOnDenoiser:
    """Record a new training frame length on the model's config."""
    model.config = replace(model.config, frame_length=T)
    return model


def clone_model(model: TryOnDenoiser) -> TryOnDenoiser:
    return copy.deepcopy(model)
