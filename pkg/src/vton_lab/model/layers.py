"""Building blocks of the try-on denoiser.

Spatial layers work on per-frame tensors of shape (N, C, H, W) with
N = B * T. Temporal layers receive the same tensor plus (B, T) and fold the
time axis back out internally.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import InvalidArgument

IDENTITY_GATE_LOGIT = 2.0


def groups_for(ch: int) -> int:
    return math.gcd(ch, 8)


def timestep_features(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64, device=t.device) / half)
    args = t.to(torch.float64)[:, None] * freqs[None]
    feats = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        feats = F.pad(feats, (0, 1))
    return feats


class TimestepEmbedding(nn.Module):
    def __init__(self, freq_dim: int, dim: int):
        super().__init__()
        self.freq_dim = freq_dim
        self.mlp = nn.Sequential(nn.Linear(freq_dim, dim), nn.SiLU(), nn.Linear(dim, dim))

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        dtype = self.mlp[0].weight.dtype
        return self.mlp(timestep_features(t, self.freq_dim).to(dtype))


class ResBlock(nn.Module):
    """Residual 2-D conv block; ``extra`` (pose features) joins the first conv."""

    def __init__(self, in_ch: int, out_ch: int, emb_dim: int, extra_ch: int = 0):
        super().__init__()
        self.norm1 = nn.GroupNorm(groups_for(in_ch), in_ch)
        self.conv1 = nn.Conv2d(in_ch + extra_ch, out_ch, 3, padding=1)
        self.emb = nn.Linear(emb_dim, out_ch)
        self.norm2 = nn.GroupNorm(groups_for(out_ch), out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, emb, extra=None):
        h = F.silu(self.norm1(x))
        if extra is not None:
            h = torch.cat([h, extra], dim=1)
        h = self.conv1(h) + self.emb(emb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class ConvEncoder(nn.Module):
    """Fully convolutional encoder down to the lowest UNet resolution."""

    def __init__(self, in_ch: int, channels: list[int], out_ch: int):
        super().__init__()
        layers = [nn.Conv2d(in_ch, channels[0], 3, padding=1)]
        for prev, nxt in zip(channels[:-1], channels[1:]):
            layers += [nn.GroupNorm(groups_for(prev), prev), nn.SiLU(), nn.Conv2d(prev, nxt, 3, stride=2, padding=1)]
        layers += [nn.GroupNorm(groups_for(channels[-1]), channels[-1]), nn.SiLU(), nn.Conv2d(channels[-1], out_ch, 1)]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class MixingGate(nn.Module):
    """Learned scalar stored as a logit; alpha = sigmoid(logit) lies in [0, 1]."""

    def __init__(self, logit: float = 0.0):
        super().__init__()
        self.logit = nn.Parameter(torch.tensor(float(logit)))

    @property
    def alpha(self) -> torch.Tensor:
        return torch.sigmoid(self.logit)

    @classmethod
    def from_alpha(cls, alpha: float) -> "MixingGate":
        if not 0.0 <= alpha <= 1.0:
            raise InvalidArgument(f"alpha must lie in [0, 1], got {alpha}")
        return cls(float(torch.logit(torch.tensor(float(alpha), dtype=torch.float64))))


def temporal_mix(z_spatial: torch.Tensor, z_temporal: torch.Tensor, gate: MixingGate | float) -> torch.Tensor:
    """alpha * z_spatial + (1 - alpha) * z_temporal."""
    if z_spatial.shape != z_temporal.shape:
        raise InvalidArgument(f"temporal_mix shape mismatch {tuple(z_spatial.shape)} vs {tuple(z_temporal.shape)}")
    alpha = gate.alpha if isinstance(gate, MixingGate) else gate
    if isinstance(alpha, torch.Tensor):
        alpha = alpha.to(z_spatial.dtype)
    return alpha * z_spatial + (1 - alpha) * z_temporal


class TemporalBlock(nn.Module):
    """3-D conv, attention over T at each pixel, then mixing with the input.

    The temporal attention carries no positional encoding; frame order
    enters through the 3-D convolution.
    """

    def __init__(self, ch: int, heads: int, init: str = "identity"):
        super().__init__()
        self.norm3d = nn.GroupNorm(groups_for(ch), ch)
        self.conv3d = nn.Conv3d(ch, ch, 3, padding=1)
        self.norm_attn = nn.LayerNorm(ch)
        self.attn = nn.MultiheadAttention(ch, heads, batch_first=True)
        self.gate = MixingGate()
        if init == "identity":
            nn.init.zeros_(self.conv3d.weight)
            nn.init.zeros_(self.conv3d.bias)
            nn.init.zeros_(self.attn.out_proj.weight)
            nn.init.zeros_(self.attn.out_proj.bias)
            with torch.no_grad():
                self.gate.logit.fill_(IDENTITY_GATE_LOGIT)
        elif init != "random":
            raise InvalidArgument(f"unknown temporal init {init!r}")

    def forward(self, h: torch.Tensor, B: int, T: int) -> torch.Tensor:
        N, C, H, W = h.shape
        x = h.reshape(B, T, C, H, W).permute(0, 2, 1, 3, 4)
        x = x + self.conv3d(F.silu(self.norm3d(x)))
        seq = x.permute(0, 3, 4, 2, 1).reshape(B * H * W, T, C)
        y = self.norm_attn(seq)
        y, _ = self.attn(y, y, y, need_weights=False)
        seq = seq + y
        z_t = seq.reshape(B, H, W, T, C).permute(0, 3, 4, 1, 2).reshape(N, C, H, W)
        return temporal_mix(h, z_t, self.gate)


def _modulate(x, shift, scale):
    return x * (1 + scale[:, None]) + shift[:, None]


class DiTBlock(nn.Module):
    """adaLN-Zero transformer block over lowest-resolution tokens.

    Sub-layers, each with its own shift/scale/gate from the timestep
    embedding: agnostic fusion (channel concat + linear), self-attention,
    cross-attention to garment tokens, MLP. Zero-initialized modulation
    makes a fresh block the identity map.
    """

    def __init__(self, dim: int, heads: int, emb_dim: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norms = nn.ModuleList([nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6) for _ in range(4)])
        self.fuse = nn.Linear(2 * dim, dim)
        self.self_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.cross_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(approximate="tanh"), nn.Linear(hidden, dim))
        self.ada = nn.Sequential(nn.SiLU(), nn.Linear(emb_dim, 12 * dim))
        nn.init.zeros_(self.ada[1].weight)
        nn.init.zeros_(self.ada[1].bias)

    def forward(self, x, emb, agnostic, garment):
        mods = self.ada(emb).chunk(12, dim=-1)
        sh, sc, g = mods[0:3]
        h = _modulate(self.norms[0](x), sh, sc)
        x = x + g[:, None] * self.fuse(torch.cat([h, agnostic], dim=-1))
        sh, sc, g = mods[3:6]
        h = _modulate(self.norms[1](x), sh, sc)
        x = x + g[:, None] * self.self_attn(h, h, h, need_weights=False)[0]
        sh, sc, g = mods[6:9]
        h = _modulate(self.norms[2](x), sh, sc)
        x = x + g[:, None] * self.cross_attn(h, garment, garment, need_weights=False)[0]
        sh, sc, g = mods[9:12]
        h = _modulate(self.norms[3](x), sh, sc)
        return x + g[:, None] * self.mlp(h)


def _pair_mean(x: torch.Tensor, B: int, T: int) -> torch.Tensor:
    rest = x.shape[1:]
    return x.reshape(B, T // 2, 2, *rest).mean(dim=2).reshape(B * (T // 2), *rest)


def _repeat_frames(x: torch.Tensor, B: int, T: int) -> torch.Tensor:
    rest = x.shape[1:]
    return x.reshape(B, T // 2, 1, *rest).expand(B, T // 2, 2, *rest).reshape(B * T, *rest)


class TemporalResampler(nn.Module):
    """Factor-2 temporal down/up sampling around the lowest-resolution stage.

    Down: pairwise frame mean plus a learned correction of the pair
    difference. Up: nearest repeat plus a learned signed offset per pair
    member. The pair detail lost by the mean bypasses the stage, so with
    zero-initialized corrections an identity stage reproduces its input.
    """

    def __init__(self, ch: int):
        super().__init__()
        self.down_proj = nn.Conv2d(ch, ch, 1)
        self.up_proj = nn.Conv2d(ch, ch, 1)
        for conv in (self.down_proj, self.up_proj):
            nn.init.zeros_(conv.weight)
            nn.init.zeros_(conv.bias)

    def down(self, h: torch.Tensor, B: int, T: int) -> torch.Tensor:
        N, C, H, W = h.shape
        pairs = h.reshape(B, T // 2, 2, C, H, W)
        diff = (pairs[:, :, 1] - pairs[:, :, 0]).reshape(-1, C, H, W)
        return _pair_mean(h, B, T) + self.down_proj(diff)

    def up(self, y: torch.Tensor, B: int, T: int) -> torch.Tensor:
        off = self.up_proj(y)
        sign = torch.tensor([-1.0, 1.0], dtype=y.dtype, device=y.device).reshape(1, 1, 2, 1, 1, 1)
        N2, C, H, W = y.shape
        out = y.reshape(B, T // 2, 1, C, H, W) + sign * off.reshape(B, T // 2, 1, C, H, W)
        return out.reshape(B * T, C, H, W)

    def forward(self, h, B: int, T: int, stage, emb, agnostic, garment):
        """Run ``stage(h, emb, agnostic, garment)`` at half the frame rate."""
        detail = h - _repeat_frames(_pair_mean(h, B, T), B, T)
        y = stage(
            self.down(h, B, T),
            emb.reshape(B, T, -1)[:, ::2].reshape(B * (T // 2), -1),
            _pair_mean(agnostic, B, T),
            garment.reshape(B, T, *garment.shape[1:])[:, ::2].reshape(B * (T // 2), *garment.shape[1:]),
        )
        return self.up(y, B, T) + detail
