"""Tiny unconditional denoisers over 2-pixel images, for sampler checks."""

import math

import numpy as np
import torch
from torch import nn

from vton_lab.diffusion import add_noise

# Two independent Gaussian pixels.
PIXEL_MEAN = np.array([0.4, -0.3])
PIXEL_STD = np.array([0.15, 0.3])


class StubCond:
    """Minimal conditioning object: only the batch/time sizes are read."""

    def __init__(self, batch_size, num_frames=1):
        self.batch_size = batch_size
        self.num_frames = num_frames
        self.agnostic = torch.zeros(batch_size, num_frames)


class TwoPixelDenoiser(nn.Module):
    def __init__(self, hidden=64):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(2 + 8, hidden), nn.SiLU(), nn.Linear(hidden, hidden), nn.SiLU(), nn.Linear(hidden, 2))

    def features(self, t, num_steps):
        x = t.double()[:, None] / num_steps
        freqs = torch.arange(4, dtype=torch.float64) + 1
        return torch.cat([torch.sin(math.pi * freqs * x), torch.cos(math.pi * freqs * x)], dim=1).float()

    def forward(self, z, t, num_steps):
        B = z.shape[0]
        h = torch.cat([z.reshape(B, 2), self.features(t, num_steps)], dim=1)
        return self.net(h).reshape(z.shape)


def sample_data(n, rng):
    return (PIXEL_MEAN + PIXEL_STD * rng.standard_normal((n, 2))).astype(np.float32)


def train_two_pixel(sched, steps=4000, seed=0, batch=512):
    torch.manual_seed(seed)
    model = TwoPixelDenoiser()
    opt = torch.optim.Adam(model.parameters(), lr=3e-3)
    decay = torch.optim.lr_scheduler.CosineAnnealingLR(opt, steps)
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    for _ in range(steps):
        x0 = torch.from_numpy(sample_data(batch, rng)).reshape(batch, 1, 1, 2, 1)
        t = torch.randint(0, sched.num_steps, (batch,), generator=gen)
        eps = torch.randn(x0.shape, generator=gen)
        z = add_noise(x0, t, eps, sched)
        loss = torch.mean((model(z, t, sched.num_steps) - eps) ** 2)
        opt.zero_grad()
        loss.backward()
        opt.step()
        decay.step()
    model.eval()

    def denoiser(z, t, cond, nulls):
        return model(z, t, sched.num_steps)

    return denoiser


def constant_oracle(c, sched):
    """Epsilon predictor whose implied x0 is always ``c``."""

    def denoiser(z, t, cond, nulls):
        a, s = sched.alpha_sigma(t, z)
        return (z - a * c) / s

    return denoiser

