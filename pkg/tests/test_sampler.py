import numpy as np
import pytest
import torch

from conftest import TINY, random_cond, randomize
from toy import PIXEL_MEAN, PIXEL_STD, StubCond, constant_oracle, train_two_pixel
from vton_lab.diffusion import make_schedule
from vton_lab.errors import InvalidArgument
from vton_lab.guidance import make_tryon_schedule
from vton_lab.model import build_model, inflate_temporal
from vton_lab.sampler import (
    DEFAULT_SAMPLING_STEPS,
    SamplerConfig,
    ddpm_sample,
    posterior,
    sampling_timesteps,
)


@pytest.fixture(scope="module")
def toy_sched():
    return make_schedule(1000, "cosine")


@pytest.fixture(scope="module")
def two_pixel(toy_sched):
    return train_two_pixel(toy_sched)


def test_defaults_and_metadata():
    cfg = SamplerConfig()
    assert cfg.num_steps == DEFAULT_SAMPLING_STEPS == 1000
    meta = cfg.metadata("abc")
    assert meta["steps"] == 1000 and meta["cfg_weights"] == [1, 1, 1, 1] and meta["checkpoint_hash"] == "abc"
    assert SamplerConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_timesteps(toy_sched):
    full = sampling_timesteps(1000, toy_sched)
    assert full[0] == 999 and full[-1] == 0 and len(full) == 1000
    short = sampling_timesteps(10, toy_sched)
    assert short[0] == 999 and short[-1] == 0 and len(short) == 10
    assert all(a > b for a, b in zip(short, short[1:]))
    for bad in (0, 1001):
        with pytest.raises(InvalidArgument):
            sampling_timesteps(bad, toy_sched)


def test_posterior_matches_consecutive_ddpm(toy_sched):
    z, x0 = torch.tensor([0.3]), torch.tensor([-0.2])
    t = 500
    mean, std = posterior(z, x0, t, t - 1, toy_sched)
    a2 = toy_sched.alphas**2
    beta = 1 - a2[t] / a2[t - 1]
    ref_mean = np.sqrt(a2[t - 1]) * beta / (1 - a2[t]) * x0 + np.sqrt(1 - beta) * (1 - a2[t - 1]) / (1 - a2[t]) * z
    assert float(mean) == pytest.approx(float(ref_mean), rel=1e-9)
    assert std**2 == pytest.approx(beta * (1 - a2[t - 1]) / (1 - a2[t]), rel=1e-9)


def test_constant_oracle_converges(toy_sched):
    c = torch.linspace(-0.8, 0.8, 2 * 3 * 4 * 3).reshape(1, 2, 3, 4, 3)
    out = ddpm_sample(constant_oracle(c, toy_sched), StubCond(1, 2), c.shape, SamplerConfig(seed=4), toy_sched)
    assert float((out - c).abs().mean()) <= 1e-2


def test_seed_determinism_and_range():
    model = randomize(inflate_temporal(build_model(TINY, seed=0)), seed=1)
    cond = random_cond(1, 2, seed=0)
    sched = make_schedule(100)
    cfg = SamplerConfig(num_steps=5, seed=9)
    a = ddpm_sample(model, cond, (1, 2, 16, 12, 3), cfg, sched)
    b = ddpm_sample(model, cond, (1, 2, 16, 12, 3), cfg, sched)
    assert torch.equal(a, b)
    assert a.min() >= -1 and a.max() <= 1
    c = ddpm_sample(model, cond, (1, 2, 16, 12, 3), SamplerConfig(num_steps=5, seed=10), sched)
    assert not torch.equal(a, c)


def test_one_forward_per_step_and_term():
    model = build_model(TINY, seed=0)
    calls = []
    model.register_forward_hook(lambda m, i, o: calls.append(i[0].shape))
    sched = make_schedule(100)
    ddpm_sample(model, random_cond(1, 3), (1, 3, 16, 12, 3), SamplerConfig(num_steps=4), sched)
    assert len(calls) == 4 * 4
    assert all(s[1] == 3 for s in calls)


def test_shape_validation():
    model = build_model(TINY, seed=0)
    sched = make_schedule(100)
    cfg = SamplerConfig(num_steps=2)
    with pytest.raises(InvalidArgument):
        ddpm_sample(model, random_cond(1, 3), (1, 2, 16, 12, 3), cfg, sched)
    with pytest.raises(InvalidArgument):
        ddpm_sample(model, random_cond(1, 3), (1, 3, 16, 12), cfg, sched)
    with pytest.raises(InvalidArgument):
        ddpm_sample(model, random_cond(1, 3), (1, 3, 16, 12, 3), SamplerConfig(num_steps=2, prediction_target="v"), sched)


def test_two_pixel_distribution(two_pixel, toy_sched):
    cfg = SamplerConfig(num_steps=1000, seed=0, guidance=make_tryon_schedule(1, 0, 0, 0))
    n = 500
    with torch.no_grad():
        x = ddpm_sample(two_pixel, StubCond(n), (n, 1, 1, 2, 1), cfg, toy_sched).reshape(n, 2).double().numpy()
    mean, var = x.mean(0), x.var(0, ddof=1)
    se_mean = PIXEL_STD / np.sqrt(n)
    se_var = PIXEL_STD**2 * np.sqrt(2 / (n - 1))
    assert np.all(np.abs(mean - PIXEL_MEAN) <= 3 * se_mean), (mean, PIXEL_MEAN)
    assert np.all(np.abs(var - PIXEL_STD**2) <= 3 * se_var), (var, PIXEL_STD**2)


def test_monotone_refinement(two_pixel, toy_sched):
    estimates = []
    cfg = SamplerConfig(num_steps=1000, seed=1, guidance=make_tryon_schedule(1, 0, 0, 0))
    ddpm_sample(two_pixel, StubCond(64), (64, 1, 1, 2, 1), cfg, toy_sched, callback=lambda i, t, x0: estimates.append(x0.clone()))
    tail = estimates[-100:]
    diffs = [float((b - a).abs().mean()) for a, b in zip(tail, tail[1:])]
    slope = np.polyfit(np.arange(len(diffs)), diffs, 1)[0]
    assert slope <= 0
