import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from vton_lab.diffusion import (
    add_noise,
    cosine_alpha,
    eps_from_v,
    make_schedule,
    target_for,
    to_x0_eps,
    v_from,
    x0_from_eps,
    x0_from_v,
)
from vton_lab.errors import InvalidArgument


@pytest.mark.parametrize("kind", ["cosine", "linear"])
@pytest.mark.parametrize("n", [2, 10, 1000])
def test_schedule_invariants(kind, n):
    s = make_schedule(n, kind)
    assert len(s.alphas) == len(s.sigmas) == n
    np.testing.assert_allclose(s.alphas**2 + s.sigmas**2, 1.0, atol=1e-6)
    assert np.all(np.diff(s.alphas) <= 0)
    assert np.all(np.diff(s.sigmas) >= 0)
    assert np.all((s.alphas > 0) & (s.alphas <= 1))
    assert np.all((s.sigmas >= 0) & (s.sigmas < 1))


def test_cosine_endpoints_and_closed_form():
    s = make_schedule(1000, "cosine")
    assert s.alphas[0] > 0.999 and s.sigmas[0] < 0.02
    assert s.alphas[500] == pytest.approx(cosine_alpha(500, 1000), abs=1e-12)
    off = 0.008 * 1000
    assert s.alphas[500] == pytest.approx(math.cos(0.5 * math.pi * (500 + off) / (1000 + off)), abs=1e-12)


def test_linear_schedule_interpolates_alpha_squared():
    s = make_schedule(5, "linear")
    a2 = s.alphas**2
    np.testing.assert_allclose(np.diff(a2), np.diff(a2)[0], atol=1e-12)
    assert a2[0] == pytest.approx(1 - 1e-3) and a2[-1] == pytest.approx(1e-3)


@pytest.mark.parametrize("bad", [0, 1, -3])
def test_schedule_rejects_small_num_steps(bad):
    with pytest.raises(InvalidArgument):
        make_schedule(bad)


def test_schedule_rejects_unknown_kind():
    with pytest.raises(InvalidArgument):
        make_schedule(10, "sigmoid")


def test_schedule_round_trip():
    s = make_schedule(50, "linear")
    s2 = type(s).from_dict(s.to_dict())
    np.testing.assert_array_equal(s.alphas, s2.alphas)


class _FixedSchedule:
    """Schedule stand-in with chosen coefficients."""

    def __init__(self, alphas):
        base = make_schedule(len(alphas))
        self.s = type(base)(len(alphas), np.asarray(alphas, float), np.sqrt(1 - np.asarray(alphas, float) ** 2))


def test_add_noise_examples():
    s = _FixedSchedule([1.0, 0.8]).s
    x0 = np.random.default_rng(0).normal(size=(2, 1, 3, 3, 3))
    noise = np.random.default_rng(1).normal(size=x0.shape)
    np.testing.assert_array_equal(add_noise(x0, 0, noise, s), x0)
    np.testing.assert_allclose(add_noise(x0, 1, np.zeros_like(x0), s), 0.8 * x0)
    ones = np.ones((1, 1, 2, 2, 3))
    np.testing.assert_allclose(add_noise(ones, 1, ones, s), 1.4)


def test_shape_mismatch_raises():
    s = make_schedule(10)
    a, b = np.zeros((1, 1, 2, 2, 3)), np.zeros((1, 1, 2, 3, 3))
    with pytest.raises(InvalidArgument):
        add_noise(a, 3, b, s)
    with pytest.raises(InvalidArgument):
        v_from(a, b, 3, s)
    for fn in (x0_from_v, eps_from_v, x0_from_eps):
        with pytest.raises(InvalidArgument):
            fn(a, b, 3, s)


def test_timestep_out_of_range():
    s = make_schedule(10)
    x = np.zeros((2, 1, 2, 2, 3))
    with pytest.raises(InvalidArgument):
        add_noise(x, 10, x, s)
    with pytest.raises(InvalidArgument):
        add_noise(torch.zeros(2, 1, 2, 2, 3), torch.tensor([0, 10]), torch.zeros(2, 1, 2, 2, 3), s)


def test_v_of_zero_x0():
    s = make_schedule(100)
    n = np.random.default_rng(0).normal(size=(1, 2, 4, 4, 3))
    np.testing.assert_allclose(v_from(np.zeros_like(n), n, 40, s), s.alphas[40] * n)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), t=st.integers(0, 999), kind=st.sampled_from(["cosine", "linear"]))
def test_round_trips(seed, t, kind):
    s = make_schedule(1000, kind)
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-1, 1, size=(2, 2, 4, 3, 3))
    n = rng.normal(size=x0.shape)
    z = add_noise(x0, t, n, s)
    v = v_from(x0, n, t, s)
    np.testing.assert_allclose(x0_from_v(z, v, t, s), x0, atol=1e-6)
    np.testing.assert_allclose(eps_from_v(z, v, t, s), n, atol=1e-6)


def test_round_trip_torch_per_sample_t():
    s = make_schedule(1000)
    x0 = torch.rand(4, 2, 3, 3, 3, dtype=torch.float64) * 2 - 1
    n = torch.randn(x0.shape, dtype=torch.float64)
    t = torch.tensor([0, 10, 500, 999])
    z = add_noise(x0, t, n, s)
    v = v_from(x0, n, t, s)
    torch.testing.assert_close(x0_from_v(z, v, t, s), x0, atol=1e-10, rtol=1e-5)
    torch.testing.assert_close(eps_from_v(z, v, t, s), n, atol=1e-10, rtol=1e-5)
    for target in ("v", "epsilon"):
        pred = target_for(target, x0, n, t, s)
        x0_hat, eps_hat = to_x0_eps(target, z, pred, t, s)
        torch.testing.assert_close(eps_hat, n, atol=1e-8, rtol=1e-5)
        torch.testing.assert_close(x0_hat[:3], x0[:3], atol=1e-6, rtol=1e-5)


def test_add_noise_superposition():
    s = make_schedule(100)
    rng = np.random.default_rng(5)
    x1, x2, n1, n2 = (rng.normal(size=(1, 1, 3, 3, 3)) for _ in range(4))
    lhs = add_noise(2 * x1 + 3 * x2, 17, 2 * n1 + 3 * n2, s)
    rhs = 2 * add_noise(x1, 17, n1, s) + 3 * add_noise(x2, 17, n2, s)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_unknown_target():
    s = make_schedule(10)
    x = np.zeros((1, 1, 2, 2, 3))
    with pytest.raises(InvalidArgument):
        target_for("x0", x, x, 1, s)
    with pytest.raises(InvalidArgument):
        to_x0_eps("x0", x, x, 1, s)
