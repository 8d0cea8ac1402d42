import numpy as np
import pytest
import torch

from vton_lab.data import NUM_JOINTS, TryOnConditioning, generate_dataset
from vton_lab.diffusion import make_schedule
from vton_lab.model.denoiser import ModelConfig

torch.set_num_threads(1)

TINY = ModelConfig(base_channels=8, channel_multipliers=(1, 2), num_dit_blocks=1, attention_heads=2, pose_embed_dim=4)
# Under 10k parameters without temporal blocks.
MICRO = ModelConfig(base_channels=4, channel_multipliers=(1, 2), num_dit_blocks=1, attention_heads=2, pose_embed_dim=2)
H, W = 16, 12


def randomize(model, seed=0, scale=0.1):
    """Perturb every parameter so zero-initialized residual paths become active."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(scale * torch.randn(p.shape, generator=gen, dtype=p.dtype))
    return model


def random_cond(B, T, h=H, w=W, seed=0, dtype=torch.float32):
    rng = np.random.default_rng(seed)

    def r(*shape):
        return torch.as_tensor(rng.uniform(-1, 1, shape), dtype=dtype)

    return TryOnConditioning(
        agnostic=r(B, T, h, w, 4),
        garment=r(B, 1, h, w, 4),
        person_pose=r(B, T, h, w, NUM_JOINTS).abs(),
        garment_pose=r(B, 1, h, w, NUM_JOINTS).abs(),
    )


def random_video(B, T, h=H, w=W, seed=0, dtype=torch.float32):
    gen = torch.Generator().manual_seed(seed)
    return torch.randn((B, T, h, w, 3), generator=gen, dtype=dtype)


@pytest.fixture(scope="session")
def scenes16():
    """Eight 16-frame scenes at 32x24."""
    return generate_dataset(8, 123, 16, 32, 24)


@pytest.fixture(scope="session")
def sched1000():
    return make_schedule(1000, "cosine")


# Acceptance criteria outcomes, filled by test_acceptance and printed at the end of the run.
ACCEPTANCE: dict[int, tuple[str, str, str]] = {}
NUM_CRITERIA = 11


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, NUM_CRITERIA + 1):
        name, status, detail = ACCEPTANCE.get(k, ("", "NOT RUN", ""))
        terminalreporter.write_line(f"criterion {k:2d}: {status:7s} {name}  {detail}".rstrip())
