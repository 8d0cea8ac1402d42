"""Turning an image denoiser into a video denoiser without changing its output.

1. Build an image model and perturb its weights so it is not trivially
   at initialization.
2. Inflate it with temporal blocks; per-frame outputs stay the same.
3. Show that an image batch leaves every temporal parameter untouched
   while a video batch trains them.

Run:  python demos/03_temporal_inflation.py
"""

import torch

from vton_lab.data import generate_dataset
from vton_lab.diffusion import make_schedule
from vton_lab.model import ModelConfig, build_model, inflate_temporal
from vton_lab.model.denoiser import with_frame_length
from vton_lab.training import JointStream, OptimizerSpec, TrainState, batch_tensors, make_optimizer, train_step

torch.manual_seed(0)
config = ModelConfig(base_channels=8, channel_multipliers=(1, 2), num_dit_blocks=1, attention_heads=2, pose_embed_dim=4)
image_model = build_model(config, seed=0)
with torch.no_grad():
    for p in image_model.parameters():
        p.add_(0.1 * torch.randn_like(p))

groups = {g: sum(p.numel() for p in ps.values()) for g, ps in image_model.parameter_groups().items()}
print("image model parameters per group:", groups)

video_model = with_frame_length(inflate_temporal(image_model, "identity"), 8)
added = sum(p.numel() for p in video_model.parameter_groups()["temporal"].values())
print(f"inflation added {added} temporal parameters")

scenes = generate_dataset(4, 0, 8, 16, 16)
clip = next(JointStream(scenes, scenes, 0.0, seed=0, frame_length=8, batch_size=2))
x0, cond = batch_tensors(clip)
t = torch.tensor([100, 800])
with torch.no_grad():
    per_frame = image_model(x0, t, cond, branch="image")
    inflated = video_model(x0, t, cond, branch="video")
print(f"max |video - per-frame image| = {float((inflated - per_frame).abs().max()):.2e}")

# Joint training: image batches take the image branch and skip the temporal blocks.
# The first video step only moves the zero-initialized output layers of each
# temporal block; the rest receive gradient once those are non-zero.
sched = make_schedule(1000)
spec = OptimizerSpec(warmup_steps=0, decay_steps=100)
state = TrainState(make_optimizer(video_model, spec), spec, sched)
stream = JointStream(scenes, scenes, 0.5, seed=1, frame_length=8, image_batch_size=4)
gen = torch.Generator().manual_seed(0)
temporal = video_model.parameter_groups()["temporal"]
for step in range(6):
    batch = next(stream)
    before = {k: p.detach().clone() for k, p in temporal.items()}
    _, loss = train_step(video_model, batch, state, 0.1, gen)
    moved = sum(not torch.equal(before[k], p) for k, p in temporal.items())
    kind = "image" if batch.is_image else "video"
    print(f"step {step}: {kind} batch {batch.x0.shape}, loss {loss:.3f}, temporal tensors updated: {moved}/{len(temporal)}")
