"""A minute-scale run of the whole pipeline through the library API.

Trains a small model on T=1 then T=8, samples an 8-frame try-on with
split guidance, and scores it next to the image-only checkpoint. The
numbers are only meaningful relative to each other; the command-line
tool runs the same steps at a larger budget.

Run:  python demos/04_tiny_pipeline.py [out_dir]
"""

import sys
import time
from pathlib import Path

import numpy as np

from vton_lab.data import build_conditioning, generate_dataset, pair_for_eval
from vton_lab.diffusion import make_schedule
from vton_lab.evaluation import EvalConfig, run_ablation_suite
from vton_lab.model import ModelConfig, load_checkpoint
from vton_lab.sampler import SamplerConfig, ddpm_sample
from vton_lab.training import TrainingRun, loss_reduction, make_plan, read_metrics, run_progressive

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out") / "tiny_run"
scenes = generate_dataset(8, 0, 8, 16, 16)
sched = make_schedule(1000)
config = ModelConfig(base_channels=8, channel_multipliers=(1, 2), num_dit_blocks=1, attention_heads=2, pose_embed_dim=4)

plan = make_plan((1, 8), iterations={"image": 400, "video": 60})
t0 = time.perf_counter()
paths = run_progressive(plan, scenes, scenes, out, TrainingRun(config, sched, seed=0))
metrics = read_metrics(out)
print(f"trained {[p.name for p in paths]} in {time.perf_counter() - t0:.0f}s")
print(f"T=1 loss down {100 * loss_reduction(metrics, 'image', window=50):.0f}% from its first 50 steps")

model, _ = load_checkpoint(paths[-1])
cond = build_conditioning(scenes[0], scenes[1], garment_frame=2, start=0, length=8)
video = ddpm_sample(model, cond, (1, 8, 16, 16, 3), SamplerConfig(num_steps=50, seed=0), sched)
print(f"sampled video {tuple(video.shape)}, range [{float(video.min()):.2f}, {float(video.max()):.2f}]")

pairs = pair_for_eval(scenes, seed=0, per_person=1)
table = run_ablation_suite(
    {"video (t8)": paths[1], "image only": paths[0]},
    scenes,
    pairs,
    EvalConfig(num_frames=8, sampling_steps=20),
    sched,
)
print()
print(table.to_text())
np.save(out / "sample.npy", video[0].numpy())
