"""Synthetic try-on scenes and the four conditioning inputs.

Renders one scene, builds the inputs the denoiser sees for a garment taken
from a second scene, and writes a side-by-side GIF:

    person | agnostic | garment | pose heatmap

Run:  python demos/01_synthetic_scenes.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np
from PIL import Image

from vton_lab.data import (
    HEAD,
    TOP,
    agnostic_blank_mask,
    build_conditioning,
    generate_scene,
    joint_step_bound,
)

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

person = generate_scene(seed=3, T=16, H=64, W=48)
donor = generate_scene(seed=8, T=16, H=64, W=48)
print(f"person scene: {person.frames.shape}, garment id {person.garment_color_id}")
print(f"donor scene garment id {donor.garment_color_id}")

# Every scene carries exact labels, so the preprocessing needs no estimators.
top_px = int((person.labels == TOP).sum())
head_px = int((person.labels == HEAD).sum())
print(f"top pixels {top_px}, head pixels {head_px}, max joint step bound {joint_step_bound(person.motion):.2f}px")
print(f"blanked pixels in the agnostic frames: {int(agnostic_blank_mask(person).sum())}")

# Person frames 0..15, garment cut from frame 5 of the donor.
cond = build_conditioning(person, donor, garment_frame=5, start=0, length=16)
for name in ("agnostic", "garment", "person_pose", "garment_pose"):
    print(f"{name:13s} {getattr(cond, name).shape}")


def to_u8(x):
    return ((np.clip(x, -1, 1) + 1) * 127.5).round().astype(np.uint8)


garment = cond.garment[0, 0, ..., :3]
frames = []
for t in range(16):
    heat = cond.person_pose[0, t].max(-1)
    heat_rgb = np.repeat(heat[..., None] * 2 - 1, 3, axis=-1)
    row = np.concatenate([person.frames[t], cond.agnostic[0, t, ..., :3], garment, heat_rgb], axis=1)
    frames.append(Image.fromarray(to_u8(row)).resize((row.shape[1] * 3, row.shape[0] * 3), Image.NEAREST))
frames[0].save(out / "scene_inputs.gif", save_all=True, append_images=frames[1:], duration=120, loop=0)
print(f"wrote {out / 'scene_inputs.gif'}")
