"""Procedural try-on videos with exact labels, plus input preprocessing.

Each scene is a walking stick/blob figure on a flat background. Because the
renderer knows every pixel's body-part label and every joint position, the
clothing-agnostic frames, garment segmentation and pose maps are computed
exactly, with no estimator in the loop.

Arrays follow the channels-last video layout (T, H, W, C) per scene and
(B, T, H, W, C) once batched. Pixel values lie in [-1, 1].
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .io import read_json, read_npz, write_json, write_npz

FORMAT_VERSION = "1"

BACKGROUND, HEAD, TOP, ARMS, HANDS, BOTTOMS, LEGS, SHOES = range(8)
NUM_LABELS = 8
LABEL_LEGEND = {
    "background": BACKGROUND,
    "head": HEAD,
    "top": TOP,
    "arms": ARMS,
    "hands": HANDS,
    "bottoms": BOTTOMS,
    "legs": LEGS,
    "shoes": SHOES,
}
VISIBLE_LABELS = (HEAD, HANDS, LEGS, SHOES)

JOINT_NAMES = (
    "head", "neck", "l_shoulder", "r_shoulder", "l_hand", "r_hand",
    "l_hip", "r_hip", "l_knee", "r_knee", "l_foot", "r_foot",
)
NUM_JOINTS = len(JOINT_NAMES)

# Conditioning inputs, in the order they are listed everywhere else.
INPUT_NAMES = ("agnostic", "garment", "garment_pose", "person_pose")

NUM_HUES = 12
NUM_PATTERNS = 3
NUM_GARMENTS = NUM_HUES * NUM_PATTERNS
STRIPE_PERIOD = 4
POSE_SIGMA = 1.5

# Resting arm angle away from the body, radians.
ARM_SPREAD = 0.4
# Upper bound on any joint's per-frame displacement, as a fraction of H.
MAX_JOINT_STEP = 0.06


@dataclass
class SyntheticScene:
    frames: np.ndarray  # (T, H, W, 3) float32
    labels: np.ndarray  # (T, H, W) uint8, see LABEL_LEGEND
    person_poses: np.ndarray  # (T, K, 2) (row, col) in pixels
    garment_color_id: int
    background: np.ndarray = field(default_factory=lambda: np.zeros(3, np.float32))
    seed: int = -1
    motion: dict = field(default_factory=dict)
    name: str = ""

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]

    @property
    def person_masks(self) -> np.ndarray:
        return self.labels > 0

    @property
    def garment_segmentation(self) -> np.ndarray:
        return self.labels == TOP


@dataclass
class TryOnConditioning:
    """Batched conditioning bundle; arrays may be numpy or torch.

    agnostic     (B, T, H, W, 3+1)  clothing-agnostic frames + person mask
    garment      (B, 1, H, W, 3+1)  garment segmentation + garment mask
    person_pose  (B, T, H, W, K)    rendered person joints
    garment_pose (B, 1, H, W, K)    rendered pose of the garment's wearer
    """

    agnostic: object
    garment: object
    person_pose: object
    garment_pose: object

    @property
    def batch_size(self) -> int:
        return self.agnostic.shape[0]

    @property
    def num_frames(self) -> int:
        return self.agnostic.shape[1]

    def channel_spec(self) -> dict[str, int]:
        return {name: int(getattr(self, name).shape[-1]) for name in INPUT_NAMES}

    def map(self, fn) -> "TryOnConditioning":
        return TryOnConditioning(**{n: fn(getattr(self, n)) for n in INPUT_NAMES})

    def to_torch(self, dtype=None, device=None) -> "TryOnConditioning":
        import torch

        dtype = dtype or torch.float32
        return self.map(lambda a: torch.as_tensor(a).to(dtype=dtype, device=device))

    @staticmethod
    def stack(items: list["TryOnConditioning"]) -> "TryOnConditioning":
        return TryOnConditioning(**{n: np.concatenate([getattr(c, n) for c in items], axis=0) for n in INPUT_NAMES})


def channel_spec(image_channels: int = 3, num_joints: int = NUM_JOINTS) -> dict[str, int]:
    """Conditioning channel counts produced by this module."""
    return {
        "agnostic": image_channels + 1,
        "garment": image_channels + 1,
        "garment_pose": num_joints,
        "person_pose": num_joints,
    }


# ---------------------------------------------------------------------------
# Scene generation


def garment_appearance(garment_id: int) -> tuple[np.ndarray, np.ndarray, int]:
    """(base color, stripe color, pattern) for a garment id.

    Pattern 0 is plain, 1 horizontal stripes, 2 vertical stripes.
    """
    hue = (garment_id % NUM_HUES) / NUM_HUES
    pattern = (garment_id // NUM_HUES) % NUM_PATTERNS
    base = np.array(colorsys.hsv_to_rgb(hue, 0.85, 0.85)) * 2 - 1
    alt = np.array(colorsys.hsv_to_rgb(hue, 0.35, 1.0)) * 2 - 1
    return base.astype(np.float32), alt.astype(np.float32), pattern


def sample_motion(rng: np.random.Generator, H: int, W: int) -> dict:
    """Draw body proportions and motion amplitudes that keep the figure in frame."""
    height = rng.uniform(0.72, 0.84) * H
    head_r = 0.075 * height
    torso = 0.30 * height
    thigh = 0.20 * height
    shin = 0.20 * height
    arm = 0.30 * height
    shoulder = min(0.11 * height, 0.2 * W)
    hip = 0.6 * shoulder
    freq = rng.uniform(0.02, 0.06)
    amp_arm = rng.uniform(0.1, 0.3)
    amp_leg = rng.uniform(0.1, 0.3)
    amp_y = rng.uniform(0.0, 0.015) * H
    reach = shoulder + arm * math.sin(ARM_SPREAD + amp_arm) + 0.06 * height
    room = max(0.0, W / 2 - reach - 1.0)
    amp_x = rng.uniform(0.0, 1.0) * min(room, 0.08 * W)
    # Cap the speed so the per-frame step respects MAX_JOINT_STEP.
    top = 1.0 + amp_y
    root_row = top + 2 * head_r + 0.05 * height + torso
    motion = {
        "height": height,
        "head_r": head_r,
        "torso": torso,
        "thigh": thigh,
        "shin": shin,
        "arm": arm,
        "shoulder": shoulder,
        "hip": hip,
        "freq": freq,
        "amp_x": amp_x,
        "amp_y": amp_y,
        "amp_arm": amp_arm,
        "amp_leg": amp_leg,
        "phase": rng.uniform(0, 2 * math.pi),
        "phase_limb": rng.uniform(0, 2 * math.pi),
        "root_row": root_row,
        "root_col": W / 2 + rng.uniform(-0.5, 0.5) * max(0.0, room - amp_x),
        "H": H,
        "W": W,
    }
    bound = joint_step_bound(motion)
    if bound > MAX_JOINT_STEP * H:
        motion["freq"] = freq * MAX_JOINT_STEP * H / bound
    return motion


def joint_step_bound(motion: dict) -> float:
    """Upper bound on per-frame joint displacement implied by the motion law.

    Each joint is root + offset; the root moves at most 2*pi*f*(A_x + 2*A_y)
    per frame and a limb end at most 2*pi*f*L*A per frame.
    """
    w = 2 * math.pi * motion["freq"]
    root = w * (motion["amp_x"] + 2 * motion["amp_y"])
    arm = w * motion["arm"] * motion["amp_arm"]
    leg = w * (motion["thigh"] + motion["shin"]) * motion["amp_leg"]
    return root + max(arm, leg)


def joints_at(motion: dict, tau: float) -> np.ndarray:
    """Joint positions (K, 2) as (row, col) at frame ``tau``."""
    w = 2 * math.pi * motion["freq"]
    ph = motion["phase"]
    root_r = motion["root_row"] + motion["amp_y"] * math.sin(2 * w * tau + ph)
    root_c = motion["root_col"] + motion["amp_x"] * math.sin(w * tau + ph)
    neck = (root_r - motion["torso"], root_c)
    head = (neck[0] - motion["head_r"] - 0.05 * motion["height"], root_c)
    sh = motion["shoulder"]
    l_sh = (neck[0], root_c - sh)
    r_sh = (neck[0], root_c + sh)
    swing = motion["amp_arm"] * math.sin(w * tau + motion["phase_limb"])
    arm = motion["arm"]
    l_hand = (l_sh[0] + arm * math.cos(ARM_SPREAD + swing), l_sh[1] - arm * math.sin(ARM_SPREAD + swing))
    r_hand = (r_sh[0] + arm * math.cos(ARM_SPREAD - swing), r_sh[1] + arm * math.sin(ARM_SPREAD - swing))
    hp = motion["hip"]
    l_hip = (root_r, root_c - hp)
    r_hip = (root_r, root_c + hp)
    step = motion["amp_leg"] * math.sin(w * tau + motion["phase_limb"] + math.pi)
    th, sn = motion["thigh"], motion["shin"]
    l_knee = (l_hip[0] + th * math.cos(step), l_hip[1] + th * math.sin(step))
    r_knee = (r_hip[0] + th * math.cos(-step), r_hip[1] + th * math.sin(-step))
    l_foot = (l_knee[0] + sn * math.cos(step), l_knee[1] + sn * math.sin(step))
    r_foot = (r_knee[0] + sn * math.cos(-step), r_knee[1] + sn * math.sin(-step))
    pts = np.array(
        [head, neck, l_sh, r_sh, l_hand, r_hand, l_hip, r_hip, l_knee, r_knee, l_foot, r_foot],
        dtype=np.float64,
    )
    pts[:, 0] = np.clip(pts[:, 0], 0.0, motion["H"] - 1.0)
    pts[:, 1] = np.clip(pts[:, 1], 0.0, motion["W"] - 1.0)
    return pts


def _segment_dist(rr, cc, p, q):
    """Distance from every pixel center to segment p-q."""
    d = np.array(q) - np.array(p)
    L2 = float(d @ d)
    if L2 == 0.0:
        return np.hypot(rr - p[0], cc - p[1])
    u = np.clip(((rr - p[0]) * d[0] + (cc - p[1]) * d[1]) / L2, 0.0, 1.0)
    return np.hypot(rr - (p[0] + u * d[0]), cc - (p[1] + u * d[1]))


def _render_labels(j: np.ndarray, motion: dict, H: int, W: int) -> np.ndarray:
    rr, cc = np.mgrid[0:H, 0:W].astype(np.float64)
    lab = np.zeros((H, W), np.uint8)
    hgt = motion["height"]
    r_limb = max(1.0, 0.045 * hgt)
    head, neck, l_sh, r_sh, l_hand, r_hand, l_hip, r_hip, l_kn, r_kn, l_ft, r_ft = j
    root = (l_hip + r_hip) / 2

    def paint(mask, label):
        lab[mask] = label

    paint(_segment_dist(rr, cc, l_hip, r_hip) <= r_limb * 1.3, BOTTOMS)
    for hip, knee, foot in ((l_hip, l_kn, l_ft), (r_hip, r_kn, r_ft)):
        paint(_segment_dist(rr, cc, hip, knee) <= r_limb * 1.2, BOTTOMS)
        paint(_segment_dist(rr, cc, knee, foot) <= r_limb, LEGS)
        paint(np.hypot(rr - foot[0], cc - foot[1]) <= r_limb * 1.3, SHOES)
    torso_r = 0.8 * motion["shoulder"]
    paint(_segment_dist(rr, cc, neck + [torso_r * 0.6, 0], root - [r_limb, 0]) <= torso_r, TOP)
    for sh, hand in ((l_sh, l_hand), (r_sh, r_hand)):
        elbow = (sh + hand) / 2
        paint(_segment_dist(rr, cc, elbow, hand) <= r_limb * 0.9, ARMS)
        paint(_segment_dist(rr, cc, sh, elbow) <= r_limb * 1.1, TOP)
        paint(np.hypot(rr - hand[0], cc - hand[1]) <= r_limb * 1.2, HANDS)
    paint(np.hypot(rr - head[0], cc - head[1]) <= motion["head_r"], HEAD)
    return lab


def _palette(rng: np.random.Generator) -> dict[int, np.ndarray]:
    def hsv(h, s, v):
        return np.array(colorsys.hsv_to_rgb(h % 1.0, s, v), np.float32) * 2 - 1

    skin_h = rng.uniform(0.03, 0.1)
    return {
        "background": hsv(rng.uniform(), rng.uniform(0.05, 0.25), rng.uniform(0.55, 0.9)),
        HEAD: hsv(skin_h, 0.45, 0.9),
        ARMS: hsv(skin_h, 0.55, 0.75),
        HANDS: hsv(skin_h + 0.5, 0.6, 0.95),
        BOTTOMS: hsv(rng.uniform(0.55, 0.7), 0.5, rng.uniform(0.2, 0.45)),
        LEGS: hsv(skin_h + 0.25, 0.5, 0.7),
        SHOES: hsv(0.0, 0.0, 0.12),
    }


def _colorize(lab: np.ndarray, palette: dict, garment_id: int, root_row: float) -> np.ndarray:
    H, W = lab.shape
    img = np.broadcast_to(palette["background"], (H, W, 3)).copy()
    for label in (HEAD, ARMS, HANDS, BOTTOMS, LEGS, SHOES):
        img[lab == label] = palette[label]
    base, alt, pattern = garment_appearance(garment_id)
    top = lab == TOP
    if pattern == 0:
        img[top] = base
    else:
        rr, cc = np.mgrid[0:H, 0:W]
        coord = (rr - int(round(root_row))) if pattern == 1 else cc
        stripe = (coord // (STRIPE_PERIOD // 2)) % 2 == 1
        img[top & ~stripe] = base
        img[top & stripe] = alt
    return img


def generate_scene(seed: int, T: int, H: int = 64, W: int = 48) -> SyntheticScene:
    """Render a T-frame scene; fully determined by (seed, T, H, W)."""
    if T < 1:
        raise InvalidArgument(f"T must be >= 1, got {T}")
    if H < 16 or W < 16:
        raise InvalidArgument(f"frame size must be at least 16x16, got {H}x{W}")
    rng = np.random.default_rng(seed)
    motion = sample_motion(rng, H, W)
    palette = _palette(rng)
    garment_id = int(rng.integers(0, NUM_GARMENTS))
    poses = np.stack([joints_at(motion, float(t)) for t in range(T)])
    labels = np.stack([_render_labels(p, motion, H, W) for p in poses])
    frames = np.stack(
        [_colorize(lab, palette, garment_id, p[6:8, 0].mean()) for lab, p in zip(labels, poses)]
    ).astype(np.float32)
    return SyntheticScene(
        frames=frames,
        labels=labels,
        person_poses=poses,
        garment_color_id=garment_id,
        background=palette["background"],
        seed=int(seed),
        motion=motion,
        name=f"seed{seed}",
    )


def scene_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def generate_dataset(num_scenes: int, seed: int, T: int, H: int = 64, W: int = 48, workers: int = 1) -> list[SyntheticScene]:
    seeds = [scene_seed(seed, i) for i in range(num_scenes)]
    if workers > 1 and num_scenes > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(generate_scene, seeds, [T] * num_scenes, [H] * num_scenes, [W] * num_scenes))
    return [generate_scene(s, T, H, W) for s in seeds]


# ---------------------------------------------------------------------------
# Preprocessing


def person_bbox(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    """Inclusive (r0, r1, c0, c1) of a 2-D mask, or None when empty."""
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return rows[0], rows[-1], cols[0], cols[-1]


def agnostic_blank_mask(scene: SyntheticScene, keep_bottoms: bool = False) -> np.ndarray:
    """(T, H, W) mask of pixels blanked by make_agnostic."""
    keep = VISIBLE_LABELS + ((BOTTOMS,) if keep_bottoms else ())
    visible = np.isin(scene.labels, keep)
    out = np.zeros(scene.labels.shape, dtype=bool)
    for t, m in enumerate(scene.person_masks):
        box = person_bbox(m)
        if box is None:
            continue
        r0, r1, c0, c1 = box
        out[t, r0 : r1 + 1, c0 : c1 + 1] = True
    return out & ~visible


def make_agnostic(scene: SyntheticScene, keep_bottoms: bool = False) -> np.ndarray:
    """Clothing-agnostic frames with the person mask appended, (T, H, W, 4)."""
    blank = agnostic_blank_mask(scene, keep_bottoms)
    frames = np.where(blank[..., None], 0.0, scene.frames).astype(np.float32)
    mask = scene.person_masks[..., None].astype(np.float32)
    return np.concatenate([frames, mask], axis=-1)


def make_garment_inputs(scene: SyntheticScene, frame_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Garment segmentation with mask channel (H, W, 4) and wearer pose (K, 2)."""
    if not 0 <= frame_index < scene.num_frames:
        raise InvalidArgument(f"frame_index {frame_index} outside [0, {scene.num_frames})")
    seg = scene.garment_segmentation[frame_index]
    image = np.where(seg[..., None], scene.frames[frame_index], 0.0).astype(np.float32)
    garment = np.concatenate([image, seg[..., None].astype(np.float32)], axis=-1)
    return garment, scene.person_poses[frame_index].copy()


def render_pose_map(joints, H: int, W: int, sigma: float = POSE_SIGMA) -> np.ndarray:
    """One Gaussian splat per joint, joint k in channel k: (H, W, K)."""
    joints = np.asarray(joints, dtype=np.float64).reshape(-1, 2)
    K = joints.shape[0]
    if K and (
        (joints[:, 0] < 0).any() or (joints[:, 0] > H - 1).any()
        or (joints[:, 1] < 0).any() or (joints[:, 1] > W - 1).any()
    ):
        raise InvalidArgument("joint outside frame bounds")
    rr = np.arange(H, dtype=np.float64)[:, None, None]
    cc = np.arange(W, dtype=np.float64)[None, :, None]
    d2 = (rr - joints[:, 0]) ** 2 + (cc - joints[:, 1]) ** 2
    return np.exp(-d2 / (2 * sigma**2)).astype(np.float32)


def render_pose_video(poses: np.ndarray, H: int, W: int, sigma: float = POSE_SIGMA) -> np.ndarray:
    return np.stack([render_pose_map(p, H, W, sigma) for p in poses])


@dataclass
class PreparedScene:
    """Per-scene preprocessing cached for repeated batching."""

    scene: SyntheticScene
    agnostic: np.ndarray
    person_pose: np.ndarray
    keep_bottoms: bool = False
    _garments: dict = field(default_factory=dict, repr=False)

    def garment(self, frame_index: int) -> tuple[np.ndarray, np.ndarray]:
        if frame_index not in self._garments:
            g, j = make_garment_inputs(self.scene, frame_index)
            H, W = self.scene.size
            self._garments[frame_index] = (g, render_pose_map(j, H, W))
        return self._garments[frame_index]


def prepare_scene(scene: SyntheticScene, keep_bottoms: bool = False) -> PreparedScene:
    H, W = scene.size
    return PreparedScene(
        scene=scene,
        agnostic=make_agnostic(scene, keep_bottoms),
        person_pose=render_pose_video(scene.person_poses, H, W),
        keep_bottoms=keep_bottoms,
    )


def build_conditioning(
    person: PreparedScene | SyntheticScene,
    garment: PreparedScene | SyntheticScene,
    garment_frame: int,
    start: int = 0,
    length: int | None = None,
) -> TryOnConditioning:
    """Conditioning for one sample (B=1) over frames [start, start+length)."""
    if isinstance(person, SyntheticScene):
        person = prepare_scene(person)
    if isinstance(garment, SyntheticScene):
        garment = prepare_scene(garment)
    n = person.scene.num_frames
    length = n - start if length is None else length
    if start < 0 or length < 1 or start + length > n:
        raise InvalidArgument(f"frame window [{start}, {start + length}) outside scene of {n} frames")
    g_img, g_pose = garment.garment(garment_frame)
    sl = slice(start, start + length)
    return TryOnConditioning(
        agnostic=person.agnostic[None, sl],
        garment=g_img[None, None],
        person_pose=person.person_pose[None, sl],
        garment_pose=g_pose[None, None],
    )


# ---------------------------------------------------------------------------
# Evaluation pairing


@dataclass(frozen=True)
class EvalPair:
    person: int
    garment: int
    garment_frame: int


def pair_for_eval(scenes: list[SyntheticScene], seed: int, per_person: int = 3) -> list[EvalPair]:
    """Pair every scene with ``per_person`` garment frames from distinct other scenes."""
    n = len(scenes)
    if n < 2:
        raise InvalidArgument("pairing needs at least 2 scenes")
    if per_person > n - 1:
        raise InvalidArgument(f"cannot draw {per_person} distinct other scenes from {n} scenes")
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for j in rng.choice(others, size=per_person, replace=False):
            frame = int(rng.integers(0, scenes[j].num_frames))
            pairs.append(EvalPair(i, int(j), frame))
    return pairs


# ---------------------------------------------------------------------------
# Persistence


def _scene_arrays(scene: SyntheticScene) -> dict[str, np.ndarray]:
    return {
        "frames": scene.frames.astype(np.float32),
        "labels": scene.labels.astype(np.uint8),
        "person_poses": scene.person_poses.astype(np.float64),
        "background": np.asarray(scene.background, np.float32),
    }


def save_scene(scene: SyntheticScene, path: str | Path) -> None:
    path = Path(path)
    write_npz(path.with_suffix(".npz"), _scene_arrays(scene))
    T, H, W = scene.labels.shape
    write_json(
        path.with_suffix(".json"),
        {
            "format_version": FORMAT_VERSION,
            "seed": scene.seed,
            "name": scene.name,
            "dims": {"T": T, "H": H, "W": W},
            "garment_color_id": scene.garment_color_id,
            "label_legend": LABEL_LEGEND,
            "joint_names": list(JOINT_NAMES),
            "motion": scene.motion,
        },
    )


def load_scene(path: str | Path) -> SyntheticScene:
    path = Path(path)
    meta = read_json(path.with_suffix(".json"))
    if meta.get("format_version") != FORMAT_VERSION:
        raise InvalidArgument(f"{path}: unsupported scene format {meta.get('format_version')!r}")
    arrays = read_npz(path.with_suffix(".npz"))
    return SyntheticScene(
        frames=arrays["frames"],
        labels=arrays["labels"],
        person_poses=arrays["person_poses"],
        garment_color_id=int(meta["garment_color_id"]),
        background=arrays["background"],
        seed=int(meta["seed"]),
        motion=meta["motion"],
        name=meta["name"],
    )


def save_dataset(scenes: list[SyntheticScene], out_dir: str | Path, params: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, scene in enumerate(scenes):
        stem = f"scene_{i:05d}"
        save_scene(scene, out_dir / stem)
        entries.append({"id": stem, "file": f"{stem}.npz", "seed": scene.seed, "name": scene.name})
    write_json(
        out_dir / "manifest.json",
        {
            "format_version": FORMAT_VERSION,
            "num_scenes": len(scenes),
            "params": params or {},
            "label_legend": LABEL_LEGEND,
            "scenes": entries,
        },
    )
    return out_dir


def load_dataset(data_dir: str | Path) -> list[SyntheticScene]:
    data_dir = Path(data_dir)
    manifest_path = data_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no dataset manifest at {manifest_path}")
    manifest = read_json(manifest_path)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise InvalidArgument(f"{data_dir}: unsupported dataset format")
    return [load_scene(data_dir / e["id"]) for e in manifest["scenes"]]


def load_scene_ref(ref: str) -> tuple[SyntheticScene, int | None]:
    """Parse ``path`` or ``path:frame`` into a scene and optional frame index."""
    path, frame = ref, None
    head, sep, tail = ref.rpartition(":")
    if sep and tail.isdigit():
        path, frame = head, int(tail)
    return load_scene(Path(path).with_suffix("")), frame
