"""Fréchet distances over toy feature extractors, garment similarity, and the ablation harness."""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import nn

from .data import NUM_LABELS, TOP, EvalPair, SyntheticScene, build_conditioning, prepare_scene
from .diffusion import DiffusionSchedule
from .errors import InvalidArgument, NumericalFailure, UndefinedScore
from .guidance import CUSTOM_WEIGHTS, make_tryon_schedule
from .io import dumps_json, read_npz, write_npz

COV_RIDGE = 1e-6
PSD_TOL = 1e-8
SCORE_COLUMNS = ("fid", "fvd", "garment_sim")


# ---------------------------------------------------------------------------
# Gaussian moments and the Fréchet distance


@dataclass(frozen=True, eq=False)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray
    num_samples: int = 0
    rank_deficient: bool = False

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise InvalidArgument(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def from_features(cls, feats, ridge: float = COV_RIDGE) -> "GaussianStats":
        """Sample mean and (ddof=1) covariance plus ``ridge * I``.

        Fewer than dim+1 samples leaves the covariance rank deficient; the
        ridge keeps it positive definite and the result is flagged.
        """
        x = np.asarray(feats, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise InvalidArgument("need a non-empty (num_samples, dim) feature matrix")
        n, d = x.shape
        mu = x.mean(axis=0)
        if n > 1:
            xc = x - mu
            cov = xc.T @ xc / (n - 1)
            cov = 0.5 * (cov + cov.T)
        else:
            cov = np.zeros((d, d))
        return cls(mu, cov + ridge * np.eye(d), n, n < d + 1)


def _check_psd(cov: np.ndarray, which: str) -> np.ndarray:
    if not np.allclose(cov, cov.T, atol=PSD_TOL, rtol=0):
        raise NumericalFailure(f"covariance {which} is not symmetric")
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.min(initial=0.0) < -PSD_TOL * scale:
        raise NumericalFailure(f"covariance {which} has eigenvalue {w.min():.3e} < 0")
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """‖μa−μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^½).

    The trace of the square root is taken from the eigenvalues of the
    symmetric matrix √Σa Σb √Σa, which shares its spectrum with Σa Σb.
    """
    if a.dim != b.dim:
        raise InvalidArgument(f"dimension mismatch: {a.dim} vs {b.dim}")
    root_a = _check_psd(a.cov, "a")
    _check_psd(b.cov, "b")
    m = root_a @ b.cov @ root_a
    lam = np.linalg.eigvalsh(0.5 * (m + m.T))
    tr_sqrt = float(np.sqrt(np.clip(lam, 0, None)).sum())
    diff = a.mean - b.mean
    d = float(diff @ diff) + float(np.trace(a.cov) + np.trace(b.cov)) - 2.0 * tr_sqrt
    if not np.isfinite(d):
        raise NumericalFailure("Fréchet distance is not finite")
    return max(d, 0.0)


# ---------------------------------------------------------------------------
# Feature extractors


class _ConvEncoder(nn.Module):
    def __init__(self, width: int = 16):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, width, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(width, 2 * width, 3, stride=2, padding=1),
            nn.ReLU(),
        )
        self.out_dim = 4 * width

    def forward(self, x):  # (N, 3, H, W) -> (N, 4*width)
        h = self.net(x)
        return torch.cat([h.mean(dim=(2, 3)), h.std(dim=(2, 3), unbiased=False)], dim=1)


def _hash_module(module: nn.Module) -> str:
    h = hashlib.sha256()
    for name, t in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().numpy().astype(np.float32).tobytes())
    return h.hexdigest()[:16]


class FrameFeatureExtractor:
    """Conv encoder mapping a frame to channel means and spreads.

    Weights are either a fixed seeded random draw or trained on synthetic
    label maps (see :func:`trained_frame_extractor`).
    """

    scope = "frame"

    def __init__(self, encoder: _ConvEncoder, name: str):
        self.encoder = encoder.eval()
        self.name = name
        self.param_hash = _hash_module(encoder)

    @classmethod
    def random(cls, seed: int = 0, width: int = 16) -> "FrameFeatureExtractor":
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            enc = _ConvEncoder(width)
        return cls(enc, f"conv-random-s{seed}-w{width}")

    @property
    def dim(self) -> int:
        return self.encoder.out_dim

    @property
    def identity(self) -> dict:
        return {"name": self.name, "scope": self.scope, "param_hash": self.param_hash, "dim": self.dim}

    @torch.no_grad()
    def __call__(self, frames) -> np.ndarray:
        """(N, H, W, 3) in [-1, 1] -> (N, dim) float64."""
        x = torch.as_tensor(np.asarray(frames, dtype=np.float32)).permute(0, 3, 1, 2)
        return self.encoder(x).double().numpy()


class VideoFeatureExtractor:
    """Per-frame features pooled over time, plus pooled absolute temporal differences.

    The difference channel makes the descriptor sensitive to frame order.
    """

    scope = "video"

    def __init__(self, frame_fx: FrameFeatureExtractor):
        self.frame_fx = frame_fx
        self.name = f"tdiff[{frame_fx.name}]"
        self.param_hash = frame_fx.param_hash

    @property
    def dim(self) -> int:
        return 2 * self.frame_fx.dim

    @property
    def identity(self) -> dict:
        return {"name": self.name, "scope": self.scope, "param_hash": self.param_hash, "dim": self.dim}

    def __call__(self, video) -> np.ndarray:
        """(T, H, W, 3) -> (dim,)."""
        f = self.frame_fx(video)
        diff = np.abs(np.diff(f, axis=0)).mean(axis=0) if f.shape[0] > 1 else np.zeros(f.shape[1])
        return np.concatenate([f.mean(axis=0), diff])


def cache_dir() -> Path:
    return Path(os.environ.get("VTON_LAB_CACHE", Path.home() / ".cache" / "vton_lab"))


def _label_targets(labels: np.ndarray) -> np.ndarray:
    """Per-quadrant label fractions: (N, 4 * NUM_LABELS)."""
    N, H, W = labels.shape
    out = []
    for rs in (slice(0, H // 2), slice(H // 2, H)):
        for cs in (slice(0, W // 2), slice(W // 2, W)):
            block = labels[:, rs, cs].reshape(N, -1)
            out.append(np.stack([(block == k).mean(axis=1) for k in range(NUM_LABELS)], axis=1))
    return np.concatenate(out, axis=1).astype(np.float32)


def trained_frame_extractor(
    scenes: Sequence[SyntheticScene],
    seed: int = 0,
    steps: int = 300,
    width: int = 16,
    use_cache: bool = True,
) -> FrameFeatureExtractor:
    """Train the encoder to predict quadrant label fractions from pixels.

    Results are cached under ``$VTON_LAB_CACHE`` keyed on the training inputs.
    """
    frames = np.concatenate([s.frames for s in scenes])
    labels = np.concatenate([s.labels for s in scenes])
    key = hashlib.sha256()
    key.update(f"{seed}-{steps}-{width}-{frames.shape}".encode())
    key.update(frames.tobytes())
    key.update(labels.tobytes())
    path = cache_dir() / f"frame_extractor_{key.hexdigest()[:16]}.npz"
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        enc = _ConvEncoder(width)
        head = nn.Linear(enc.out_dim, 4 * NUM_LABELS)
    if use_cache and path.exists():
        state = read_npz(path)
        enc.load_state_dict({k: torch.from_numpy(v) for k, v in state.items()})
    else:
        x = torch.from_numpy(frames).permute(0, 3, 1, 2)
        y = torch.from_numpy(_label_targets(labels))
        opt = torch.optim.Adam(list(enc.parameters()) + list(head.parameters()), lr=3e-3)
        gen = torch.Generator().manual_seed(seed)
        for _ in range(steps):
            idx = torch.randint(0, x.shape[0], (min(32, x.shape[0]),), generator=gen)
            loss = torch.mean((head(enc(x[idx])) - y[idx]) ** 2)
            opt.zero_grad()
            loss.backward()
            opt.step()
        if use_cache:
            write_npz(path, {k: v.detach().numpy() for k, v in enc.state_dict().items()})
    return FrameFeatureExtractor(enc, f"conv-trained-s{seed}-w{width}-n{steps}")


def make_extractors(kind: str = "random", seed: int = 0, scenes=None) -> tuple[FrameFeatureExtractor, VideoFeatureExtractor]:
    if kind == "random":
        frame = FrameFeatureExtractor.random(seed)
    elif kind == "trained":
        if not scenes:
            raise InvalidArgument("the trained extractor needs scenes to train on")
        frame = trained_frame_extractor(scenes, seed)
    else:
        raise InvalidArgument(f"unknown extractor kind {kind!r}")
    return frame, VideoFeatureExtractor(frame)


def _map_ordered(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _as_video_list(videos) -> list[np.ndarray]:
    if isinstance(videos, np.ndarray) and videos.ndim == 5:
        videos = list(videos)
    out = [np.asarray(v, dtype=np.float32) for v in videos]
    if not out:
        raise InvalidArgument("empty video set")
    for v in out:
        if v.ndim != 4 or v.shape[-1] != 3:
            raise InvalidArgument(f"videos must be (T, H, W, 3), got {v.shape}")
    return out


def fid_frames(real, generated, fx: FrameFeatureExtractor, workers: int = 1) -> float:
    """Fréchet distance between per-frame feature distributions of two video sets."""
    real, generated = _as_video_list(real), _as_video_list(generated)
    fr = np.concatenate(_map_ordered(fx, real, workers))
    fg = np.concatenate(_map_ordered(fx, generated, workers))
    return frechet_distance(GaussianStats.from_features(fr), GaussianStats.from_features(fg))


def fvd_videos(real, generated, fx: VideoFeatureExtractor, workers: int = 1) -> float:
    """Fréchet distance with each clip as one sample."""
    real, generated = _as_video_list(real), _as_video_list(generated)
    fr = np.stack(_map_ordered(fx, real, workers))
    fg = np.stack(_map_ordered(fx, generated, workers))
    return frechet_distance(GaussianStats.from_features(fr), GaussianStats.from_features(fg))


# ---------------------------------------------------------------------------
# Garment similarity


class MaskSegmenter:
    """Returns fixed per-frame masks, e.g. the target person's torso labels."""

    def __init__(self, masks):
        self.masks = np.asarray(masks, dtype=bool)

    def __call__(self, frames) -> np.ndarray:
        frames = np.asarray(frames)
        if frames.shape[:-1] != self.masks.shape:
            raise InvalidArgument(f"masks {self.masks.shape} do not match frames {frames.shape[:-1]}")
        return self.masks


class ColorSegmenter:
    """Pixels within ``tol`` (L2, in [-1, 1] RGB) of any reference color."""

    def __init__(self, colors, tol: float = 0.25):
        self.colors = np.asarray(colors, dtype=np.float32).reshape(-1, 3)
        self.tol = tol

    def __call__(self, frames) -> np.ndarray:
        f = np.asarray(frames, dtype=np.float32)
        d = np.linalg.norm(f[..., None, :] - self.colors, axis=-1)
        return (d <= self.tol).any(axis=-1)


def rgb_to_hsv(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized RGB in [0, 1] to (hue, saturation, value), hue in [0, 1)."""
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    mx, mn = rgb.max(axis=1), rgb.min(axis=1)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    h = np.where(mx == r, (g - b) / safe, np.where(mx == g, 2.0 + (b - r) / safe, 4.0 + (r - g) / safe))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return h, s, mx


class HueHistogramEmbedder:
    """Saturation-weighted hue histogram of a pixel set, L2-normalized."""

    def __init__(self, bins: int = 24):
        self.bins = bins

    def __call__(self, pixels) -> np.ndarray:
        p = (np.clip(np.asarray(pixels, dtype=np.float64).reshape(-1, 3), -1, 1) + 1) / 2
        hue, sat, val = rgb_to_hsv(p)
        hist = np.zeros(self.bins)
        idx = np.minimum((hue * self.bins).astype(int), self.bins - 1)
        np.add.at(hist, idx, sat * val + 1e-6)
        norm = np.linalg.norm(hist)
        return hist / norm if norm > 0 else hist


def _cosine(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedScore("zero-norm embedding")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def garment_similarity(garment_image, generated, segmenter, embedder=None) -> float:
    """Mean cosine similarity between the garment crop and each frame's garment crop.

    ``garment_image`` is (H, W, 3) or (H, W, 4); a fourth channel is used as
    the garment mask, otherwise non-zero pixels are. Frames whose mask is
    empty are skipped.
    """
    embedder = embedder or HueHistogramEmbedder()
    g = np.asarray(garment_image, dtype=np.float32)
    ref_mask = g[..., 3] > 0.5 if g.shape[-1] == 4 else np.abs(g).sum(-1) > 0
    if not ref_mask.any():
        raise UndefinedScore("garment image has an empty mask")
    ref = embedder(g[..., :3][ref_mask])
    video = _as_video_list([generated])[0]
    masks = np.asarray(segmenter(video), dtype=bool)
    sims = [_cosine(ref, embedder(frame[m])) for frame, m in zip(video, masks) if m.any()]
    if not sims:
        raise UndefinedScore("garment mask is empty in every generated frame")
    return float(np.mean(sims))


# ---------------------------------------------------------------------------
# Ablation harness


@dataclass
class EvalConfig:
    num_frames: int = 16
    sampling_steps: int = 50
    guidance_weights: tuple = CUSTOM_WEIGHTS
    seed: int = 0
    extractor: str = "random"
    extractor_seed: int = 0
    pairs_per_person: int = 1
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            "num_frames": self.num_frames,
            "sampling_steps": self.sampling_steps,
            "guidance_weights": list(self.guidance_weights),
            "seed": self.seed,
            "extractor": self.extractor,
            "extractor_seed": self.extractor_seed,
            "pairs_per_person": self.pairs_per_person,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvalConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgument(f"unknown eval config keys: {sorted(unknown)}")
        d = dict(d)
        if "guidance_weights" in d:
            d["guidance_weights"] = tuple(float(w) for w in d["guidance_weights"])
        return cls(**d)


@dataclass
class ScoreTable:
    rows: list[dict]
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"columns": list(SCORE_COLUMNS), "rows": self.rows, "meta": self.meta}

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    def to_text(self) -> str:
        header = ["model", *SCORE_COLUMNS]
        body = [[r["name"], *(f"{r['scores'][c]:.4f}" for c in SCORE_COLUMNS)] for r in self.rows]
        widths = [max(len(x) for x in col) for col in zip(header, *body)]
        fmt = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
        lines = [fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in body]
        lines.append(f"frame extractor: {self.meta.get('frame_extractor', {}).get('name')} ({self.meta.get('frame_extractor', {}).get('param_hash')})")
        return "\n".join(lines) + "\n"


def generate_videos(model, scenes, pairs: Sequence[EvalPair], cfg: EvalConfig, sched: DiffusionSchedule) -> list[np.ndarray]:
    """One sampled clip per pair, seed ``cfg.seed + index``."""
    from .sampler import SamplerConfig, ddpm_sample

    prepared = {}
    guidance = make_tryon_schedule(*cfg.guidance_weights)
    out = []
    for i, pair in enumerate(pairs):
        for k in (pair.person, pair.garment):
            if k not in prepared:
                prepared[k] = prepare_scene(scenes[k])
        cond = build_conditioning(prepared[pair.person], prepared[pair.garment], pair.garment_frame, 0, cfg.num_frames)
        H, W = scenes[pair.person].size
        sc = SamplerConfig(
            num_steps=cfg.sampling_steps,
            seed=cfg.seed + i,
            guidance=guidance,
            prediction_target=model.config.prediction_target,
        )
        video = ddpm_sample(model, cond, (1, cfg.num_frames, H, W, 3), sc, sched)
        out.append(video[0].numpy().astype(np.float32))
    return out


def score_videos(
    generated: Sequence[np.ndarray],
    scenes,
    pairs: Sequence[EvalPair],
    frame_fx: FrameFeatureExtractor,
    video_fx: VideoFeatureExtractor,
    num_frames: int,
    workers: int = 1,
) -> dict:
    real = [scenes[i].frames[:num_frames] for i in sorted({p.person for p in pairs})]
    sims = []
    for video, pair in zip(generated, pairs):
        person, garment = scenes[pair.person], scenes[pair.garment]
        seg = MaskSegmenter(person.labels[:num_frames] == TOP)
        g_img = np.concatenate(
            [
                np.where(garment.garment_segmentation[pair.garment_frame][..., None], garment.frames[pair.garment_frame], 0.0),
                garment.garment_segmentation[pair.garment_frame][..., None],
            ],
            axis=-1,
        )
        sims.append(garment_similarity(g_img, video, seg))
    return {
        "fid": fid_frames(real, generated, frame_fx, workers),
        "fvd": fvd_videos(real, generated, video_fx, workers),
        "garment_sim": float(np.mean(sims)),
    }


def run_ablation_suite(
    checkpoints: Mapping[str, object],
    scenes: Sequence[SyntheticScene],
    pairs: Sequence[EvalPair],
    cfg: EvalConfig,
    sched: DiffusionSchedule,
    min_checkpoints: int = 1,
) -> ScoreTable:
    """Sample every checkpoint on the shared pairs and seeds, then score.

    ``checkpoints`` maps a row name to a checkpoint directory or a model.
    Real statistics come from the first ``num_frames`` frames of each
    person scene in ``pairs``.
    """
    from .model.checkpoint import checkpoint_hash, load_checkpoint

    if len(checkpoints) < min_checkpoints:
        raise InvalidArgument(f"need at least {min_checkpoints} checkpoints, got {len(checkpoints)}")
    if not pairs:
        raise InvalidArgument("no evaluation pairs")
    frame_fx, video_fx = make_extractors(cfg.extractor, cfg.extractor_seed, scenes)
    rows = []
    for name, ckpt in checkpoints.items():
        if isinstance(ckpt, (str, os.PathLike)):
            if not (Path(ckpt) / "manifest.json").exists():
                raise InvalidArgument(f"checkpoint {ckpt} not found")
            model, _ = load_checkpoint(ckpt)
            ident = checkpoint_hash(ckpt)
        else:
            model, ident = ckpt, _hash_module(ckpt)
        model.eval()
        videos = generate_videos(model, scenes, pairs, cfg, sched)
        scores = score_videos(videos, scenes, pairs, frame_fx, video_fx, cfg.num_frames, cfg.workers)
        rows.append({"name": name, "checkpoint": ident, "scores": scores, "num_videos": len(videos)})
    meta = {
        "eval": cfg.to_dict(),
        "frame_extractor": frame_fx.identity,
        "video_extractor": video_fx.identity,
        "num_pairs": len(pairs),
        "schedule": sched.to_dict(),
    }
    return ScoreTable(rows, meta)
