"""Progressive temporal training with joint image/video batches.

Image batches run the spatial-only branch, so temporal parameters get no
gradient and Adam leaves them untouched. Each phase starts from the
previous phase's weights; the first video phase inflates the model with
identity-initialized temporal blocks and the 64-frame phase injects
temporal resampling.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch

from .data import INPUT_NAMES, PreparedScene, SyntheticScene, TryOnConditioning, build_conditioning, prepare_scene
from .diffusion import DiffusionSchedule, add_noise, target_for
from .errors import InvalidArgument, InvalidState, TrainingDivergence
from .model.checkpoint import load_checkpoint, read_manifest, save_checkpoint
from .model.denoiser import ModelConfig, TryOnDenoiser, build_model, inflate_temporal, inject_temporal_resampling, with_frame_length

log = logging.getLogger(__name__)

VALID_FRAME_LENGTHS = (1, 8, 16, 32, 64)
RESAMPLING_FRAME_LENGTH = 64
DEFAULT_DROPOUT = 0.1


# ---------------------------------------------------------------------------
# Learning rate


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "adam"
    lr_start: float = 1e-4
    lr_end: float = 1e-5
    decay_steps: int = 1_000_000
    warmup_steps: int = 10_000

    @classmethod
    def scaled(cls, iterations: int, **overrides) -> "OptimizerSpec":
        """Keep the 1% warm-up ratio, decaying over ``iterations`` steps."""
        iterations = max(int(iterations), 1)
        return cls(decay_steps=iterations, warmup_steps=max(1, iterations // 100), **overrides)


def lr_at(step: int, spec: OptimizerSpec) -> float:
    """Linear warm-up from 0, linear decay to lr_end, then constant."""
    if step < 0:
        raise InvalidArgument("step must be >= 0")
    if spec.warmup_steps > 0 and step < spec.warmup_steps:
        return spec.lr_start * step / spec.warmup_steps
    k = step - spec.warmup_steps
    if k >= spec.decay_steps:
        return spec.lr_end
    return spec.lr_start + (spec.lr_end - spec.lr_start) * k / spec.decay_steps


def make_optimizer(model: torch.nn.Module, spec: OptimizerSpec) -> torch.optim.Optimizer:
    if spec.kind == "adam":
        return torch.optim.Adam(model.parameters(), lr=spec.lr_start)
    if spec.kind == "adamw":
        return torch.optim.AdamW(model.parameters(), lr=spec.lr_start)
    raise InvalidArgument(f"unknown optimizer kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# Phase plan


@dataclass(frozen=True)
class PhaseSpec:
    name: str
    frame_length: int
    iterations: int
    batch_size: int
    image_fraction: float
    inflate_temporal: bool = False
    inject_resampling: bool = False
    image_batch_size: int = 8
    lr_start: float = 1e-4
    lr_end: float = 1e-5


@dataclass(frozen=True)
class PhasePlan:
    phases: tuple[PhaseSpec, ...]
    temporal: bool = True

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        self.validate()

    def validate(self) -> None:
        if not self.phases:
            raise InvalidArgument("plan has no phases")
        first = self.phases[0]
        if first.frame_length != 1 or first.image_fraction != 1.0:
            raise InvalidArgument("first phase must be an image phase (T=1, image_fraction=1)")
        names = [p.name for p in self.phases]
        if len(set(names)) != len(names):
            raise InvalidArgument("phase names must be unique")
        prev_video = None
        inflated = False
        for p in self.phases:
            if p.frame_length not in VALID_FRAME_LENGTHS:
                raise InvalidArgument(f"phase {p.name}: frame_length {p.frame_length} not in {VALID_FRAME_LENGTHS}")
            if not 0.0 <= p.image_fraction <= 1.0:
                raise InvalidArgument(f"phase {p.name}: image_fraction outside [0, 1]")
            if p.iterations < 0 or p.batch_size < 1 or p.image_batch_size < 1:
                raise InvalidArgument(f"phase {p.name}: iterations/batch sizes invalid")
            if p.inject_resampling and p.frame_length != RESAMPLING_FRAME_LENGTH:
                raise InvalidArgument(f"phase {p.name}: resampling is only injected at T={RESAMPLING_FRAME_LENGTH}")
            if not self.temporal and (p.inflate_temporal or p.inject_resampling):
                raise InvalidArgument(f"phase {p.name}: temporal actions in a plan without temporal blocks")
            if p.frame_length > 1:
                if prev_video is not None and p.frame_length != 2 * prev_video:
                    raise InvalidArgument(f"phase {p.name}: T must double between video phases")
                if self.temporal and prev_video is None and not p.inflate_temporal:
                    raise InvalidArgument(f"phase {p.name}: first video phase must inflate the model")
                prev_video = p.frame_length
            if p.inflate_temporal:
                if inflated or p.frame_length == 1:
                    raise InvalidArgument(f"phase {p.name}: inflation happens once, on the first video phase")
                inflated = True

    def index(self, name: str) -> int:
        for i, p in enumerate(self.phases):
            if p.name == name:
                return i
        raise InvalidArgument(f"no phase named {name!r}")

    def to_dict(self) -> dict:
        return {"temporal": self.temporal, "phases": [asdict(p) for p in self.phases]}

    @classmethod
    def from_dict(cls, d: dict) -> "PhasePlan":
        return cls(tuple(PhaseSpec(**p) for p in d["phases"]), d.get("temporal", True))


DESK_ITERATIONS = {"image": 5000, "video": 1000}
PAPER_ITERATIONS = {"image": 1_000_000, "video": 150_000}


def make_plan(
    frame_lengths: Sequence[int] = VALID_FRAME_LENGTHS,
    scale: str = "desk",
    temporal: bool = True,
    image_fraction: float = 0.5,
    iterations: dict | None = None,
) -> PhasePlan:
    """Phase list for the given frame lengths (first must be 1).

    ``scale="paper"`` uses 1M image / 150K video iterations; ``"desk"`` uses
    5K / 1K. Dropping 8 from ``frame_lengths`` gives the skip-8 ablation.
    """
    its = dict({"desk": DESK_ITERATIONS, "paper": PAPER_ITERATIONS}[scale])
    its.update(iterations or {})
    phases = []
    first_video = True
    for T in frame_lengths:
        if T == 1:
            phases.append(PhaseSpec("image", 1, its["image"], 8, 1.0))
            continue
        phases.append(
            PhaseSpec(
                f"t{T}",
                T,
                its["video"],
                1,
                image_fraction,
                inflate_temporal=temporal and first_video,
                inject_resampling=temporal and T == RESAMPLING_FRAME_LENGTH,
            )
        )
        first_video = False
    return PhasePlan(tuple(phases), temporal)


# ---------------------------------------------------------------------------
# Batching


@dataclass
class Batch:
    x0: np.ndarray  # (B, T, H, W, 3)
    cond: TryOnConditioning
    is_image: bool
    scene_ids: list[int]
    frame_starts: list[int]

    @property
    def frame_length(self) -> int:
        return self.x0.shape[1]


def _prepared(ds) -> list[PreparedScene]:
    return [s if isinstance(s, PreparedScene) else prepare_scene(s) for s in ds]


class JointStream:
    """Endless stream of image-only or video-only batches.

    Each draw is an image batch with probability ``image_fraction``. Video
    batches hold ``frame_length`` consecutive frames of a single scene per
    sample; image batches hold single frames. The garment image comes from
    a random frame of the same scene.
    """

    def __init__(
        self,
        image_ds,
        video_ds,
        image_fraction: float,
        seed: int,
        batch_size: int = 1,
        frame_length: int = 8,
        image_batch_size: int = 8,
    ):
        if not 0.0 <= image_fraction <= 1.0:
            raise InvalidArgument("image_fraction must lie in [0, 1]")
        if image_fraction > 0 and not image_ds:
            raise InvalidArgument("image dataset is empty")
        if image_fraction < 1 and not video_ds:
            raise InvalidArgument("video dataset is empty")
        self.image_ds = _prepared(image_ds or [])
        self.video_ds = _prepared(video_ds or [])
        self.image_fraction = float(image_fraction)
        self.batch_size = batch_size
        self.frame_length = frame_length
        self.image_batch_size = image_batch_size
        self.rng = np.random.default_rng(seed)
        if image_fraction < 1:
            self._long_enough = [i for i, s in enumerate(self.video_ds) if s.scene.num_frames >= frame_length]
            if not self._long_enough:
                raise InvalidArgument(f"no video scene has {frame_length} frames")

    def __iter__(self) -> Iterator[Batch]:
        return self

    def __next__(self) -> Batch:
        if self.rng.random() < self.image_fraction:
            return self._draw(self.image_ds, range(len(self.image_ds)), self.image_batch_size, 1, True)
        return self._draw(self.video_ds, self._long_enough, self.batch_size, self.frame_length, False)

    def _draw(self, ds, candidates, B: int, T: int, is_image: bool) -> Batch:
        ids, starts, conds, frames = [], [], [], []
        for _ in range(B):
            i = int(candidates[self.rng.integers(len(candidates))])
            scene = ds[i]
            n = scene.scene.num_frames
            start = int(self.rng.integers(0, n - T + 1))
            g = int(self.rng.integers(0, n))
            ids.append(i)
            starts.append(start)
            conds.append(build_conditioning(scene, scene, g, start, T))
            frames.append(scene.scene.frames[start : start + T])
        return Batch(np.stack(frames), TryOnConditioning.stack(conds), is_image, ids, starts)

    def get_state(self) -> dict:
        return self.rng.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state


def make_joint_stream(image_ds, video_ds, image_fraction: float, seed: int, **kwargs) -> JointStream:
    return JointStream(image_ds, video_ds, image_fraction, seed, **kwargs)


# ---------------------------------------------------------------------------
# Single step


@dataclass
class TrainState:
    optimizer: torch.optim.Optimizer
    spec: OptimizerSpec
    schedule: DiffusionSchedule
    step: int = 0
    phase: str = ""
    last_nulls: dict = field(default_factory=dict)


def sample_null_flags(batch_size: int, rate: float, generator: torch.Generator) -> dict[str, torch.Tensor]:
    """Independently drop each conditioning input of each sample with prob ``rate``."""
    draws = torch.rand((len(INPUT_NAMES), batch_size), generator=generator)
    return {name: draws[k] < rate for k, name in enumerate(INPUT_NAMES)}


def batch_tensors(batch: Batch, dtype=torch.float32) -> tuple[torch.Tensor, TryOnConditioning]:
    return torch.as_tensor(batch.x0, dtype=dtype), batch.cond.to_torch(dtype=dtype)


def branch_for(model: TryOnDenoiser, batch: Batch) -> str:
    return "video" if (model.temporal_enabled and not batch.is_image) else "image"


def diffusion_loss(model, x0, cond, t, noise, nulls, sched: DiffusionSchedule, branch: str) -> torch.Tensor:
    z = add_noise(x0, t, noise, sched)
    pred = model(z, t, cond, nulls=nulls, branch=branch)
    target = target_for(model.config.prediction_target, x0, noise, t, sched)
    return torch.mean((pred - target) ** 2)


def train_step(model: TryOnDenoiser, batch: Batch, state: TrainState, dropout_rate: float, rng: torch.Generator):
    """One optimizer update; returns (model, loss)."""
    dtype = next(model.parameters()).dtype
    x0, cond = batch_tensors(batch, dtype)
    B = x0.shape[0]
    t = torch.randint(0, state.schedule.num_steps, (B,), generator=rng)
    noise = torch.randn(x0.shape, generator=rng, dtype=dtype)
    nulls = sample_null_flags(B, dropout_rate, rng)
    state.last_nulls = nulls
    branch = branch_for(model, batch)
    model.train()
    loss = diffusion_loss(model, x0, cond, t, noise, nulls, state.schedule, branch)
    lr = lr_at(state.step, state.spec)
    if not torch.isfinite(loss):
        raise TrainingDivergence(
            f"non-finite loss at step {state.step} of phase {state.phase!r}",
            {"step": state.step, "phase": state.phase, "lr": lr, "branch": branch,
             "t_min": int(t.min()), "t_max": int(t.max()), "loss": float(loss.detach())},
        )
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    state.optimizer.step()
    state.step += 1
    return model, float(loss.detach())


@torch.no_grad()
def validation_loss(model: TryOnDenoiser, batch: Batch, sched: DiffusionSchedule, seed: int = 0, branch: str | None = None) -> float:
    """Loss with fixed timesteps and noise drawn from ``seed``; no dropout."""
    dtype = next(model.parameters()).dtype
    x0, cond = batch_tensors(batch, dtype)
    gen = torch.Generator().manual_seed(seed)
    t = torch.randint(0, sched.num_steps, (x0.shape[0],), generator=gen)
    noise = torch.randn(x0.shape, generator=gen, dtype=dtype)
    model.eval()
    return float(diffusion_loss(model, x0, cond, t, noise, None, sched, branch or branch_for(model, batch)))


# ---------------------------------------------------------------------------
# Progressive orchestration


@dataclass
class TrainingRun:
    """Everything run_progressive needs besides the plan and data."""

    model_config: ModelConfig
    schedule: DiffusionSchedule
    seed: int = 0
    dropout_rate: float = DEFAULT_DROPOUT
    optimizer_kind: str = "adam"
    config_hash: str = ""
    checkpoint_every: int = 0
    extra: dict = field(default_factory=dict)


def _phase_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, 1000 + index]).generate_state(1)[0])


def _append_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _save_phase(model, optimizer, stream, gen, out: Path, phase: PhaseSpec, index: int, step: int, run: TrainingRun):
    extra = dict(run.extra)
    extra.update(
        {
            "config_hash": run.config_hash,
            "phase_index": index,
            "iterations": phase.iterations,
            "completed": step >= phase.iterations,
            "schedule": run.schedule.to_dict(),
            "loss_target": model.config.prediction_target,
        }
    )
    path = save_checkpoint(model, out / phase.name, phase=phase.name, step=step, extra=extra)
    torch.save(
        {
            "optimizer": optimizer.state_dict(),
            "stream_state": stream.get_state(),
            "torch_rng": gen.get_state(),
            "step": step,
        },
        path / "training_state.pt",
    )
    return path


def load_training_state(path) -> dict:
    return torch.load(Path(path) / "training_state.pt", weights_only=False)


def _prepare_model_for_phase(model: TryOnDenoiser | None, phase: PhaseSpec, run: TrainingRun, index: int) -> TryOnDenoiser:
    if model is None:
        model = build_model(replace(run.model_config, temporal_enabled=False, temporal_resampling_enabled=False), seed=run.seed)
    if phase.inflate_temporal:
        model = inflate_temporal(model, "identity", seed=_phase_seed(run.seed, index))
    if phase.inject_resampling:
        model = inject_temporal_resampling(model, seed=_phase_seed(run.seed, index))
    return with_frame_length(model, phase.frame_length)


def run_progressive(
    plan: PhasePlan,
    image_ds,
    video_ds,
    out_dir,
    run: TrainingRun,
    only_phase: str | None = None,
    resume: str | Path | None = None,
    progress=None,
) -> list[Path]:
    """Train the plan's phases in order, writing one checkpoint per phase.

    ``only_phase`` trains a single phase, initialized from the previous
    phase's checkpoint in ``out_dir``. ``resume`` continues from a checkpoint
    written by this function, at its recorded step.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.jsonl"
    image_ds = _prepared(image_ds)
    video_ds = _prepared(video_ds)
    model: TryOnDenoiser | None = None
    start_index, start_step, resume_state = 0, 0, None

    if resume is not None:
        manifest = read_manifest(resume)
        if run.config_hash and manifest["extra"].get("config_hash") != run.config_hash:
            raise InvalidState(f"checkpoint {resume} was written by a different config")
        model, _ = load_checkpoint(resume)
        start_index = plan.index(manifest["phase"])
        start_step = manifest["step"]
        resume_state = load_training_state(resume)
        if start_step >= plan.phases[start_index].iterations:
            start_index, start_step, resume_state = start_index + 1, 0, None
    if only_phase is not None:
        idx = plan.index(only_phase)
        if resume is None:
            start_index, start_step = idx, 0
            if idx > 0:
                prev = out / plan.phases[idx - 1].name
                manifest = read_manifest(prev)
                if run.config_hash and manifest["extra"].get("config_hash") != run.config_hash:
                    raise InvalidState(f"checkpoint {prev} was written by a different config")
                model, _ = load_checkpoint(prev)
        elif start_index != idx:
            raise InvalidState(f"resume checkpoint belongs to phase index {start_index}, not {only_phase!r}")
        end_index = idx + 1
    else:
        end_index = len(plan.phases)

    written = []
    for index in range(start_index, end_index):
        phase = plan.phases[index]
        resuming = resume_state is not None and index == start_index
        if not resuming:
            model = _prepare_model_for_phase(model, phase, run, index)
        spec = OptimizerSpec.scaled(phase.iterations, kind=run.optimizer_kind, lr_start=phase.lr_start, lr_end=phase.lr_end)
        optimizer = make_optimizer(model, spec)
        stream = JointStream(
            image_ds,
            video_ds,
            phase.image_fraction,
            _phase_seed(run.seed, index),
            batch_size=phase.batch_size,
            frame_length=phase.frame_length,
            image_batch_size=phase.image_batch_size,
        )
        gen = torch.Generator().manual_seed(_phase_seed(run.seed, 10_000 + index))
        step = 0
        if resuming:
            optimizer.load_state_dict(resume_state["optimizer"])
            stream.set_state(resume_state["stream_state"])
            gen.set_state(resume_state["torch_rng"])
            step = start_step
        state = TrainState(optimizer, spec, run.schedule, step=step, phase=phase.name)
        rows = []
        while state.step < phase.iterations:
            batch = next(stream)
            lr = lr_at(state.step, spec)
            _, loss = train_step(model, batch, state, run.dropout_rate, gen)
            rows.append({"phase": phase.name, "step": state.step - 1, "loss": loss, "lr": lr, "image_batch": batch.is_image})
            if progress is not None:
                progress(phase.name, state.step, loss)
            if len(rows) >= 200:
                _append_jsonl(metrics_path, rows)
                rows = []
            if run.checkpoint_every and state.step % run.checkpoint_every == 0 and state.step < phase.iterations:
                _append_jsonl(metrics_path, rows)
                rows = []
                _save_phase(model, optimizer, stream, gen, out, phase, index, state.step, run)
        _append_jsonl(metrics_path, rows)
        written.append(_save_phase(model, optimizer, stream, gen, out, phase, index, state.step, run))
        log.info("phase %s done after %d steps", phase.name, state.step)
    return written


def read_metrics(out_dir) -> list[dict]:
    path = Path(out_dir) / "metrics.jsonl"
    if not path.exists():
        return []
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def loss_reduction(metrics: list[dict], phase: str, window: int = 100) -> float:
    """1 - mean(last window) / mean(first window) for a phase's losses."""
    losses = [m["loss"] for m in metrics if m["phase"] == phase]
    if len(losses) < 2 * window:
        raise InvalidArgument(f"phase {phase!r} logged {len(losses)} steps, need {2 * window}")
    first = float(np.mean(losses[:window]))
    last = float(np.mean(losses[-window:]))
    return 1.0 - last / first if first > 0 and math.isfinite(first) else float("nan")
