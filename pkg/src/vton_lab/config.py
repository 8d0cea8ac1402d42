"""Run configuration: one JSON document tying model, schedule, plan, sampler, data and eval together.

Unknown keys are rejected at every level. Loading then serializing gives a
canonical document, so ``load(dump(load(x))) == load(x)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

from .data import NUM_JOINTS
from .diffusion import DiffusionSchedule, make_schedule
from .errors import InvalidArgument
from .evaluation import EvalConfig
from .guidance import CUSTOM_WEIGHTS, make_tryon_schedule
from .io import dumps_json, read_json, sha256_json
from .model.denoiser import ModelConfig
from .sampler import DEFAULT_SAMPLING_STEPS, SamplerConfig
from .training import PhasePlan, make_plan

FORMAT_VERSION = "1"


def _strict(cls, d: Mapping, where: str):
    if not isinstance(d, Mapping):
        raise InvalidArgument(f"{where}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise InvalidArgument(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**d)


@dataclass(frozen=True)
class ScheduleParams:
    num_steps: int = 1000
    kind: str = "cosine"

    def build(self) -> DiffusionSchedule:
        return make_schedule(self.num_steps, self.kind)


@dataclass(frozen=True)
class TrainingParams:
    dropout_rate: float = 0.1
    optimizer: str = "adam"
    checkpoint_every: int = 0


@dataclass(frozen=True)
class SamplerParams:
    num_steps: int = DEFAULT_SAMPLING_STEPS
    seed: int = 0
    cfg_weights: tuple = CUSTOM_WEIGHTS
    clip_intermediate: bool = False
    strict_guidance: bool = True

    def build(self, prediction_target: str, **overrides) -> SamplerConfig:
        p = replace(self, **overrides)
        return SamplerConfig(
            num_steps=p.num_steps,
            seed=p.seed,
            guidance=make_tryon_schedule(*p.cfg_weights),
            prediction_target=prediction_target,
            clip_intermediate=p.clip_intermediate,
            strict_guidance=p.strict_guidance,
        )


@dataclass(frozen=True)
class DataParams:
    dir: str | None = None
    num_scenes: int = 16
    seed: int = 0
    num_frames: int = 64
    height: int = 32
    width: int = 24


def _plan_from(d: Mapping) -> PhasePlan:
    """Either an explicit ``phases`` list or a preset description."""
    if "phases" in d:
        if set(d) - {"phases", "temporal"}:
            raise InvalidArgument(f"plan: unknown keys {sorted(set(d) - {'phases', 'temporal'})}")
        return PhasePlan.from_dict(d)
    allowed = {"frame_lengths", "scale", "temporal", "image_fraction", "iterations"}
    if set(d) - allowed:
        raise InvalidArgument(f"plan: unknown keys {sorted(set(d) - allowed)}")
    kw = dict(d)
    if "frame_lengths" in kw:
        kw["frame_lengths"] = tuple(kw["frame_lengths"])
    return make_plan(**kw)


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=lambda: ModelConfig(base_channels=16, num_dit_blocks=2))
    schedule: ScheduleParams = field(default_factory=ScheduleParams)
    plan: PhasePlan = field(default_factory=make_plan)
    training: TrainingParams = field(default_factory=TrainingParams)
    sampler: SamplerParams = field(default_factory=SamplerParams)
    data: DataParams = field(default_factory=DataParams)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    format_version: str = FORMAT_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        m, d = self.model, self.data
        if self.format_version != FORMAT_VERSION:
            raise InvalidArgument(f"format_version: unsupported {self.format_version!r}")
        if m.image_channels != 3:
            raise InvalidArgument("model.image_channels: synthetic data is RGB, must be 3")
        if m.pose_channels != NUM_JOINTS:
            raise InvalidArgument(f"model.pose_channels: must equal the {NUM_JOINTS} synthetic joints")
        if len(self.sampler.cfg_weights) != 4:
            raise InvalidArgument("sampler.cfg_weights: need 4 weights (w_null, w_p, w_g, w_full)")
        factor = 2 ** len(m.channel_multipliers)
        if d.height % factor or d.width % factor:
            raise InvalidArgument(f"data.height/width: must be divisible by {factor}")
        if d.num_scenes < 0:
            raise InvalidArgument("data.num_scenes: must be >= 0")
        longest = max(p.frame_length for p in self.plan.phases)
        if d.num_frames < max(longest, self.eval.num_frames):
            raise InvalidArgument(
                f"data.num_frames: {d.num_frames} is shorter than the longest clip ({max(longest, self.eval.num_frames)})"
            )
        resampling = any(p.inject_resampling for p in self.plan.phases)
        if resampling and self.eval.num_frames % 2:
            raise InvalidArgument("eval.num_frames: temporal resampling needs an even frame count")
        if not 0.0 <= self.training.dropout_rate <= 1.0:
            raise InvalidArgument("training.dropout_rate: must lie in [0, 1]")
        if not 1 <= self.sampler.num_steps <= self.schedule.num_steps:
            raise InvalidArgument("sampler.num_steps: must lie in [1, schedule.num_steps]")
        if not 1 <= self.eval.sampling_steps <= self.schedule.num_steps:
            raise InvalidArgument("eval.sampling_steps: must lie in [1, schedule.num_steps]")
        if self.schedule.num_steps < 2 or self.schedule.kind not in ("cosine", "linear"):
            raise InvalidArgument("schedule: num_steps >= 2 and kind in {cosine, linear}")

    # -- serialization

    def to_dict(self) -> dict:
        s = asdict(self.sampler)
        s["cfg_weights"] = list(self.sampler.cfg_weights)
        return {
            "format_version": self.format_version,
            "seed": self.seed,
            "model": self.model.to_dict(),
            "schedule": asdict(self.schedule),
            "plan": self.plan.to_dict(),
            "training": asdict(self.training),
            "sampler": s,
            "data": asdict(self.data),
            "eval": self.eval.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        if not isinstance(d, Mapping):
            raise InvalidArgument("config: expected a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgument(f"config: unknown keys {sorted(unknown)}")
        kw = {}
        try:
            if "model" in d:
                kw["model"] = ModelConfig.from_dict(d["model"])
            if "schedule" in d:
                kw["schedule"] = _strict(ScheduleParams, d["schedule"], "schedule")
            if "plan" in d:
                kw["plan"] = _plan_from(d["plan"])
            if "training" in d:
                kw["training"] = _strict(TrainingParams, d["training"], "training")
            if "sampler" in d:
                s = dict(d["sampler"])
                if "cfg_weights" in s:
                    s["cfg_weights"] = tuple(float(w) for w in s["cfg_weights"])
                kw["sampler"] = _strict(SamplerParams, s, "sampler")
            if "data" in d:
                kw["data"] = _strict(DataParams, d["data"], "data")
            if "eval" in d:
                kw["eval"] = EvalConfig.from_dict(d["eval"])
        except TypeError as exc:
            raise InvalidArgument(f"config: {exc}") from None
        for key in ("seed", "format_version"):
            if key in d:
                kw[key] = d[key]
        return cls(**kw)

    def dumps(self) -> str:
        return dumps_json(self.to_dict())

    # -- hashes

    def training_hash(self) -> str:
        """Hash of everything that determines trained weights."""
        d = self.to_dict()
        data = dict(d["data"])
        data.pop("dir")
        return sha256_json({k: d[k] for k in ("model", "schedule", "plan", "training", "seed")} | {"data": data})

    def config_hash(self) -> str:
        return sha256_json(self.to_dict())


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = read_json(path)
    except ValueError as exc:
        raise InvalidArgument(f"{path}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(raw)
