"""Command-line entry points: gen-data, train, sample, eval.

Exit codes: 0 success, 2 configuration or validation error, 3 runtime,
I/O or numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .data import generate_dataset, load_dataset, load_scene_ref, pair_for_eval, save_dataset, build_conditioning
from .errors import InvalidArgument, InvalidState, NumericalFailure, TrainingDivergence, UndefinedScore
from .guidance import parse_weights
from .io import atomic_write_bytes, npz_bytes, write_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

# Longest clip the temporal blocks handle without resampling.
MAX_FRAMES_WITHOUT_RESAMPLING = 32

log = logging.getLogger("vton_lab")


def _out(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# gen-data


def cmd_gen_data(args, cfg: RunConfig) -> int:
    d = cfg.data
    num = d.num_scenes if args.num_scenes is None else args.num_scenes
    seed = d.seed if args.seed is None else args.seed
    if num < 0:
        raise InvalidArgument("--num-scenes must be >= 0")
    scenes = generate_dataset(num, seed, d.num_frames, d.height, d.width, workers=args.workers)
    params = {"num_scenes": num, "seed": seed, "num_frames": d.num_frames, "height": d.height, "width": d.width}
    save_dataset(scenes, args.out, params)
    _out(f"wrote {len(scenes)} scenes ({d.num_frames} frames, {d.height}x{d.width}) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _data_dir(args, cfg: RunConfig) -> Path:
    path = args.data or cfg.data.dir
    if path is None:
        raise InvalidArgument("no dataset: pass --data or set data.dir in the config")
    return Path(path)


def cmd_train(args, cfg: RunConfig) -> int:
    from .model.checkpoint import read_manifest
    from .training import TrainingRun, run_progressive

    data_dir = _data_dir(args, cfg)
    scenes = load_dataset(data_dir)
    if not scenes:
        raise InvalidArgument(f"dataset {data_dir} has no scenes")
    train_hash = cfg.training_hash()
    if args.resume:
        stored = read_manifest(args.resume)["extra"].get("config_hash")
        if stored != train_hash:
            raise InvalidArgument(f"--resume: checkpoint {args.resume} was trained with a different config (hash {stored})")
    if args.phase:
        cfg.plan.index(args.phase)
    longest = max(p.frame_length for p in cfg.plan.phases if args.phase in (None, p.name))
    short = [s.name for s in scenes if s.num_frames < longest]
    if short and longest > 1:
        raise InvalidArgument(f"{len(short)} scenes have fewer than {longest} frames (e.g. {short[0]})")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "run_config.json", cfg.to_dict())
    write_json(
        out / "run.json",
        {
            "config_hash": cfg.config_hash(),
            "training_hash": train_hash,
            "data_dir": str(data_dir),
            "num_scenes": len(scenes),
            "loss_target": cfg.model.prediction_target,
            "loss_target_note": "loss on epsilon by default; v-prediction selectable via model.prediction_target",
        },
    )
    run = TrainingRun(
        model_config=cfg.model,
        schedule=cfg.schedule.build(),
        seed=cfg.seed,
        dropout_rate=cfg.training.dropout_rate,
        optimizer_kind=cfg.training.optimizer,
        config_hash=train_hash,
        checkpoint_every=cfg.training.checkpoint_every,
    )

    def progress(phase, step, loss):
        if step % args.log_every == 0:
            print(f"[{phase}] step {step} loss {loss:.4f}", file=sys.stderr, flush=True)

    paths = run_progressive(cfg.plan, scenes, scenes, out, run, only_phase=args.phase, resume=args.resume, progress=progress)
    for p in paths:
        _out(f"checkpoint {p}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sample


def check_frames(model, frames: int) -> None:
    """Validate a requested clip length against a checkpoint's capabilities."""
    c = model.config
    if frames < 1:
        raise InvalidArgument("--frames must be >= 1")
    if c.temporal_resampling_enabled and frames % 2:
        raise InvalidArgument(f"--frames {frames}: temporal resampling needs an even frame count")
    if frames > MAX_FRAMES_WITHOUT_RESAMPLING and not c.temporal_resampling_enabled:
        raise InvalidState(
            f"--frames {frames} needs temporal resampling; use a checkpoint from the t64 phase "
            f"(this one is from T={c.frame_length})"
        )


def write_gif(video: np.ndarray, path: Path, fps: int = 8) -> None:
    from PIL import Image

    frames = ((np.clip(video, -1, 1) + 1) * 127.5).round().astype(np.uint8)
    images = [Image.fromarray(f) for f in frames]
    images[0].save(path, save_all=True, append_images=images[1:], duration=int(1000 / fps), loop=0)


def cmd_sample(args, cfg: RunConfig) -> int:
    from .model.checkpoint import checkpoint_hash, load_checkpoint
    from .sampler import ddpm_sample

    model, manifest = load_checkpoint(args.ckpt)
    model.eval()
    check_frames(model, args.frames)
    person, _ = load_scene_ref(args.person)
    garment, gframe = load_scene_ref(args.garment)
    if gframe is None:
        raise InvalidArgument("--garment must be SCENE:FRAME")
    if args.frames > person.num_frames:
        raise InvalidArgument(f"--frames {args.frames} exceeds the person scene's {person.num_frames} frames")
    if person.size != garment.size:
        raise InvalidArgument(f"person {person.size} and garment {garment.size} scenes differ in size")
    overrides = {}
    if args.cfg_weights:
        overrides["cfg_weights"] = parse_weights(args.cfg_weights)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.steps is not None:
        overrides["num_steps"] = args.steps
    scfg = cfg.sampler.build(model.config.prediction_target, **overrides)
    sched_dict = manifest["extra"].get("schedule")
    from .diffusion import DiffusionSchedule

    sched = DiffusionSchedule.from_dict(sched_dict) if sched_dict else cfg.schedule.build()
    cond = build_conditioning(person, garment, gframe, 0, args.frames)
    H, W = person.size
    video = ddpm_sample(model, cond, (1, args.frames, H, W, 3), scfg, sched)[0].numpy().astype(np.float32)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(out / "video.npz", npz_bytes({"video": video}))
    write_gif(video, out / "video.gif")
    meta = scfg.metadata(checkpoint_hash(args.ckpt))
    meta.update(
        {
            "checkpoint": str(args.ckpt),
            "phase": manifest["phase"],
            "person": args.person,
            "garment": args.garment,
            "frames": args.frames,
            "sampler": scfg.to_dict(),
            "schedule": sched.to_dict(),
        }
    )
    write_json(out / "metadata.json", meta)
    _out(f"wrote {args.frames}-frame video to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args, cfg: RunConfig) -> int:
    from dataclasses import replace

    from .evaluation import run_ablation_suite
    from .model.checkpoint import read_manifest

    data_dir = _data_dir(args, cfg)
    if not data_dir.exists():
        raise FileNotFoundError(f"data directory not found: {data_dir}")
    scenes = load_dataset(data_dir)
    ecfg = cfg.eval
    if args.steps is not None:
        ecfg = replace(ecfg, sampling_steps=args.steps)
    if args.workers is not None:
        ecfg = replace(ecfg, workers=args.workers)
    checkpoints = {}
    for i, ck in enumerate(args.ckpt):
        if not (Path(ck) / "manifest.json").exists():
            raise InvalidArgument(f"checkpoint {ck} not found")
        name = Path(ck).name
        checkpoints[name if name not in checkpoints else f"{name}#{i}"] = ck
    sched_dict = read_manifest(args.ckpt[0])["extra"].get("schedule")
    from .diffusion import DiffusionSchedule

    sched = DiffusionSchedule.from_dict(sched_dict) if sched_dict else cfg.schedule.build()
    pairs = pair_for_eval(scenes, ecfg.seed, ecfg.pairs_per_person)
    table = run_ablation_suite(checkpoints, scenes, pairs, ecfg, sched)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(out / "scores.json", table.to_json().encode())
    atomic_write_bytes(out / "scores.txt", table.to_text().encode())
    _out(table.to_text())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vton-lab", description="Synthetic video try-on diffusion toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic scene dataset")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--num-scenes", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="run the progressive training plan")
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--data")
    t.add_argument("--phase")
    t.add_argument("--resume")
    t.add_argument("--log-every", type=int, default=100)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="sample a try-on video")
    s.add_argument("--config")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--person", required=True, help="path to a scene file")
    s.add_argument("--garment", required=True, help="SCENE:FRAME")
    s.add_argument("--frames", type=int, default=16)
    s.add_argument("--cfg-weights", help="w_null,w_p,w_g,w_full")
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("eval", help="score one or more checkpoints")
    e.add_argument("--config")
    e.add_argument("--ckpt", action="append", required=True)
    e.add_argument("--data")
    e.add_argument("--out", required=True)
    e.add_argument("--steps", type=int)
    e.add_argument("--workers", type=int)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (InvalidArgument, InvalidState) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TrainingDivergence, NumericalFailure, UndefinedScore, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, TrainingDivergence):
            print(f"diagnostics: {exc.diagnostics}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
