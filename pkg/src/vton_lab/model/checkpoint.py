"""Checkpoint directories: manifest.json plus one .npz per parameter group."""

from __future__ import annotations

import shutil
import tempfile
from pathlib import Path

import numpy as np
import torch

from ..errors import InvalidState
from ..io import read_json, read_npz, sha256_file, write_json, write_npz
from .denoiser import PARAM_GROUPS, ModelConfig, TryOnDenoiser, _seeded_build

FORMAT_VERSION = "1"


def save_checkpoint(model: TryOnDenoiser, path, phase: str = "", step: int = 0, extra: dict | None = None) -> Path:
    """Write a checkpoint directory atomically (temp dir, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=path.parent, prefix=f".{path.name}."))
    try:
        inventory = {}
        for group, params in model.parameter_groups().items():
            arrays = {name: p.detach().cpu().numpy() for name, p in params.items()}
            write_npz(tmp / f"{group}.npz", arrays)
            inventory[group] = {
                "file": f"{group}.npz",
                "params": {name: list(a.shape) for name, a in sorted(arrays.items())},
            }
        write_json(
            tmp / "manifest.json",
            {
                "format_version": FORMAT_VERSION,
                "config": model.config.to_dict(),
                "phase": phase,
                "frame_length": model.config.frame_length,
                "step": int(step),
                "dtype": str(next(model.parameters()).dtype).replace("torch.", ""),
                "groups": inventory,
                "extra": extra or {},
            },
        )
        if path.exists():
            shutil.rmtree(path)
        tmp.rename(path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return path


def read_manifest(path) -> dict:
    manifest_path = Path(path) / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no checkpoint manifest at {manifest_path}")
    manifest = read_json(manifest_path)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise InvalidState(f"{path}: unsupported checkpoint format {manifest.get('format_version')!r}")
    return manifest


def load_checkpoint(path) -> tuple[TryOnDenoiser, dict]:
    """Rebuild the model from its manifest and load every parameter group.

    The stored inventory must match the parameters the config produces.
    """
    path = Path(path)
    manifest = read_manifest(path)
    config = ModelConfig.from_dict(manifest["config"])
    model = _seeded_build(config, 0)
    model = model.to(getattr(torch, manifest.get("dtype", "float32")))
    expected = {g: {n: list(p.shape) for n, p in sorted(ps.items())} for g, ps in model.parameter_groups().items()}
    stored = {g: manifest["groups"].get(g, {}).get("params", {}) for g in PARAM_GROUPS}
    if expected != stored:
        bad = [g for g in PARAM_GROUPS if expected[g] != stored[g]]
        raise InvalidState(f"{path}: parameter inventory does not match config in groups {bad}")
    state = {}
    for group in PARAM_GROUPS:
        state.update(read_npz(path / manifest["groups"][group]["file"]))
    with torch.no_grad():
        for name, p in model.named_parameters():
            p.copy_(torch.from_numpy(np.asarray(state[name])))
    return model, manifest


def checkpoint_hash(path) -> str:
    """Content hash over the manifest and all group files."""
    import hashlib

    path = Path(path)
    h = hashlib.sha256()
    for f in sorted(path.glob("*.npz")) + [path / "manifest.json"]:
        h.update(f.name.encode())
        h.update(sha256_file(f).encode())
    return h.hexdigest()
