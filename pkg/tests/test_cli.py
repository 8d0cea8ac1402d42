import json
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from conftest import TINY
from vton_lab.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, check_frames, main
from vton_lab.errors import InvalidArgument, InvalidState
from vton_lab.model import build_model

CONFIG = {
    "model": TINY.to_dict(),
    "schedule": {"num_steps": 50},
    "plan": {"frame_lengths": [1, 8], "iterations": {"image": 3, "video": 2}},
    "sampler": {"num_steps": 3},
    "data": {"num_scenes": 4, "seed": 1, "num_frames": 8, "height": 16, "width": 16},
    "eval": {"num_frames": 4, "sampling_steps": 2},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A dataset and a two-phase run shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(CONFIG))
    assert main(["gen-data", "--config", str(cfg), "--out", str(root / "data")]) == EXIT_OK
    assert main(["train", "--config", str(cfg), "--data", str(root / "data"), "--out", str(root / "run")]) == EXIT_OK
    return root


def test_gen_data_counts_and_determinism(tmp_path, workdir):
    cfg = str(workdir / "config.json")
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path / "ten"), "--num-scenes", "10"]) == EXIT_OK
    manifest = json.loads((tmp_path / "ten" / "manifest.json").read_text())
    assert manifest["num_scenes"] == 10 and len(manifest["scenes"]) == 10
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path / "again")]) == EXIT_OK
    for name in ("scene_00000.npz", "scene_00003.npz"):
        assert (tmp_path / "again" / name).read_bytes() == (workdir / "data" / name).read_bytes()
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path / "none"), "--num-scenes", "0"]) == EXIT_OK
    assert json.loads((tmp_path / "none" / "manifest.json").read_text())["num_scenes"] == 0
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path / "neg"), "--num-scenes", "-1"]) == EXIT_CONFIG


def test_train_outputs(workdir):
    run = workdir / "run"
    assert (run / "image" / "manifest.json").exists() and (run / "t8" / "manifest.json").exists()
    meta = json.loads((run / "run.json").read_text())
    assert meta["loss_target"] == "epsilon" and meta["num_scenes"] == 4
    assert json.loads((run / "run_config.json").read_text())["plan"]["phases"][1]["name"] == "t8"


def test_train_single_phase_and_resume_checks(tmp_path, workdir):
    cfg, data = str(workdir / "config.json"), str(workdir / "data")
    out = tmp_path / "one"
    assert main(["train", "--config", cfg, "--data", data, "--out", str(out), "--phase", "image"]) == EXIT_OK
    assert sorted(p.name for p in out.iterdir() if (p / "manifest.json").exists()) == ["image"]
    other = tmp_path / "other.json"
    other.write_text(json.dumps(dict(CONFIG, seed=7)))
    code = main(["train", "--config", str(other), "--data", data, "--out", str(tmp_path / "x"), "--resume", str(out / "image")])
    assert code == EXIT_CONFIG
    assert main(["train", "--config", cfg, "--data", data, "--out", str(tmp_path / "y"), "--phase", "nope"]) == EXIT_CONFIG
    assert main(["train", "--config", cfg, "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "z")]) == EXIT_RUNTIME


def _sample(workdir, out, *extra):
    return main(
        [
            "sample",
            "--config", str(workdir / "config.json"),
            "--ckpt", str(workdir / "run" / "t8"),
            "--person", str(workdir / "data" / "scene_00000.npz"),
            "--garment", str(workdir / "data" / "scene_00001.npz") + ":3",
            "--frames", "4",
            "--out", str(out),
            *extra,
        ]
    )


def test_sample_deterministic_with_metadata(tmp_path, workdir):
    assert _sample(workdir, tmp_path / "a", "--seed", "5", "--cfg-weights", "1,1,3,1") == EXIT_OK
    assert _sample(workdir, tmp_path / "b", "--seed", "5", "--cfg-weights", "1,1,3,1") == EXIT_OK
    va = np.load(tmp_path / "a" / "video.npz")["video"]
    vb = np.load(tmp_path / "b" / "video.npz")["video"]
    assert va.shape == (4, 16, 16, 3) and np.array_equal(va, vb)
    assert (tmp_path / "a" / "video.gif").stat().st_size > 0
    meta = json.loads((tmp_path / "a" / "metadata.json").read_text())
    assert meta["cfg_weights"] == [1, 1, 3, 1] and meta["seed"] == 5 and meta["steps"] == 3
    assert meta["checkpoint_hash"]
    assert _sample(workdir, tmp_path / "c", "--seed", "6") == EXIT_OK
    assert not np.array_equal(va, np.load(tmp_path / "c" / "video.npz")["video"])


def test_sample_rejects_bad_requests(tmp_path, workdir, capsys):
    assert _sample(workdir, tmp_path / "x", "--frames", "64") == EXIT_CONFIG
    assert "t64" in capsys.readouterr().err
    assert _sample(workdir, tmp_path / "x", "--cfg-weights", "1,2") == EXIT_CONFIG
    assert _sample(workdir, tmp_path / "x", "--frames", "9") == EXIT_CONFIG


def test_check_frames_with_resampling():
    cfg = replace(TINY, temporal_enabled=True, temporal_resampling_enabled=True, frame_length=64)
    model = build_model(cfg, seed=0)
    check_frames(model, 64)
    with pytest.raises(InvalidArgument):
        check_frames(model, 7)
    with pytest.raises(InvalidState):
        check_frames(build_model(TINY, seed=0), 33)
    check_frames(build_model(TINY, seed=0), 32)


def test_eval_scores(tmp_path, workdir):
    args = ["eval", "--config", str(workdir / "config.json"), "--data", str(workdir / "data"), "--ckpt", str(workdir / "run" / "t8")]
    assert main([*args, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main([*args, "--out", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a" / "scores.json").read_text()
    assert a == (tmp_path / "b" / "scores.json").read_text()
    d = json.loads(a)
    assert d["columns"] == ["fid", "fvd", "garment_sim"] and len(d["rows"]) == 1
    assert set(d["rows"][0]["scores"]) == {"fid", "fvd", "garment_sim"}
    assert "garment_sim" in (tmp_path / "a" / "scores.txt").read_text()
    two = [*args, "--ckpt", str(workdir / "run" / "image"), "--out", str(tmp_path / "c")]
    assert main(two) == EXIT_OK
    assert [r["name"] for r in json.loads((tmp_path / "c" / "scores.json").read_text())["rows"]] == ["t8", "image"]


def test_eval_errors(tmp_path, workdir):
    cfg = str(workdir / "config.json")
    assert main(["eval", "--config", cfg, "--data", str(tmp_path / "nodata"), "--ckpt", str(workdir / "run" / "t8"), "--out", str(tmp_path / "o")]) == EXIT_RUNTIME
    assert main(["eval", "--config", cfg, "--data", str(workdir / "data"), "--ckpt", str(tmp_path / "nock"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mystery": 1}))
    assert main(["gen-data", "--config", str(bad), "--out", str(tmp_path / "d")]) == EXIT_CONFIG


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "vton_lab", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("gen-data", "train", "sample", "eval"):
        assert cmd in res.stdout
