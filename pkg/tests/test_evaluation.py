import colorsys
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TINY
from vton_lab.data import TOP, generate_dataset, pair_for_eval
from vton_lab.diffusion import make_schedule
from vton_lab.errors import InvalidArgument, NumericalFailure, UndefinedScore
from vton_lab.evaluation import (
    SCORE_COLUMNS,
    ColorSegmenter,
    EvalConfig,
    FrameFeatureExtractor,
    GaussianStats,
    HueHistogramEmbedder,
    MaskSegmenter,
    VideoFeatureExtractor,
    fid_frames,
    frechet_distance,
    fvd_videos,
    garment_similarity,
    rgb_to_hsv,
    run_ablation_suite,
)
from vton_lab.model import build_model, inflate_temporal


@pytest.fixture(scope="module")
def extractors():
    fx = FrameFeatureExtractor.random(seed=0)
    return fx, VideoFeatureExtractor(fx)


@pytest.fixture(scope="module")
def clips():
    return [s.frames for s in generate_dataset(24, 31, 8, 16, 16)]


# -- Fréchet distance ---------------------------------------------------------


def test_frechet_closed_forms():
    one = GaussianStats([0.0], [[1.0]])
    assert frechet_distance(one, GaussianStats([3.0], [[1.0]])) == pytest.approx(9.0)
    assert frechet_distance(one, GaussianStats([0.0], [[4.0]])) == pytest.approx(1.0)
    a = GaussianStats([1.0, -2.0], [[2.0, 0.5], [0.5, 1.0]])
    assert frechet_distance(a, a) == pytest.approx(0.0, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), d=st.integers(1, 6))
def test_frechet_symmetric_and_nonnegative(seed, d):
    rng = np.random.default_rng(seed)
    a = GaussianStats.from_features(rng.normal(size=(20, d)))
    b = GaussianStats.from_features(rng.normal(1.0, 2.0, size=(20, d)))
    ab, ba = frechet_distance(a, b), frechet_distance(b, a)
    assert ab >= 0 and ab == pytest.approx(ba, rel=1e-6, abs=1e-9)


def test_frechet_matches_diagonal_formula():
    rng = np.random.default_rng(0)
    va, vb = rng.uniform(0.5, 2, 5), rng.uniform(0.5, 2, 5)
    ma, mb = rng.normal(size=5), rng.normal(size=5)
    ref = np.sum((ma - mb) ** 2) + np.sum(va + vb - 2 * np.sqrt(va * vb))
    assert frechet_distance(GaussianStats(ma, np.diag(va)), GaussianStats(mb, np.diag(vb))) == pytest.approx(ref)


def test_frechet_errors():
    with pytest.raises(InvalidArgument):
        frechet_distance(GaussianStats([0.0], [[1.0]]), GaussianStats([0.0, 0.0], np.eye(2)))
    with pytest.raises(NumericalFailure):
        frechet_distance(GaussianStats([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]]), GaussianStats([0.0, 0.0], np.eye(2)))
    with pytest.raises(InvalidArgument):
        GaussianStats.from_features(np.zeros((0, 3)))
    small = GaussianStats.from_features(np.random.default_rng(0).normal(size=(3, 10)))
    assert small.rank_deficient and np.linalg.eigvalsh(small.cov).min() > 0


# -- FID / FVD ----------------------------------------------------------------


def test_extractor_identity_and_determinism(extractors, clips):
    fx, vfx = extractors
    again = FrameFeatureExtractor.random(seed=0)
    assert fx.identity == again.identity and fx.identity["dim"] == 64
    np.testing.assert_array_equal(fx(clips[0]), again(clips[0]))
    assert vfx(clips[0]).shape == (128,)
    assert FrameFeatureExtractor.random(seed=1).identity["param_hash"] != fx.identity["param_hash"]


def test_same_set_scores_zero(extractors, clips):
    fx, vfx = extractors
    assert fid_frames(clips, clips, fx) == pytest.approx(0.0, abs=1e-6)
    assert fvd_videos(clips, clips, vfx) == pytest.approx(0.0, abs=1e-6)


def test_noise_sweep_is_monotone(extractors, clips):
    fx, _ = extractors
    rng = np.random.default_rng(0)
    base = [rng.standard_normal(c.shape).astype(np.float32) for c in clips]
    scores = [fid_frames(clips, [np.clip(c + s * n, -1, 1) for c, n in zip(clips, base)], fx) for s in (0.0, 0.1, 0.2, 0.4)]
    assert scores[0] == pytest.approx(0.0, abs=1e-6)
    assert all(a < b for a, b in zip(scores, scores[1:])), scores


def test_frame_shuffle_hurts_fvd_not_fid(extractors, clips):
    fx, vfx = extractors
    rng = np.random.default_rng(1)
    shuffled = [c[rng.permutation(len(c))] for c in clips]
    fid_ref = fid_frames(clips, clips, fx)
    fid_shuf = fid_frames(clips, shuffled, fx)
    assert abs(fid_shuf - fid_ref) <= 0.05 * max(fid_ref, 1e-6) + 1e-6
    # Random-conv features are small in scale; same-set FVD sits at ~1e-12.
    assert fvd_videos(clips, clips, vfx) < 1e-9
    assert fvd_videos(clips, shuffled, vfx) > 1e-4


def test_workers_do_not_change_scores(extractors, clips):
    fx, vfx = extractors
    half = len(clips) // 2
    assert fid_frames(clips[:half], clips[half:], fx, workers=2) == fid_frames(clips[:half], clips[half:], fx)
    assert fvd_videos(clips[:half], clips[half:], vfx, workers=2) == fvd_videos(clips[:half], clips[half:], vfx)


def test_empty_sets_rejected(extractors, clips):
    fx, vfx = extractors
    with pytest.raises(InvalidArgument):
        fid_frames([], clips, fx)
    with pytest.raises(InvalidArgument):
        fvd_videos(clips, [], vfx)


# -- garment similarity -------------------------------------------------------


def test_rgb_to_hsv_matches_colorsys():
    rng = np.random.default_rng(0)
    rgb = rng.uniform(0, 1, (200, 3))
    rgb[:5] = [[0, 0, 0], [1, 1, 1], [0.5, 0.5, 0.5], [1, 0, 0], [0, 0, 1]]
    h, s, v = rgb_to_hsv(rgb)
    ref = np.array([colorsys.rgb_to_hsv(*px) for px in rgb])
    np.testing.assert_allclose(np.stack([h, s, v], 1), ref, atol=1e-12)


def _patch(color, H=8, W=8):
    img = np.zeros((H, W, 4), np.float32)
    img[2:6, 2:6, :3] = color
    img[2:6, 2:6, 3] = 1
    return img


def _video(color, T=3, H=8, W=8):
    v = np.full((T, H, W, 3), -1.0, np.float32)
    v[:, 2:6, 2:6] = color
    return v


def test_garment_similarity_cases():
    red, green = (0.9, -0.9, -0.9), (-0.9, 0.9, -0.9)
    mask = np.zeros((3, 8, 8), bool)
    mask[:, 2:6, 2:6] = True
    seg = MaskSegmenter(mask)
    assert garment_similarity(_patch(red), _video(red), seg) == pytest.approx(1.0)
    assert garment_similarity(_patch(red), _video(green), seg) == pytest.approx(0.0, abs=1e-6)
    near = (0.9, -0.3, -0.9)  # hue rotated ~ 30 degrees
    far = (0.9, 0.5, -0.9)
    s_near = garment_similarity(_patch(red), _video(near), seg)
    s_far = garment_similarity(_patch(red), _video(far), seg)
    assert 1.0 >= s_near >= s_far
    assert s_near < 1.0
    assert garment_similarity(_patch(red), _video(red), ColorSegmenter([red])) == pytest.approx(1.0)


def test_garment_similarity_empty_masks():
    red = (0.9, -0.9, -0.9)
    with pytest.raises(UndefinedScore):
        garment_similarity(np.zeros((8, 8, 4), np.float32), _video(red), MaskSegmenter(np.ones((3, 8, 8), bool)))
    with pytest.raises(UndefinedScore):
        garment_similarity(_patch(red), _video(red), MaskSegmenter(np.zeros((3, 8, 8), bool)))
    with pytest.raises(InvalidArgument):
        MaskSegmenter(np.zeros((2, 8, 8), bool))(_video(red))


def test_embedder_is_normalized():
    e = HueHistogramEmbedder(bins=12)(np.random.default_rng(0).uniform(-1, 1, (50, 3)))
    assert e.shape == (12,) and np.linalg.norm(e) == pytest.approx(1.0)


# -- harness ------------------------------------------------------------------


def test_eval_config_round_trip():
    cfg = EvalConfig(num_frames=4, guidance_weights=(1, 1, 3, 1))
    assert EvalConfig.from_dict(cfg.to_dict()) == EvalConfig(num_frames=4, guidance_weights=(1.0, 1.0, 3.0, 1.0))
    with pytest.raises(InvalidArgument):
        EvalConfig.from_dict({"frames": 3})


def test_ablation_suite_deterministic(tmp_path):
    scenes = generate_dataset(3, 2, 4, 16, 16)
    pairs = pair_for_eval(scenes, seed=0, per_person=1)
    sched = make_schedule(100)
    cfg = EvalConfig(num_frames=2, sampling_steps=2)
    models = {"image": build_model(TINY, seed=0), "video": inflate_temporal(build_model(TINY, seed=0))}
    a = run_ablation_suite(models, scenes, pairs, cfg, sched)
    b = run_ablation_suite(models, scenes, pairs, cfg, sched)
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    assert d["columns"] == list(SCORE_COLUMNS) == ["fid", "fvd", "garment_sim"]
    assert [r["name"] for r in d["rows"]] == ["image", "video"]
    assert all(r["num_videos"] == 3 for r in d["rows"])
    assert d["meta"]["frame_extractor"]["param_hash"]
    text = a.to_text()
    assert "garment_sim" in text and len(text.splitlines()) == 5
    with pytest.raises(InvalidArgument):
        run_ablation_suite({}, scenes, pairs, cfg, sched)
    with pytest.raises(InvalidArgument):
        run_ablation_suite({"x": tmp_path / "missing"}, scenes, pairs, cfg, sched)
    assert (scenes[0].labels == TOP).any()
