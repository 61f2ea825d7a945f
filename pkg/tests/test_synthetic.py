import numpy as np
import pytest

from sceneflow.config import ConfigError
from sceneflow.harness.augment import AugmentParams, augment
from sceneflow.harness.metrics import epe3d
from sceneflow.harness.synthetic import (
    RigidMotion,
    Scene,
    SyntheticSceneSpec,
    depth_filter,
    generate_pair,
    rotation_matrix,
)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SyntheticSceneSpec(rotation_deg=31)
    with pytest.raises(ConfigError):
        SyntheticSceneSpec(kinds=("torus",))
    with pytest.raises(ConfigError):
        SyntheticSceneSpec(occlusion_fraction=1.0)


def test_zero_motion_gives_identical_frames():
    scene = generate_pair(SyntheticSceneSpec(rotation_deg=0, translation=0), seed=1)
    np.testing.assert_array_equal(scene.flow, 0.0)
    np.testing.assert_array_equal(scene.q, scene.p)


def test_pure_translation_rows_equal():
    spec = SyntheticSceneSpec(rotation_deg=0, translation=0.4, num_objects=4)
    scene = generate_pair(spec, seed=2)
    for i, motion in enumerate(scene.motions):
        rows = scene.flow[scene.labels == i]
        np.testing.assert_array_equal(rows, np.broadcast_to(motion.translation.astype(np.float32), rows.shape))


def test_ring_rotation_closed_form():
    r, theta = 2.5, 17.0
    phi = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    center = np.array([1.0, -2.0, 8.0])
    ring = center + r * np.column_stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)])
    motion = RigidMotion(rotation_matrix([0, 0, theta]), np.array([0, 0, theta]), center, np.zeros(3))
    norms = np.linalg.norm(motion.displacement(ring), axis=1)
    np.testing.assert_allclose(norms, 2 * r * np.sin(np.deg2rad(theta) / 2), rtol=1e-12)


def test_generated_z_rotation_matches_chord_length():
    spec = SyntheticSceneSpec(rotation_axes="z", translation=0.0, rotation_deg=25, num_objects=3)
    scene = generate_pair(spec, seed=3)
    for i, motion in enumerate(scene.motions):
        sel = scene.labels == i
        r = np.linalg.norm((scene.p[sel].astype(np.float64) - motion.center)[:, :2], axis=1)
        expected = 2 * r * np.sin(np.deg2rad(abs(motion.angles_deg[2])) / 2)
        np.testing.assert_allclose(np.linalg.norm(scene.flow[sel], axis=1), expected, atol=2e-6)


def test_exact_correspondence_flow_hits_q():
    scene = generate_pair(SyntheticSceneSpec(), seed=4)
    np.testing.assert_allclose(scene.p + scene.flow, scene.q, atol=1e-5)


def test_resampled_frames_share_no_points():
    scene = generate_pair(SyntheticSceneSpec(resample_independently=True), seed=5)
    common = {tuple(r) for r in scene.p.tolist()} & {tuple(r) for r in scene.q.tolist()}
    assert not common


def test_occlusion_removes_moved_points_from_q():
    spec = SyntheticSceneSpec(occlusion_fraction=0.1, rotation_deg=5)
    scene = generate_pair(spec, seed=6)
    n = len(scene.p)
    assert scene.occluded.sum() == round(0.1 * n)
    assert len(scene.q) == n - scene.occluded.sum()
    moved = scene.p + scene.flow
    hidden = moved[scene.occluded]
    d = np.sqrt(((hidden[:, None] - scene.q[None]) ** 2).sum(-1)).min(axis=1)
    assert d.min() > 0


def test_depth_filter_limit():
    spec = SyntheticSceneSpec(depth_range=(30.0, 40.0), depth_limit=0)
    scene = generate_pair(spec, seed=7)
    assert scene.p[:, 2].max() > 35
    kept = depth_filter(scene, 35.0)
    assert kept.p[:, 2].max() <= 35 and kept.q[:, 2].max() <= 35
    assert len(kept.flow) == len(kept.p)
    built_in = generate_pair(SyntheticSceneSpec(depth_range=(30.0, 40.0)), seed=7)
    assert built_in.p[:, 2].max() <= 35


def test_generation_deterministic():
    a = generate_pair(SyntheticSceneSpec(), seed=8)
    b = generate_pair(SyntheticSceneSpec(), seed=8)
    assert a.p.tobytes() == b.p.tobytes() and a.flow.tobytes() == b.flow.tobytes()


# --- augmentation -------------------------------------------------------------------


def test_identity_augmentation():
    scene = generate_pair(SyntheticSceneSpec(), seed=9)
    out = augment(scene, AugmentParams(), seed=0)
    assert out.p.tobytes() == scene.p.tobytes()
    assert out.q.tobytes() == scene.q.tobytes()
    assert out.flow.tobytes() == scene.flow.tobytes()


def test_augmented_gt_self_consistent():
    scene = generate_pair(SyntheticSceneSpec(), seed=10)
    out = augment(scene, AugmentParams(rotation_deg=10, translation=1.0), seed=3)
    assert epe3d(out.flow, out.flow) == 0.0


def test_rotated_flow_matches_recomputed_endpoints():
    scene = generate_pair(SyntheticSceneSpec(rotation_deg=8), seed=11)
    out = augment(scene, AugmentParams(rotation_deg=20, translation=0.5), seed=4)
    # with exact correspondences Q[i] is the moved P[i], so Q - P is the flow
    np.testing.assert_allclose(out.q.astype(np.float64) - out.p, out.flow, atol=1e-5)
    np.testing.assert_allclose(
        np.linalg.norm(out.flow, axis=1), np.linalg.norm(scene.flow, axis=1), rtol=0, atol=1e-6
    )


def test_rotated_flow_exact_in_float64():
    rng = np.random.default_rng(12)
    p = rng.uniform(-5, 5, size=(100, 3))
    flow = rng.uniform(-0.5, 0.5, size=(100, 3))
    rot = rotation_matrix([3.0, -7.0, 11.0])
    rp = p @ rot.T + 0.3
    rq = (p + flow) @ rot.T + 0.3
    np.testing.assert_allclose(rq - rp, flow @ rot.T, atol=1e-6)


def test_subsample_to_training_resolution():
    scene = generate_pair(SyntheticSceneSpec(occlusion_fraction=0.05), seed=13)
    out = augment(scene, AugmentParams(points=500), seed=5)
    assert len(out.p) == len(out.q) == len(out.flow) == len(out.occluded) == 500
    rows = {tuple(r): i for i, r in enumerate(scene.p.tolist())}
    idx = [rows[tuple(r)] for r in out.p.tolist()]
    np.testing.assert_array_equal(out.flow, scene.flow[idx])
    np.testing.assert_array_equal(out.occluded, scene.occluded[idx])


def test_subsample_tops_up_small_frames():
    scene = Scene(np.zeros((5, 3)), np.ones((3, 3)), np.zeros((5, 3)))
    out = augment(scene, AugmentParams(points=8), seed=0)
    assert len(out.p) == len(out.q) == 8
