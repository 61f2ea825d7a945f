import numpy as np
import pytest

from sceneflow.autodiff import (
    ContractError,
    DimensionError,
    ParamStore,
    Tensor,
    check_gradients,
    gradient_pairs,
    pooled_relative_error,
    precision,
)
from sceneflow.config import ModelConfig, ScaleConfig
from sceneflow.geometry import PointCloud
from sceneflow.predictor import (
    SceneFlowHead,
    SceneFlowNet,
    ground_truth_pyramid,
    multiscale_loss,
    upsample_1nn,
    warp_forward,
)

TOY = ModelConfig(ScaleConfig((32, 16, 8), (8, 16, 32, 64), k_neighbors=4))


def brute_nearest(fine, coarse):
    out = []
    for p in fine:
        d2 = ((coarse - p) ** 2).sum(axis=1)
        out.append(min(range(len(coarse)), key=lambda j: (d2[j], j)))
    return np.array(out)


def toy_pair(seed=0, n=64):
    rng = np.random.default_rng(seed)
    p = rng.uniform(-1, 1, size=(n, 3))
    flow = np.array([0.1, -0.05, 0.02]) + 0.01 * rng.normal(size=(n, 3))
    return p, p + flow, flow


# --- heads ------------------------------------------------------------------------------


def test_head_zero_weights_zero_flow():
    store = ParamStore(0)
    head = SceneFlowHead(store, "h", 16)
    for _, t in store.items():
        t.data[...] = 0
    out = head(Tensor(np.random.default_rng(0).normal(size=(7, 16)).astype(np.float32)))
    assert out.shape == (7, 3)
    np.testing.assert_array_equal(out.data, 0.0)


def test_head_widths_and_gradcheck():
    rng = np.random.default_rng(1)
    with precision(np.float64):
        store = ParamStore(1)
        head = SceneFlowHead(store, "h", 5)
        store.cast(np.float64)
        assert [store[f"h.{i}.weight"].shape for i in range(3)] == [(5, 64), (64, 32), (32, 3)]
        sf = Tensor(rng.normal(size=(6, 5)), requires_grad=True, name="sf")
        w = Tensor(rng.normal(size=(6, 3)))
        errs = check_gradients(lambda: (head(sf) * w).sum(), [sf, *[t for _, t in store.items()]])
    assert max(errs.values()) < 1e-6


# --- upsampling and warping -----------------------------------------------------------


def test_upsample_identity_and_constant():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(20, 3))
    vals = rng.normal(size=(20, 4))
    np.testing.assert_array_equal(upsample_1nn(pts, pts, vals), vals)
    fine = rng.normal(size=(50, 3))
    np.testing.assert_array_equal(upsample_1nn(fine, pts, np.full((20, 2), 7.0)), 7.0)


def test_upsample_matches_brute_force():
    rng = np.random.default_rng(3)
    fine = rng.integers(0, 4, size=(200, 3)).astype(float)
    coarse = rng.integers(0, 4, size=(30, 3)).astype(float)
    vals = np.arange(30.0)[:, None]
    np.testing.assert_array_equal(upsample_1nn(fine, coarse, vals)[:, 0], brute_nearest(fine, coarse))


def test_warp_zero_flow_is_identity():
    pts = np.random.default_rng(4).normal(size=(9, 3))
    np.testing.assert_array_equal(warp_forward(pts, np.zeros((9, 3))), pts)


def test_warp_with_ground_truth_hits_targets():
    p, q, flow = toy_pair(5)
    np.testing.assert_allclose(warp_forward(p, flow), q, rtol=0, atol=1e-15)


def test_warp_subtract_recovers_flow_bit_exact():
    # dyadic values: every sum and difference is representable
    rng = np.random.default_rng(6)
    p = rng.integers(-4096, 4096, size=(30, 3)) / 256.0
    s = rng.integers(-256, 256, size=(30, 3)) / 1024.0
    assert (warp_forward(p, s) - p).tobytes() == s.tobytes()


def test_warp_shape_mismatch():
    with pytest.raises(DimensionError):
        warp_forward(np.zeros((4, 3)), np.zeros((3, 3)))


# --- loss ---------------------------------------------------------------------------


def test_loss_zero_when_exact():
    gt = {k: np.random.default_rng(k).normal(size=(5, 3)) for k in range(4)}
    flows = {k: Tensor(v) for k, v in gt.items()}
    assert float(multiscale_loss(flows, gt).data) == 0.0


def test_loss_hand_arithmetic():
    loss = multiscale_loss({0: Tensor(np.array([[3.0, 4.0, 0.0]]))}, {0: np.zeros((1, 3))})
    assert float(loss.data) == pytest.approx(0.1, abs=1e-7)


def test_loss_sums_over_points():
    pred = {0: Tensor(np.ones((10, 3))), 3: Tensor(np.zeros((2, 3)))}
    gt = {0: np.zeros((10, 3)), 3: np.array([[0, 0, 2.0], [0, 0, 2.0]])}
    assert float(multiscale_loss(pred, gt).data) == pytest.approx(0.02 * 10 * np.sqrt(3) + 0.16 * 4, rel=1e-6)


def test_loss_scale_mismatch():
    with pytest.raises(DimensionError):
        multiscale_loss({1: Tensor(np.zeros((4, 3)))}, {1: np.zeros((5, 3))})


def test_loss_gradcheck():
    rng = np.random.default_rng(7)
    with precision(np.float64):
        preds = {k: Tensor(rng.normal(size=(4, 3)), requires_grad=True, name=f"s{k}") for k in range(4)}
        gt = {k: rng.normal(size=(4, 3)) for k in range(4)}
        errs = check_gradients(lambda: multiscale_loss(preds, gt), list(preds.values()))
    assert max(errs.values()) < 1e-6


# --- full network ---------------------------------------------------------------------


def test_structure_counts_and_trace():
    model = SceneFlowNet(TOY)
    assert len(model.flow_embeddings) == 3
    assert len(model.heads) == 4
    assert len(model.warp_layers) == 2
    p, q, _ = toy_pair()
    out = model(PointCloud(p), PointCloud(q))
    assert out.trace == ["fe3", "head3", "warp2", "fe2", "head2", "warp1", "fe1", "head1", "head0"]
    assert {k: v.shape for k, v in out.flows.items()} == {3: (8, 3), 2: (16, 3), 1: (32, 3), 0: (64, 3)}
    assert sorted(out.flow_features) == [1, 2, 3]


def test_no_flow_embedding_at_full_resolution():
    model = SceneFlowNet(TOY)
    with pytest.raises(ContractError):
        model.flow_embedding(0)
    assert model.flow_embedding(3) is model.flow_embeddings[0]


def test_strict_l0_mode_copies_scale1_flow():
    model = SceneFlowNet(TOY.replace(l0_head=False))
    assert len(model.heads) == 3
    p, q, _ = toy_pair(1)
    out = model(PointCloud(p), PointCloud(q))
    assert "head0" not in out.trace
    np.testing.assert_array_equal(out.flows[0].data, upsample_1nn(p, out.pyramid_p.points[1], out.flows[1].data))


def test_identical_frames_with_zero_heads_give_zero_flow():
    model = SceneFlowNet(TOY)
    for name, t in model.store.items():
        if name.startswith("head"):
            t.data[...] = 0.0
    p, _, _ = toy_pair(2)
    out = model(PointCloud(p), PointCloud(p.copy()))
    for k in range(4):
        np.testing.assert_array_equal(out.flows[k].data, 0.0)
    np.testing.assert_array_equal(out.coarse_match.match, np.arange(8))


def test_ground_truth_uses_prediction_indices():
    model = SceneFlowNet(TOY)
    p, q, flow = toy_pair(3)
    out = model(PointCloud(p), PointCloud(q), seed=4)
    gt = ground_truth_pyramid(flow, out.pyramid_p)
    for k in range(4):
        idx = out.pyramid_p.source_index[k]
        np.testing.assert_array_equal(out.pyramid_p.points[k], p[idx])
        np.testing.assert_array_equal(gt[k], flow[idx])
    with pytest.raises(DimensionError):
        ground_truth_pyramid(flow[:10], out.pyramid_p)


def test_default_output_resolutions():
    model = SceneFlowNet()
    rng = np.random.default_rng(5)
    p = rng.uniform(-5, 5, size=(8192, 3))
    out = model(PointCloud(p), PointCloud(p + 0.1))
    assert [out.flows[k].shape[0] for k in (3, 2, 1, 0)] == [128, 512, 2048, 8192]


def test_forward_deterministic():
    p, q, _ = toy_pair(6)
    a = SceneFlowNet(TOY, seed=3)(PointCloud(p), PointCloud(q), seed=1).full_flow
    b = SceneFlowNet(TOY, seed=3)(PointCloud(p), PointCloud(q), seed=1).full_flow
    assert a.tobytes() == b.tobytes()


def test_network_gradcheck_16_points_32bit():
    cfg = ModelConfig(ScaleConfig((8, 4, 2), (4, 6, 8, 10), k_neighbors=2), head_widths=(8, 8))
    model = SceneFlowNet(cfg, seed=2)
    rng = np.random.default_rng(7)
    p = rng.uniform(-1, 1, size=(16, 3))
    q = p + 0.1
    gt = rng.uniform(-2, 2, size=(16, 3))
    P, Q = PointCloud(p), PointCloud(q)

    def f():
        out = model(P, Q, 0)
        return multiscale_loss(out.flows, ground_truth_pyramid(gt, out.pyramid_p))

    pairs = gradient_pairs(f, [t for _, t in model.store.items()], max_entries=4)
    assert pooled_relative_error(pairs) < 1e-3
