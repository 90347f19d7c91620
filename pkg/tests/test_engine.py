import numpy as np
import pytest

from dragkit.engine import (
    DragConfig,
    DragState,
    EngineError,
    PointOp,
    PointState,
    drag_loss,
    hard_step,
    init_state,
    latent_from_bytes,
    latent_to_bytes,
    load_latent,
    point_ms_loss,
    point_track,
    run_drag,
    run_point_drag,
    save_latent,
    soft_bg_loss,
)
from dragkit.extractors import GaussianBlur, Identity, PooledBlur
from dragkit.flow import LatentField
from dragkit.geometry import Mask2D, Point2, centroid
from dragkit.region import GradientMask, build_gradient_mask
from dragkit.schedule import RegionOp, TaskKind
from dragkit.suite import disk_mask, ring_blob_latent

from .conftest import p

EXTRACTORS = [Identity(), GaussianBlur(1.5), PooledBlur(2, 1.0)]


def simple_case(seed=0, shift=(10, 0), mask_radius=7.0):
    z0 = ring_blob_latent(24, 32, seed)
    mask = disk_mask(24, 32, mask_radius)
    op = RegionOp(TaskKind.RELOCATION, mask, Point2(24 + shift[0], 32 + shift[1]))
    return z0, op


# --- drag loss -----------------------------------------------------------------


@pytest.mark.parametrize("ex", EXTRACTORS, ids=lambda e: e.descriptor.name)
def test_loss_zero_at_step_zero(ex):
    z0, op = simple_case()
    cfg = DragConfig()
    state = init_state(z0, [op], cfg, ex)
    loss, grad = drag_loss(state, [op], 0, 50, ex)
    assert loss == 0.0
    assert np.all(grad == 0.0)


def test_loss_single_cell_hand_case():
    # one-cell region displaced one cell right, identity features:
    # the loss is the summed channel difference between target and source
    rng = np.random.default_rng(3)
    z = LatentField(rng.standard_normal((2, 16, 16)))
    mask = Mask2D.from_cells(16, 16, [(5, 8)])
    op = RegionOp(TaskKind.RELOCATION, mask, p(6, 8))
    ex = Identity()
    state = init_state(z, [op], DragConfig(k_motion=1, k_refine=0), ex)
    loss, grad = drag_loss(state, [op], 1, 1, ex)
    expect = float(np.abs(z.data[:, 8, 6] - z.data[:, 8, 5]).sum())
    assert abs(loss - expect) < 1e-12


def test_literal_mode_compares_in_place():
    z0, op = simple_case()
    ex = Identity()
    state = init_state(z0, [op], DragConfig(align_source=False), ex)
    # at k = 0 the two masked terms coincide, so the literal loss is 0 too
    loss0, _ = drag_loss(state, [op], 0, 50, ex, align_source=False)
    assert loss0 == 0.0
    # at full step the literal form compares disjoint regions of the
    # unmodified latent, so it is strictly positive
    loss_full, _ = drag_loss(state, [op], 50, 50, ex, align_source=False)
    assert loss_full > 1.0


# --- finite differences ----------------------------------------------------------


def fd_eligible_coords(
    state, ops, k, K, ex, delta_fd, huber_delta, rng, count=64, analytic_grad=None
):
    """Latent coordinates where central differences measure the gradient
    reliably: the whole feature footprint sits away from the huber kink,
    and the analytic gradient is above the difference-quotient noise floor."""
    from dragkit.engine import downsample_mask, to_feature_frame, _warp_channels
    from dragkit.extractors import FeatureField
    from dragkit.schedule import full_params, interpolate, target_mask_at

    stride = ex.descriptor.stride
    fz = ex.extract(LatentField(state.z))
    kink = np.zeros_like(fz.data)
    for i, op in enumerate(ops):
        mask_k = downsample_mask(target_mask_at(op, k, K), stride)
        t = interpolate(full_params(op), k, K).to_transform()
        target = _warp_channels(state.baseline_features[i], to_feature_frame(t, stride))
        resid = mask_k * (fz.data - target)
        kink += (np.abs(np.abs(resid) - huber_delta) <= 50 * delta_fd).astype(float)
    spill = ex.adjoint(FeatureField(kink), LatentField(state.z)).data
    ok = np.abs(spill.ravel()) == 0.0
    if analytic_grad is not None:
        ok &= np.abs(analytic_grad.ravel()) >= 1e-4
    idx = np.flatnonzero(ok)
    return rng.choice(idx, size=min(count, len(idx)), replace=False)


@pytest.mark.parametrize("ex", EXTRACTORS, ids=lambda e: e.descriptor.name)
def test_huber_gradient_matches_finite_differences(ex):
    from dragkit.extractors import fd_gradient_check

    rng = np.random.default_rng(7)
    delta_fd = 1e-6
    hd = 1e-3
    z0 = LatentField(rng.standard_normal((2, 32, 32)) * 0.5)
    mask = disk_mask(12, 16, 5, width=32, height=32)
    op = RegionOp(TaskKind.RELOCATION, mask, p(20, 16))
    cfg = DragConfig(loss_mode="huber", huber_delta=hd)
    state0 = init_state(z0, [op], cfg, ex)
    k, K = 25, 50

    def loss_fn(e, z):
        st = DragState(
            z=np.array(z.data),
            z_orig=state0.z_orig,
            baseline_features=state0.baseline_features,
            masks_f0=state0.masks_f0,
            gradient_mask=state0.gradient_mask,
            weights=state0.weights,
        )
        loss, grad = drag_loss(st, [op], k, K, e, "huber", hd)
        return loss, LatentField(grad)

    _, grad0 = loss_fn(ex, z0)
    coords = fd_eligible_coords(
        state0, [op], k, K, ex, delta_fd, hd, rng, analytic_grad=grad0.data
    )
    assert len(coords) >= 64
    err = fd_gradient_check(ex, loss_fn, z0, delta=delta_fd, coords=coords)
    assert err <= 1e-4


# --- hard step -------------------------------------------------------------------


def make_state(z, editable_bits):
    return DragState(
        z=np.array(z),
        z_orig=np.array(z),
        baseline_features=[],
        masks_f0=[],
        gradient_mask=GradientMask(Mask2D(editable_bits)),
        weights=__import__("dragkit.region", fromlist=["RegionWeights"]).RegionWeights((1.0,)),
    )


def test_hard_step_zero_grad_resets_background():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((1, 8, 8))
    bits = np.zeros((8, 8), dtype=bool)
    bits[2:5, 2:5] = True
    state = make_state(z, bits)
    state.z = state.z + 1.0  # drift everything
    hard_step(state, np.zeros_like(z), 0.5)
    assert np.array_equal(state.z[:, ~bits], state.z_orig[:, ~bits])
    assert np.allclose(state.z[:, bits], state.z_orig[:, bits] + 1.0)


def test_hard_step_full_mask_is_plain_descent():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((2, 6, 6))
    g = rng.standard_normal((2, 6, 6))
    state = make_state(z, np.ones((6, 6), dtype=bool))
    hard_step(state, g, 0.25)
    assert np.allclose(state.z, z - 0.25 * g)


def test_hard_step_empty_mask_freezes_everything():
    rng = np.random.default_rng(2)
    z = rng.standard_normal((1, 6, 6))
    g = rng.standard_normal((1, 6, 6))
    state = make_state(z, np.zeros((6, 6), dtype=bool))
    hard_step(state, g, 10.0)
    assert np.array_equal(state.z, state.z_orig)


def test_soft_bg_loss_cases():
    b = GradientMask(Mask2D.from_cells(8, 8, [(1, 1), (2, 1)]))
    z = np.zeros((1, 8, 8))
    assert soft_bg_loss(z, z, b) == 0.0
    inside = np.array(z)
    inside[0, 1, 1] = 5.0  # editable cell: masked out of the penalty
    assert soft_bg_loss(inside, z, b) == 0.0
    outside = np.array(z)
    outside[0, 4, 4:9] = 1.0  # 4 background cells in range
    outside[0, 5, 0] = 1.0
    assert soft_bg_loss(outside, z, b) == 5.0


# --- run_drag --------------------------------------------------------------------


def test_zero_displacement_is_noop():
    z0, _ = simple_case()
    mask = disk_mask(24, 32, 7.0)
    op = RegionOp(TaskKind.RELOCATION, mask, centroid(mask))
    res = run_drag(z0, [op], DragConfig())
    assert all(l == 0.0 for l in res.loss_trajectory)
    b = build_gradient_mask([op], 64, 64, 50).mask.bits
    inside = res.final_z.data[:, b]
    assert np.array_equal(inside, z0.data[:, b])


def test_relocation_reaches_target():
    z0, op = simple_case(shift=(12, 0))
    res = run_drag(z0, [op], DragConfig())
    final_c = res.centroid_trajectory[0][-1]
    assert final_c.dist(op.target) <= 2.0


def test_background_bit_exact_after_run():
    z0, op = simple_case(seed=4, shift=(9, 5))
    cfg = DragConfig()
    res = run_drag(z0, [op], cfg)
    b = build_gradient_mask([op], 64, 64, cfg.k_motion).mask.bits
    outside = ~b
    assert np.array_equal(res.final_z.data[:, outside], z0.data[:, outside])


def test_baseline_snapshot_never_mutates():
    z0, op = simple_case(seed=5)
    ex = Identity()
    cfg = DragConfig()
    state = init_state(z0, [op], cfg, ex)
    before = [np.array(b) for b in state.baseline_features]
    for k in range(10):
        loss, grad = drag_loss(state, [op], k, cfg.k_motion, ex)
        hard_step(state, grad, 0.05)
    for a, b in zip(before, state.baseline_features):
        assert np.array_equal(a, b)


def test_run_deterministic_bit_identical():
    z0, op = simple_case(seed=6, shift=(8, -6))
    cfg = DragConfig()
    r1 = run_drag(z0, [op], cfg)
    r2 = run_drag(z0, [op], cfg)
    assert latent_to_bytes(r1.final_z) == latent_to_bytes(r2.final_z)
    assert r1.loss_trajectory == r2.loss_trajectory
    assert r1.centroid_trajectory == r2.centroid_trajectory


def test_monotone_descent_huber_fixed_step():
    # refinement-phase semantics: schedule frozen at the full transform,
    # smooth loss, step small against the huber width
    z0, op = simple_case(seed=7, shift=(6, 0))
    ex = Identity()
    cfg = DragConfig(loss_mode="huber", huber_delta=0.2)
    state = init_state(z0, [op], cfg, ex)
    prev = None
    for _ in range(60):
        loss, grad = drag_loss(state, [op], 50, 50, ex, "huber", 0.2)
        hard_step(state, grad, 0.1)  # raw step below the huber width
        if prev is not None:
            assert loss <= prev + 1e-12
        prev = loss


def test_iterations_and_trajectory_lengths():
    z0, op = simple_case(seed=8)
    cfg = DragConfig(k_motion=20, k_refine=5)
    res = run_drag(z0, [op], cfg)
    assert res.iterations_run == 25
    assert len(res.loss_trajectory) == 25
    assert len(res.centroid_trajectory[0]) == 25


def test_run_requires_ops():
    z0, _ = simple_case()
    with pytest.raises(EngineError):
        run_drag(z0, [], DragConfig())


def test_config_validation():
    with pytest.raises(ValueError):
        DragConfig(k_motion=0)
    with pytest.raises(ValueError):
        DragConfig(lr_phase1=-1)
    with pytest.raises(ValueError):
        DragConfig(loss_mode="l2")


def test_config_json_roundtrip():
    cfg = DragConfig(k_motion=10, extractor={"name": "pooled", "stride": 2, "sigma": 1.0})
    again = DragConfig.from_json(cfg.to_json())
    assert again == cfg


# --- point baseline ---------------------------------------------------------------


def point_state_for(z0, ex, editable=None):
    base = ex.extract(z0).data
    bits = (
        editable
        if editable is not None
        else np.ones((z0.height, z0.width), dtype=bool)
    )
    return PointState(
        z=np.array(z0.data),
        z_orig=np.array(z0.data),
        base_feats=base,
        prev_feats=np.array(base),
        originals=[],
        editable=bits.astype(np.float64),
    )


def test_point_align_zero_at_start():
    z0, _ = simple_case(seed=9)
    ex = Identity()
    state = point_state_for(z0, ex)
    op = PointOp(handle=p(24, 32), target=p(36, 32))
    state.originals = [p(24, 32)]
    loss, grad = point_ms_loss(state, [op], beta=1.0, lam=0.0, extractor=ex)
    assert loss == 0.0
    assert np.all(grad == 0.0)


def test_point_mask_term_isolates_far_field():
    z0, _ = simple_case(seed=10)
    ex = Identity()
    bits = np.zeros((64, 64), dtype=bool)
    bits[20:45, 10:45] = True
    state = point_state_for(z0, ex, editable=bits)
    state.originals = [p(24, 32)]
    op = PointOp(handle=p(24, 32), target=p(36, 32))
    # perturb a far-field background cell
    state.z[0, 60, 60] += 3.0
    loss_l0, _ = point_ms_loss(state, [op], beta=0.9, lam=0.0, extractor=ex)
    assert loss_l0 == 0.0  # lambda 0: the far field cannot contribute
    loss_l1, _ = point_ms_loss(state, [op], beta=0.9, lam=1.0, extractor=ex)
    assert abs(loss_l1 - 3.0) < 1e-12


def test_point_loss_one_by_one_patches_hand_case():
    rng = np.random.default_rng(11)
    z = LatentField(rng.standard_normal((1, 16, 16)))
    ex = Identity()
    state = point_state_for(z, ex)
    state.originals = [p(4, 4)]
    op = PointOp(handle=p(6, 4), target=p(10, 4), patch_radius=1, track_radius=2)
    loss, _ = point_ms_loss(state, [op], beta=1.0, lam=0.0, extractor=ex)
    expect = float(
        np.abs(z.data[0, 3:6, 5:8] - z.data[0, 3:6, 3:6]).sum()
    )
    assert abs(loss - expect) < 1e-12


def test_point_track_unchanged_features():
    rng = np.random.default_rng(12)
    feats = rng.standard_normal((2, 32, 32))
    h = p(16, 16)
    out = point_track(feats, feats, h, r2=4)
    assert out == h


def test_point_track_follows_translation():
    rng = np.random.default_rng(13)
    feats = rng.standard_normal((2, 32, 32))
    moved = np.roll(feats, 1, axis=2)  # shift right by one
    out = point_track(moved, feats, p(16, 16), r2=3)
    assert out == p(17, 16)


def test_point_track_constant_field_tiebreak():
    feats = np.ones((1, 16, 16))
    out = point_track(feats, feats, p(8, 8), r2=3)
    assert out == p(8, 8)


def test_point_run_reaches_target_on_compressed_features():
    z0, op = simple_case(seed=14, shift=(10, 0))
    cfg = DragConfig(extractor={"name": "pooled", "stride": 2, "sigma": 1.5})
    b = build_gradient_mask([op], 64, 64, 50)
    pop = PointOp(handle=centroid(op.source_mask), target=op.target)
    res = run_point_drag(z0, [pop], cfg, editable=b)
    from dragkit.metrics import md1

    final = md1(z0.data, res.final_z.data, op, patch_radius=6)
    initial = md1(z0.data, z0.data, op, patch_radius=6)
    assert final <= 0.2 * initial


# --- latent binary format -----------------------------------------------------------


def test_latent_bytes_roundtrip():
    rng = np.random.default_rng(15)
    z = LatentField(rng.standard_normal((3, 5, 7)).astype(np.float32).astype(np.float64))
    blob = latent_to_bytes(z)
    assert blob[:4] == b"DFLT"
    assert len(blob) == 16 + 4 * 3 * 5 * 7
    back = latent_from_bytes(blob)
    assert back.data.shape == (3, 5, 7)
    assert np.array_equal(back.data, z.data)


def test_latent_file_roundtrip(tmp_path):
    rng = np.random.default_rng(16)
    z = LatentField(rng.standard_normal((2, 8, 8)).astype(np.float32).astype(np.float64))
    path = tmp_path / "z.dflt"
    save_latent(path, z)
    assert np.array_equal(load_latent(path).data, z.data)


def test_latent_bad_magic_rejected():
    with pytest.raises(EngineError):
        latent_from_bytes(b"NOPE" + b"\0" * 20)


def test_latent_truncated_rejected():
    z = LatentField.zeros(1, 4, 4)
    blob = latent_to_bytes(z)
    with pytest.raises(EngineError):
        latent_from_bytes(blob[:-3])
