import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from qmm3dqa.errors import DegenerateLabels, EmptyManifest, ShapeMismatch
from qmm3dqa.model_io import DatasetManifest, ManifestEntry
from qmm3dqa.predictor import (
    ExtractorKind,
    FeatureExtractor,
    FeatureExtractorSpec,
    PredictorState,
    TrainConfig,
    _backward_batch,
    _forward_batch,
    extract_features_builtin,
    init_state,
    load_state,
    predict,
    regress,
    save_state,
    score_features,
    train,
)
from qmm3dqa.projector import RenderConfig
from qmm3dqa.quality_loss import LossConfig, combined_loss
from qmm3dqa.rng import substream
from qmm3dqa.sampler import GridSpec, Qmm, assemble_qmm

from conftest import make_point_cloud, make_projection_set

MOCK_BRIDGE = f"{sys.executable} {Path(__file__).parent / 'mock_bridge.py'}"


def make_qmm(image: np.ndarray, grid=7, patch=32) -> Qmm:
    return Qmm(
        image=image.astype(np.uint8), grid=grid, patch_px=patch, seed=0,
        provenance=(None,) * (grid * grid),
    )


# -- builtin extractor ---------------------------------------------------------


def test_constant_gray_features():
    img = np.full((224, 224, 3), 128, dtype=np.uint8)
    f = extract_features_builtin(make_qmm(img))
    assert f.shape == (768,)
    # Pooled layout: 12 per-patch stats x (mean, std, min, max).
    per_patch_mean = f[:12]
    assert np.allclose(per_patch_mean[:3], 128.0)  # channel means
    assert np.allclose(per_patch_mean[3:], 0.0)  # std and gradient stats
    assert np.allclose(f[12:24], 0.0)  # lattice std of every stat
    assert np.all(f[176:] == 0.0)  # deterministic zero padding


def test_feature_determinism():
    rng = substream(21, 0)
    img = rng.integers(0, 255, size=(224, 224, 3)).astype(np.uint8)
    a = extract_features_builtin(make_qmm(img))
    b = extract_features_builtin(make_qmm(img))
    assert np.array_equal(a, b)


def test_noise_increases_gradient_mean():
    rng = substream(22, 0)
    base = rng.integers(60, 196, size=(224, 224, 3)).astype(np.float64)
    smooth = np.full((224, 224, 3), 100.0)
    noisy = np.clip(smooth + rng.normal(scale=10, size=smooth.shape), 0, 255)
    f_smooth = extract_features_builtin(make_qmm(smooth.astype(np.uint8)))
    f_noisy = extract_features_builtin(make_qmm(noisy.astype(np.uint8)))
    # Pooled gradient-magnitude mean lives at offsets 6..8 of the first
    # 12-stat block (grad_mean per channel).
    assert np.all(f_noisy[6:9] > f_smooth[6:9])


def test_raw_image_input_uses_pooling_grid():
    rng = substream(23, 0)
    img = rng.integers(0, 255, size=(224, 224, 3)).astype(np.uint8)
    f = extract_features_builtin(img, FeatureExtractorSpec(pooling_grid=7))
    assert f.shape == (768,)
    assert np.any(f != 0)


def test_statistic_subset_changes_layout():
    rng = substream(28, 0)
    img = rng.integers(0, 255, size=(224, 224, 3)).astype(np.uint8)
    qmm = make_qmm(img)
    full = extract_features_builtin(qmm, FeatureExtractorSpec())
    means_only = extract_features_builtin(
        qmm, FeatureExtractorSpec(stats=("mean",))
    )
    # With one statistic the pooled block shrinks from 48 to 12 numbers;
    # its first entries are the lattice means either way.
    assert np.array_equal(means_only[:3], full[:3])
    assert np.all(means_only[140:176] == 0.0)
    with pytest.raises(ValueError):
        FeatureExtractorSpec(stats=("mean", "kurtosis"))


def test_bridge_requires_command(monkeypatch):
    from qmm3dqa.errors import BridgeError

    monkeypatch.delenv("QMM3DQA_BRIDGE", raising=False)
    spec = FeatureExtractorSpec(kind=ExtractorKind.BRIDGE)
    ext = FeatureExtractor(spec)
    ps = make_projection_set(resolution=256, seed=15)
    qmm = assemble_qmm(ps, GridSpec(seed=1))
    with pytest.raises(BridgeError):
        ext.extract(qmm)


# -- head ------------------------------------------------------------------------


def test_regress_zero_weights_bias_only():
    state = init_state(zero=True)
    state.b2 = np.array([3.0])
    f = substream(24, 0).normal(size=768)
    assert regress(f, state) == 3.0


def test_regress_hand_computed():
    spec = FeatureExtractorSpec(feature_dim=4)
    state = init_state(spec, zero=True)
    state.w1 = np.zeros((64, 4))
    state.w1[0, 0] = 1.0  # hidden0 = f0
    state.w1[1, 1] = -1.0  # hidden1 = -f1 (cut by the rectifier when f1>0)
    state.b1 = np.zeros(64)
    state.w2 = np.zeros((1, 64))
    state.w2[0, 0] = 2.0
    state.w2[0, 1] = 5.0
    state.b2 = np.array([0.5])
    f = np.array([3.0, 4.0, 0.0, 0.0])
    # hidden = (3, -4, 0...) -> relu (3, 0, ...) -> 2*3 + 0.5
    assert regress(f, state) == 6.5


def test_regress_zero_features():
    state = init_state()
    f0 = np.zeros(768)
    expect = float((state.w2 @ np.maximum(state.b1, 0.0) + state.b2)[0])
    assert regress(f0, state) == expect


def test_regress_shape_mismatch():
    state = init_state()
    with pytest.raises(ShapeMismatch):
        regress(np.zeros(10), state)


def test_head_backward_matches_finite_differences():
    rng = substream(25, 0)
    spec = FeatureExtractorSpec(feature_dim=16)
    state = init_state(spec, TrainConfig(seed=5))
    feats = rng.normal(size=(6, 16))
    labels = rng.normal(size=6)
    cfg = LossConfig()

    def loss_at(w1, b1, w2, b2):
        s = PredictorState(spec, w1, b1, w2, b2)
        scores, _, _ = _forward_batch(feats, s)
        return combined_loss(scores, labels, cfg).total

    scores, hidden, act = _forward_batch(feats, state)
    dscores = combined_loss(scores, labels, cfg).grad
    dw1, db1, dw2, db2 = _backward_batch(feats, hidden, act, dscores, state)

    h = 1e-6
    rng_idx = substream(26, 0)
    for _ in range(20):
        i = int(rng_idx.integers(0, 64))
        j = int(rng_idx.integers(0, 16))
        w1p = state.w1.copy()
        w1m = state.w1.copy()
        w1p[i, j] += h
        w1m[i, j] -= h
        num = (loss_at(w1p, state.b1, state.w2, state.b2)
               - loss_at(w1m, state.b1, state.w2, state.b2)) / (2 * h)
        if abs(num) > 1e-8:
            assert abs(dw1[i, j] - num) / max(abs(num), 1e-8) < 1e-3


# -- training ----------------------------------------------------------------------


def tiny_manifest_and_projections(n_contents=2, n_levels=5, seed=31):
    """Synthetic in-memory training set: noisier image -> lower label."""
    entries = []
    projections = []
    rng = substream(seed, 0)
    for c in range(n_contents):
        base = rng.integers(80, 176, size=(6, 64, 64, 3)).astype(np.float64)
        for lvl in range(n_levels):
            noisy = np.clip(
                base + rng.normal(scale=6.0 * lvl, size=base.shape), 0, 255
            ).astype(np.uint8)
            masks = np.ones((6, 64, 64), dtype=bool)
            from qmm3dqa.projector import ProjectionSet

            projections.append(
                ProjectionSet(noisy, masks, (0.0,) * 6, (255, 255, 255))
            )
            entries.append(
                ManifestEntry(f"c{c}_l{lvl}.ply", f"c{c}", "noise", 5.0 - lvl)
            )
    return DatasetManifest(tuple(entries)), projections


def test_train_loss_decreases():
    manifest, projections = tiny_manifest_and_projections()
    cfg = TrainConfig(learning_rate=0.02, epochs=20, batch_size=8, seed=7)
    state = init_state(train_config=cfg)
    gs = GridSpec(grid=7, patch_px=8, seed=1)
    report = train(
        manifest, RenderConfig(resolution=64), gs,
        state=state, projections=projections,
    )
    assert len(report.epochs) == 20
    assert report.epochs[-1].total < report.epochs[0].total


def test_train_is_deterministic():
    manifest, projections = tiny_manifest_and_projections()
    gs = GridSpec(grid=7, patch_px=8, seed=1)

    def run():
        cfg = TrainConfig(learning_rate=0.01, epochs=3, batch_size=4, seed=3)
        state = init_state(train_config=cfg)
        return train(
            manifest, RenderConfig(resolution=64), gs,
            state=state, projections=projections,
        )

    a, b = run(), run()
    assert [e.total for e in a.epochs] == [e.total for e in b.epochs]
    assert np.array_equal(a.state.w1, b.state.w1)


def test_single_gd_step_is_minus_lr_grad():
    manifest, projections = tiny_manifest_and_projections(n_levels=3)
    gs = GridSpec(grid=7, patch_px=8, seed=1)
    lr = 1e-3
    cfg = TrainConfig(
        learning_rate=lr, epochs=1, batch_size=64, seed=9,
        standardize_features=False,
    )
    state = init_state(train_config=cfg)
    w1_before = state.w1.copy()

    # Reproduce the features the single batch will see.
    from qmm3dqa.predictor import _epoch_features
    from qmm3dqa.rng import derive_seed

    ext = FeatureExtractor(state.extractor)
    feats = _epoch_features(
        projections, gs, derive_seed(cfg.seed, "epoch:1"), ext
    )
    labels = np.array([e.mos for e in manifest.entries])
    order = substream(derive_seed(cfg.seed, "shuffle:1"), 0)
    perm = order.permutation(len(manifest))
    batch, blabels = feats[perm], labels[perm]
    ref = init_state(train_config=cfg)
    scores, hidden, act = _forward_batch(batch, ref)
    dscores = combined_loss(scores, blabels).grad
    dw1, *_ = _backward_batch(batch, hidden, act, dscores, ref)

    train(manifest, RenderConfig(resolution=64), gs, state=state,
          projections=projections)
    assert np.allclose(state.w1 - w1_before, -lr * dw1, atol=1e-12)


def test_identical_samples_zero_rank_component():
    # A batch of identical samples with identical labels: every pairwise
    # term is max(0, |0| - e*0) = 0, so the rank component vanishes.
    from qmm3dqa.quality_loss import rank_loss

    state = init_state()
    row = substream(33, 0).normal(size=768)
    feats = np.tile(row, (6, 1))
    scores, _, _ = _forward_batch(feats, state)
    assert np.all(scores == scores[0])
    value, grad = rank_loss(scores, np.full(6, 2.5))
    assert value == 0.0
    assert np.all(grad == 0.0)


def test_train_errors():
    manifest, projections = tiny_manifest_and_projections()
    with pytest.raises(EmptyManifest):
        train(DatasetManifest(()), RenderConfig(), GridSpec())
    same = DatasetManifest(
        tuple(replace(e, mos=2.0) for e in manifest.entries)
    )
    with pytest.raises(DegenerateLabels):
        train(same, RenderConfig(resolution=64), GridSpec(grid=7, patch_px=8),
              projections=projections)


# -- end-to-end predict -------------------------------------------------------------


def test_predict_deterministic_and_zero_state():
    model = make_point_cloud(1500, seed=41)
    cfg = RenderConfig(resolution=256, splat_radius=2.0)
    gs = GridSpec(seed=5)
    state = init_state(zero=True)
    a = predict(model, cfg, gs, state)
    b = predict(model, cfg, gs, state)
    assert a.score == b.score == 0.0
    assert set(a.timings) == {"render", "sample", "extract", "regress"}


def test_trained_state_orders_training_severities(small_corpus):
    manifest, base = small_corpus
    render_cfg = RenderConfig(resolution=256, splat_radius=2.0)
    gs = GridSpec(seed=17)
    cfg = TrainConfig(learning_rate=0.01, epochs=20, batch_size=16, seed=2)
    state = init_state(train_config=cfg)
    train(manifest, render_cfg, gs, state=state, base_dir=base)
    from qmm3dqa.model_io import load_model

    by_content = {}
    for e in manifest.entries:
        by_content.setdefault(e.content_id, []).append(e)
    for entries in by_content.values():
        best = min(entries, key=lambda e: -e.mos)  # pristine
        worst = min(entries, key=lambda e: e.mos)
        s_best = predict(load_model(base / best.model_path), render_cfg, gs,
                         state).score
        s_worst = predict(load_model(base / worst.model_path), render_cfg, gs,
                          state).score
        assert s_best > s_worst


def test_score_depends_only_on_qmm_bytes():
    ps = make_projection_set(resolution=256, seed=3)
    gs = GridSpec(seed=11)
    state = init_state()
    qmm1 = assemble_qmm(ps, gs)
    qmm2 = assemble_qmm(ps, gs)
    ext = FeatureExtractor(state.extractor)
    s1 = score_features(ext.extract(qmm1), state)
    s2 = score_features(ext.extract(qmm2), state)
    assert s1 == s2


# -- persistence ----------------------------------------------------------------------


def test_state_round_trip(tmp_path):
    manifest, projections = tiny_manifest_and_projections()
    cfg = TrainConfig(learning_rate=0.05, epochs=2, batch_size=8, seed=7)
    state = init_state(train_config=cfg)
    train(manifest, RenderConfig(resolution=64), GridSpec(grid=7, patch_px=8, seed=1),
          state=state, projections=projections)
    path = tmp_path / "state.bin"
    save_state(state, path)
    assert path.exists() and Path(str(path) + ".json").exists()
    back = load_state(path)
    assert np.array_equal(back.w1, state.w1)
    assert np.array_equal(back.b2, state.b2)
    assert np.array_equal(back.feature_offset, state.feature_offset)
    assert back.extractor.kind is ExtractorKind.BUILTIN
    assert back.train_config.seed == 7
    f = substream(27, 0).normal(size=768)
    assert score_features(f, back) == score_features(f, state)


def test_state_magic_guard(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
    with pytest.raises(ShapeMismatch):
        load_state(path)


# -- bridge integration (mock executable) ----------------------------------------------


def bridge_spec():
    return FeatureExtractorSpec(
        kind=ExtractorKind.BRIDGE, bridge_command=MOCK_BRIDGE
    )


def test_mock_bridge_features_deterministic():
    ps = make_projection_set(resolution=256, seed=13)
    qmm = assemble_qmm(ps, GridSpec(seed=2))
    with FeatureExtractor(bridge_spec()) as ext:
        a = ext.extract(qmm)
        b = ext.extract(qmm)  # served from the byte-keyed cache
        assert a.shape == (768,)
        assert np.array_equal(a, b)
    with FeatureExtractor(bridge_spec()) as ext2:
        c = ext2.extract(qmm)  # fresh process, no cache
    assert np.array_equal(a, c)


def test_bridge_cache_matches_fresh_fetch():
    ps = make_projection_set(resolution=256, seed=14)
    q1 = assemble_qmm(ps, GridSpec(seed=3))
    q2 = assemble_qmm(ps, GridSpec(seed=4))
    with FeatureExtractor(bridge_spec()) as ext:
        f1 = ext.extract(q1)
        f2 = ext.extract(q2)
        f1_again = ext.extract(q1)
        assert np.array_equal(f1, f1_again)
        assert not np.array_equal(f1, f2)
        assert ext.invocations == 3


def test_train_with_mock_bridge():
    manifest, projections = tiny_manifest_and_projections(n_levels=3)
    cfg = TrainConfig(learning_rate=0.05, epochs=2, batch_size=8, seed=7)
    state = init_state(bridge_spec(), cfg)
    with FeatureExtractor(bridge_spec()) as ext:
        report = train(
            manifest, RenderConfig(resolution=64),
            GridSpec(grid=7, patch_px=8, seed=1),
            state=state, extractor=ext, projections=projections,
        )
    assert len(report.epochs) == 2
    assert np.isfinite(report.epochs[-1].total)
