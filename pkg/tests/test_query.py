import numpy as np
import pytest

import sqn.tensor as T
from sqn.cloud import PointCloud
from sqn.encoder import EncoderConfig, encode, input_point_features
from sqn.query import (
    Model,
    QueryConfig,
    classify,
    head_input_dim,
    init_model,
    interpolate,
    interpolation_weights,
    predict,
    query_features,
)
from sqn.tensor import Parameters, Tensor, backward, reduce_sum

from helpers import check_gradients


def toy_cloud(rng, n=300, c=3):
    return PointCloud(
        positions=rng.uniform(0, 4, (n, 3)).astype(np.float32),
        gt_labels=rng.integers(0, c, n, dtype=np.uint16),
        num_classes=c,
    )


def toy_model(cloud, seed=0, **qkw):
    enc = EncoderConfig(level_dims=(4, 8, 8, 8), neighbors_k_enc=6, seed=seed)
    qc = QueryConfig(head_widths=(16, 8), **qkw)
    return init_model(enc, qc, cloud.num_classes, input_point_features(cloud).shape[1],
                      seed=seed)


# --- interpolation ---------------------------------------------------------


def test_coincident_query_returns_stored_feature_exactly(rng):
    feats = Tensor(rng.normal(0, 1, (1, 3, 5)).astype(np.float32))
    dist = np.array([[0.0, 1.0, 2.0]])
    out = interpolate(feats, dist, QueryConfig())
    assert np.array_equal(out.data[0], feats.data[0, 0])


def test_equal_distances_give_arithmetic_mean(rng):
    feats = Tensor(rng.normal(0, 1, (1, 2, 4)).astype(np.float32))
    out = interpolate(feats, np.array([[1.5, 1.5]]), QueryConfig())
    assert np.allclose(out.data[0], feats.data[0].mean(axis=0), atol=1e-7)


def test_inverse_square_weights_hand_case(rng):
    # d = (1, 2, 2), p = 2 -> weights (4/6, 1/6, 1/6)
    w = interpolation_weights(np.array([[1.0, 2.0, 2.0]]), power=2, epsilon=1e-8)
    assert np.allclose(w[0], [4 / 6, 1 / 6, 1 / 6], atol=1e-6)
    feats = rng.normal(0, 1, (1, 3, 4)).astype(np.float32)
    out = interpolate(Tensor(feats), np.array([[1.0, 2.0, 2.0]]), QueryConfig())
    expect = sum(w[0, k] * feats[0, k] for k in range(3))  # direct re-computation
    assert np.allclose(out.data[0], expect, atol=1e-6)


def test_weight_properties_random(rng):
    for _ in range(50):
        k = int(rng.integers(1, 8))
        d = np.sort(rng.uniform(0, 3, (1, k)))
        w = interpolation_weights(d, power=2, epsilon=1e-8)
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) < 1e-6
        assert np.all(np.diff(w[0]) <= 1e-9)  # monotone: closer -> no smaller weight


def test_multiple_coincident_neighbors_snap_to_mean(rng):
    feats = Tensor(rng.normal(0, 1, (1, 3, 4)).astype(np.float32))
    out = interpolate(feats, np.array([[0.0, 0.0, 3.0]]), QueryConfig())
    expect = (feats.data[0, 0] + feats.data[0, 1]) / 2.0
    assert np.allclose(out.data[0], expect, atol=1e-7)


def test_power_one_configurable(rng):
    w = interpolation_weights(np.array([[1.0, 2.0]]), power=1, epsilon=1e-8)
    assert np.allclose(w[0], [2 / 3, 1 / 3], atol=1e-6)


def test_interpolate_gradients(rng):
    feats = Tensor(rng.normal(0, 1, (4, 3, 5)), requires_grad=True, dtype=np.float64)
    dist = rng.uniform(0.1, 2.0, (4, 3))

    def loss():
        out = interpolate(feats, dist, QueryConfig())
        return reduce_sum(T.mul(out, out))

    check_gradients(loss, [feats])


# --- query over hierarchical features ---------------------------------------


def test_concatenated_width_desk_dims(rng):
    cloud = toy_cloud(rng, 512)
    enc = EncoderConfig(level_dims=(8, 16, 32, 64), seed=0)
    qc = QueryConfig()
    assert head_input_dim(enc, qc) == 120
    model = init_model(enc, qc, cloud.num_classes, input_point_features(cloud).shape[1])
    hf = model.attach(cloud)
    qr = query_features(hf, cloud.positions[:5], qc)
    assert qr.feature.data.shape == (5, 120)


def test_query_at_surviving_point_snaps_everywhere(rng):
    cloud = toy_cloud(rng, 400)
    model = toy_model(cloud)
    hf = model.attach(cloud)
    deep_src = hf[3].source_indices[0]  # survives all four levels
    q = cloud.positions[deep_src]
    qr = query_features(hf, q, model.query_cfg)
    for lvl, (idx, w) in enumerate(zip(qr.level_indices, qr.level_weights)):
        level = hf[lvl]
        row = int(np.where(level.source_indices == deep_src)[0][0])
        assert idx[0, 0] == row          # nearest is the point itself
        assert w[0, 0] == 1.0            # coincident snap takes over


def test_level_subset_query(rng):
    cloud = toy_cloud(rng, 400)
    model = toy_model(cloud, levels=(1, 4))
    hf = model.attach(cloud)
    qr = query_features(hf, cloud.positions[:3], model.query_cfg)
    assert len(qr.level_indices) == 2
    assert qr.feature.data.shape[1] == 4 + 8


def test_k_clamped_on_tiny_levels(rng):
    cloud = toy_cloud(rng, 300)
    model = toy_model(cloud, k=25)
    hf = model.attach(cloud)
    qr = query_features(hf, cloud.positions[:2], model.query_cfg)
    assert qr.clamped
    assert qr.level_indices[3].shape[1] == len(hf[3].positions)


def test_gradients_reach_only_gathered_rows(rng):
    cloud = toy_cloud(rng, 350)
    model = toy_model(cloud)
    hf = model.attach(cloud)
    # re-leaf the level features so head gradients stop there
    leaves = []
    for level in hf.levels:
        level.features = Tensor(level.features.data.copy(), requires_grad=True)
        level._index = None
        leaves.append(level.features)
    queries = cloud.positions[rng.integers(0, len(cloud), 7)]
    qr = query_features(hf, queries, model.query_cfg)
    logits = classify(qr.feature, model.params, model.head_layers)
    backward(reduce_sum(T.mul(logits, logits)))
    for level_no, leaf in enumerate(leaves):
        gathered = set(qr.level_indices[level_no].ravel().tolist())
        assert leaf.grad is not None
        for row in range(leaf.data.shape[0]):
            if row in gathered:
                continue
            assert np.all(leaf.grad[row] == 0.0), f"level {level_no} row {row}"
        assert any(np.any(leaf.grad[row] != 0) for row in gathered)


# --- classify / predict ------------------------------------------------------


def test_zero_head_gives_zero_logits_and_class_zero(rng):
    params = Parameters()
    params.add("head0.w", np.zeros((6, 4), dtype=np.float32))
    params.add("head0.b", np.zeros(4, dtype=np.float32))
    logits = classify(Tensor(rng.normal(0, 1, (5, 6)).astype(np.float32)), params, 1)
    assert np.array_equal(logits.data, np.zeros((5, 4)))
    assert np.argmax(logits.data, axis=1).tolist() == [0] * 5


def test_identity_single_layer_head():
    params = Parameters()
    params.add("head0.w", np.eye(2, dtype=np.float32))
    params.add("head0.b", np.zeros(2, dtype=np.float32))
    x = np.array([[0.3, -1.2], [2.0, 0.1]], dtype=np.float32)
    logits = classify(Tensor(x), params, 1)
    assert np.array_equal(logits.data, x)


def test_head_width_mismatch_errors(rng):
    params = Parameters()
    params.add("head0.w", np.zeros((6, 4), dtype=np.float32))
    params.add("head0.b", np.zeros(4, dtype=np.float32))
    with pytest.raises(Exception, match="shape"):
        classify(Tensor(rng.normal(0, 1, (5, 7)).astype(np.float32)), params, 1)


def test_predict_cloud_matches_positions_path(rng):
    cloud = toy_cloud(rng, 400)
    model = toy_model(cloud)
    by_cloud = predict(model, cloud)
    by_positions = predict(model, cloud.positions)
    assert np.array_equal(by_cloud, by_positions)


def test_predict_arbitrary_and_empty_queries(rng):
    cloud = toy_cloud(rng, 400)
    model = toy_model(cloud)
    model.attach(cloud)
    off_cloud = rng.uniform(-1, 5, (11, 3)).astype(np.float32)  # not in the cloud
    out = predict(model, off_cloud)
    assert out.shape == (11,)
    assert np.all((0 <= out) & (out < cloud.num_classes))
    assert predict(model, np.zeros((0, 3), dtype=np.float32)).shape == (0,)


def test_predict_deterministic(rng):
    cloud = toy_cloud(rng, 400)
    model = toy_model(cloud)
    model.attach(cloud)
    q = rng.uniform(0, 4, (30, 3)).astype(np.float32)
    assert np.array_equal(predict(model, q), predict(model, q))


def test_full_pipeline_matches_scalar_oracle(rng):
    # independent forward re-implementation: plain numpy loops from the
    # stored level arrays and parameters
    cloud = toy_cloud(rng, 350)
    model = toy_model(cloud)
    hf = model.attach(cloud)
    queries = rng.uniform(0, 4, (40, 3)).astype(np.float32)
    got = predict(model, queries)

    qc = model.query_cfg
    expect = np.empty(40, dtype=np.int64)
    for qi, q in enumerate(queries):
        parts = []
        for lvl in qc.levels:
            level = hf[lvl - 1]
            d2 = ((level.positions.astype(np.float64) - q.astype(np.float64)) ** 2).sum(1)
            k = min(qc.k, len(level.positions))
            nn = np.lexsort((np.arange(len(d2)), d2))[:k]
            dist = np.sqrt(d2[nn])
            if (dist < qc.epsilon).any():
                w = (dist < qc.epsilon).astype(np.float64)
            else:
                w = 1.0 / (dist ** qc.distance_power + qc.epsilon)
            w = w / w.sum()
            parts.append(sum(np.float32(w[j]) * level.features.data[nn[j]]
                             for j in range(k)))
        h = np.concatenate(parts)
        for i in range(model.head_layers):
            h = h @ model.params[f"head{i}.w"].data + model.params[f"head{i}.b"].data
            if i < model.head_layers - 1:
                h = np.where(h > 0, h, 0.2 * h)
        expect[qi] = int(np.argmax(h))
    assert np.array_equal(got, expect)
