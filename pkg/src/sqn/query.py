"""Semantic query head.

For an arbitrary 3D position: gather the K nearest feature rows at each
encoder level, blend them by inverse-distance weight, concatenate the four
level vectors shallow-to-deep, and classify with an MLP.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .encoder import EncoderConfig, HierarchicalFeatures, Level, encode, input_point_features, init_encoder_params
from .neighbors import SpatialIndex
from .seeding import rng_from
from .tensor import Parameters, Tensor


@dataclass
class QueryConfig:
    k: int = 3
    head_widths: tuple = (256, 128, 96)
    distance_power: float = 2.0
    epsilon: float = 1e-8
    levels: tuple = (1, 2, 3, 4)  # encoder levels to query, 1-based

    def __post_init__(self):
        self.head_widths = tuple(int(w) for w in self.head_widths)
        self.levels = tuple(sorted(int(l) for l in self.levels))
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if any(w <= 0 for w in self.head_widths):
            raise ValueError("head widths must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not self.levels or any(l not in (1, 2, 3, 4) for l in self.levels):
            raise ValueError(f"levels must be a non-empty subset of 1..4, got {self.levels}")


@dataclass
class QueryResult:
    level_indices: list      # per queried level, (Q, k_l) gathered rows
    level_weights: list      # per queried level, (Q, k_l) blend weights
    clamped: bool            # True when k exceeded some level's point count
    feature: Tensor          # (Q, sum of queried level dims)
    logits: Tensor | None = None


def interpolation_weights(distances: np.ndarray, power: float, epsilon: float,
                          dtype=np.float32) -> np.ndarray:
    """Normalized inverse-distance weights; rows containing a coincident
    neighbor (d < epsilon) snap to the exact mean of those neighbors."""
    d = np.asarray(distances, dtype=np.float64)
    w = 1.0 / (d ** power + epsilon)
    snap = d < epsilon
    snap_rows = snap.any(axis=-1)
    if snap_rows.any():
        w = np.where(snap_rows[..., None], snap.astype(np.float64), w)
    w = w / w.sum(axis=-1, keepdims=True)
    return w.astype(dtype)


def interpolate(neighbor_features: Tensor, distances, config: QueryConfig) -> Tensor:
    """Blend features (..., K, D) into (..., D) by inverse-distance weight."""
    w = interpolation_weights(
        distances, config.distance_power, config.epsilon, dtype=neighbor_features.data.dtype
    )
    wt = Tensor(w[..., None], dtype=neighbor_features.data.dtype)
    return T.reduce_sum(T.mul(neighbor_features, wt), axis=-2)


def _level_index(level: Level) -> SpatialIndex:
    if getattr(level, "_index", None) is None:
        level._index = SpatialIndex(level.positions)
    return level._index


def query_features(hf: HierarchicalFeatures, query_xyz, config: QueryConfig) -> QueryResult:
    """Per queried level: K-NN + interpolation; concatenation in level order."""
    q = np.asarray(query_xyz, dtype=np.float32).reshape(-1, 3)
    level_indices, level_weights, parts = [], [], []
    clamped = False
    for lvl in config.levels:
        level = hf[lvl - 1]
        k = min(config.k, len(level.positions))
        clamped = clamped or k < config.k
        idx, dist = _level_index(level).knn_batch(q, k)
        w = interpolation_weights(
            dist, config.distance_power, config.epsilon, dtype=level.features.data.dtype
        )
        gathered = T.gather(level.features, idx)
        wt = Tensor(w[..., None], dtype=level.features.data.dtype)
        parts.append(T.reduce_sum(T.mul(gathered, wt), axis=1))
        level_indices.append(idx)
        level_weights.append(w)
    feature = parts[0] if len(parts) == 1 else T.concat(parts, axis=1)
    return QueryResult(
        level_indices=level_indices, level_weights=level_weights,
        clamped=clamped, feature=feature,
    )


def head_input_dim(encoder_cfg: EncoderConfig, query_cfg: QueryConfig) -> int:
    return sum(encoder_cfg.level_dims[l - 1] for l in query_cfg.levels)


def init_head_params(params: Parameters, in_dim: int, num_classes: int,
                     widths, rng: np.random.Generator) -> None:
    dims = [in_dim, *widths, num_classes]
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        params.add(f"head{i}.w", T.glorot_uniform(rng, a, b))
        params.add(f"head{i}.b", np.zeros(b, dtype=np.float32))


def classify(feature: Tensor, params: Parameters, num_layers: int) -> Tensor:
    """MLP over the concatenated query feature; returns logits."""
    h = feature
    for i in range(num_layers):
        h = T.linear(h, params[f"head{i}.w"], params[f"head{i}.b"])
        if i < num_layers - 1:
            h = T.leaky_relu(h)
    return h


@dataclass
class Model:
    """Trained or initialized parameters plus the configs that shaped them."""

    params: Parameters
    encoder_cfg: EncoderConfig
    query_cfg: QueryConfig
    num_classes: int
    input_dim: int
    hf: HierarchicalFeatures | None = field(default=None, repr=False)
    support: object = field(default=None, repr=False)

    @property
    def head_layers(self) -> int:
        return len(self.query_cfg.head_widths) + 1

    def attach(self, cloud, sample_seed=None) -> HierarchicalFeatures:
        """Encode a support cloud once; later queries interpolate against it."""
        feats = input_point_features(cloud)
        if feats.shape[1] != self.input_dim:
            raise ValueError(
                f"cloud yields {feats.shape[1]}-dim input features, model expects {self.input_dim}"
            )
        self.hf = encode(cloud.positions, feats, self.params, self.encoder_cfg,
                         sample_seed=sample_seed)
        self.support = cloud
        return self.hf

    def logits_at(self, positions) -> Tensor:
        if self.hf is None:
            raise ValueError("no support cloud attached; call attach(cloud) first")
        qr = query_features(self.hf, positions, self.query_cfg)
        return classify(qr.feature, self.params, self.head_layers)


def init_model(encoder_cfg: EncoderConfig, query_cfg: QueryConfig, num_classes: int,
               input_dim: int, seed=0) -> Model:
    params = Parameters()
    init_encoder_params(params, input_dim, encoder_cfg, rng_from(seed, "encoder"))
    init_head_params(params, head_input_dim(encoder_cfg, query_cfg), num_classes,
                     query_cfg.head_widths, rng_from(seed, "head"))
    return Model(params=params, encoder_cfg=encoder_cfg, query_cfg=query_cfg,
                 num_classes=num_classes, input_dim=input_dim)


def predict(model: Model, cloud_or_positions, batch_size: int = 4096) -> np.ndarray:
    """Class ids at arbitrary positions (they need not exist in the support
    cloud). Passing a cloud encodes it as its own support (reusing the
    encoding when the same cloud is already attached)."""
    from .cloud import PointCloud

    if isinstance(cloud_or_positions, PointCloud):
        if model.hf is None or model.support is not cloud_or_positions:
            model.attach(cloud_or_positions)
        positions = cloud_or_positions.positions
    else:
        positions = np.asarray(cloud_or_positions, dtype=np.float32).reshape(-1, 3)
    out = np.empty(len(positions), dtype=np.int64)
    with T.no_grad():
        for lo in range(0, len(positions), batch_size):
            chunk = positions[lo : lo + batch_size]
            logits = model.logits_at(chunk)
            out[lo : lo + len(chunk)] = np.argmax(logits.data, axis=1)  # ties -> smallest id
    return out
