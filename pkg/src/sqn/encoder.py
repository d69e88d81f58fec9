"""Hierarchical point encoder.

Four local feature aggregation blocks, each followed by random decimation,
yielding four (positions, features) levels at decreasing resolution and
increasing width. Per-point positions survive every level so features can
be queried spatially later.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .neighbors import SpatialIndex
from .seeding import rng_from
from .tensor import Parameters, Tensor

PAPER_LEVEL_DIMS = (32, 128, 256, 512)
DESK_LEVEL_DIMS = (8, 16, 32, 64)


@dataclass
class EncoderConfig:
    level_dims: tuple = DESK_LEVEL_DIMS
    decimation: tuple = (4, 4, 4, 4)
    neighbors_k_enc: int = 16
    seed: int = 0

    def __post_init__(self):
        self.level_dims = tuple(int(d) for d in self.level_dims)
        self.decimation = tuple(int(r) for r in self.decimation)
        if len(self.level_dims) != 4 or len(self.decimation) != 4:
            raise ValueError("encoder uses exactly 4 levels")
        if any(d <= 0 or d % 2 for d in self.level_dims):
            raise ValueError(f"level dims must be positive and even, got {self.level_dims}")
        if any(r < 1 for r in self.decimation):
            raise ValueError(f"decimation factors must be >= 1, got {self.decimation}")
        if self.neighbors_k_enc < 1:
            raise ValueError("neighbors_k_enc must be >= 1")

    def level_sizes(self, n: int) -> list[int]:
        sizes = []
        for r in self.decimation:
            n = math.ceil(n / r)
            sizes.append(n)
        return sizes


@dataclass
class Level:
    positions: np.ndarray        # (N_l, 3) float32
    features: Tensor             # (N_l, D_l)
    source_indices: np.ndarray   # (N_l,) indices into the encoded cloud
    # dependency bookkeeping over this level's pre-sampling point set
    # (= previous level's points): which rows each LFA output saw, and which
    # rows survived the decimation
    lfa_neighbors: np.ndarray | None = None   # (N_pre, K)
    kept: np.ndarray | None = None            # (N_l,) rows into the pre-sampling set


@dataclass
class HierarchicalFeatures:
    levels: list[Level] = field(default_factory=list)

    def __iter__(self):
        return iter(self.levels)

    def __getitem__(self, i):
        return self.levels[i]


def input_point_features(cloud) -> np.ndarray:
    """Per-point input feature: position, color/255 when present, constant 1.

    Position entries are expressed in a per-cloud standardized frame
    (centroid-centered, per-axis unit variance) so they condition like the
    color channels; all spatial search and relative encodings elsewhere
    keep raw meters.
    """
    pos = cloud.positions.astype(np.float64)
    if len(pos):
        mu = pos.mean(axis=0)
        var = pos.var(axis=0)
        # isotropic in xy so vertical-axis rotations leave the scale alone
        sd_xy = np.sqrt((var[0] + var[1]) / 2.0)
        sd = np.maximum([sd_xy, sd_xy, np.sqrt(var[2])], 1e-3)
        pos = (pos - mu) / sd
    parts = [pos.astype(np.float32)]
    if cloud.colors is not None:
        parts.append(cloud.colors.astype(np.float32) / 255.0)
    parts.append(np.ones((len(cloud), 1), dtype=np.float32))
    return np.concatenate(parts, axis=1)


def relative_position_code(center_xyz: np.ndarray, neighbor_xyz: np.ndarray) -> np.ndarray:
    """Raw per-neighbor geometric code (M, K, 10):
    center, neighbor, center-neighbor, euclidean distance."""
    m, k, _ = neighbor_xyz.shape
    center = np.broadcast_to(center_xyz[:, None, :], (m, k, 3))
    rel = center - neighbor_xyz
    dist = np.sqrt(np.add.reduce(rel * rel, axis=2, keepdims=True))
    return np.concatenate([center, neighbor_xyz, rel, dist], axis=2)


def locse(center_xyz, neighbor_xyz, w: Tensor, b: Tensor) -> Tensor:
    """Relative position encoding: raw geometric code through a shared MLP."""
    code = relative_position_code(
        center_xyz.astype(w.data.dtype), neighbor_xyz.astype(w.data.dtype)
    )
    return T.leaky_relu(T.linear(Tensor(code, dtype=w.data.dtype), w, b))


def attentive_pooling(neighbor_features: Tensor, gate_w: Tensor, gate_b: Tensor) -> Tensor:
    """Softmax over the K axis of a learned per-feature gate, then the
    score-weighted sum. Invariant to neighbor order."""
    scores = T.softmax(T.linear(neighbor_features, gate_w, gate_b), axis=-2)
    return T.reduce_sum(T.mul(scores, neighbor_features), axis=-2)


def _block_param_shapes(in_dim: int, out_dim: int) -> dict:
    h = out_dim // 2
    return {
        "in_w": (in_dim, h), "in_b": (h,),
        "se1_w": (10, h), "se1_b": (h,),
        "att1_w": (out_dim, out_dim), "att1_b": (out_dim,),
        "mid_w": (out_dim, h), "mid_b": (h,),
        "se2_w": (10, h), "se2_b": (h,),
        "att2_w": (out_dim, out_dim), "att2_b": (out_dim,),
        "out_w": (out_dim, out_dim), "out_b": (out_dim,),
        "skip_w": (in_dim, out_dim),
    }


def init_lfa_params(params: Parameters, prefix: str, in_dim: int, out_dim: int,
                    rng: np.random.Generator) -> None:
    for name, shape in _block_param_shapes(in_dim, out_dim).items():
        if name.endswith("_b"):
            params.add(f"{prefix}.{name}", np.zeros(shape, dtype=np.float32))
        else:
            params.add(f"{prefix}.{name}", T.glorot_uniform(rng, shape[0], shape[1]))


def init_encoder_params(params: Parameters, in_dim: int, cfg: EncoderConfig,
                        rng: np.random.Generator) -> None:
    d_in = in_dim
    for l, d_out in enumerate(cfg.level_dims):
        init_lfa_params(params, f"enc{l}", d_in, d_out, rng)
        d_in = d_out


def lfa_block(positions: np.ndarray, features: Tensor, neigh_idx: np.ndarray,
              params: Parameters, prefix: str) -> Tensor:
    """Dilated residual unit: two (position encoding + attentive pooling)
    stages plus a learned additive skip. Row count is preserved."""
    p = lambda name: params[f"{prefix}.{name}"]
    neighbor_xyz = positions[neigh_idx]

    f = T.leaky_relu(T.linear(features, p("in_w"), p("in_b")))
    code1 = locse(positions, neighbor_xyz, p("se1_w"), p("se1_b"))
    h1 = T.concat([code1, T.gather(f, neigh_idx)], axis=2)
    pool1 = attentive_pooling(h1, p("att1_w"), p("att1_b"))
    g = T.leaky_relu(T.linear(pool1, p("mid_w"), p("mid_b")))

    code2 = locse(positions, neighbor_xyz, p("se2_w"), p("se2_b"))
    h2 = T.concat([code2, T.gather(g, neigh_idx)], axis=2)
    pool2 = attentive_pooling(h2, p("att2_w"), p("att2_b"))

    main = T.linear(pool2, p("out_w"), p("out_b"))
    skip = T.matmul(features, p("skip_w"))
    return T.leaky_relu(T.add(main, skip))


def random_sample_level(positions, features: Tensor, ratio: int, seed) -> tuple:
    """Keep ceil(N/ratio) rows chosen uniformly without replacement."""
    n = len(positions)
    keep_n = math.ceil(n / ratio)
    if keep_n == 0:
        raise ValueError("random sampling emptied the level")
    rng = rng_from(seed)
    kept = np.sort(rng.permutation(n)[:keep_n]).astype(np.int64)
    return positions[kept], T.gather(features, kept), kept


def encode(positions: np.ndarray, point_features, params: Parameters,
           cfg: EncoderConfig, sample_seed=None) -> HierarchicalFeatures:
    """Run the four-block encoder; sample_seed defaults to cfg.seed."""
    n = len(positions)
    sizes = cfg.level_sizes(n)
    if any(b >= a for a, b in zip([n] + sizes[:-1], sizes)):
        raise ValueError(
            f"cloud of {n} points too small for decimation {cfg.decimation} "
            f"(level sizes {sizes} must strictly decrease)"
        )
    seed = cfg.seed if sample_seed is None else sample_seed

    feats = point_features if isinstance(point_features, Tensor) else Tensor(point_features)
    pos = np.asarray(positions, dtype=np.float32)
    src = np.arange(n, dtype=np.int64)
    hf = HierarchicalFeatures()
    for l in range(4):
        k = min(cfg.neighbors_k_enc, len(pos))
        neigh_idx, _ = SpatialIndex(pos).knn_batch(pos, k)
        feats = lfa_block(pos, feats, neigh_idx, params, f"enc{l}")
        pos, feats, kept = random_sample_level(pos, feats, cfg.decimation[l], (seed, l))
        src = src[kept]
        hf.levels.append(Level(positions=pos, features=feats, source_indices=src.copy(),
                               lfa_neighbors=neigh_idx, kept=kept))
    return hf
