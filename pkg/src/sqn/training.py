"""Weak-supervision training loop.

Per step: augment the cloud, re-encode it, query the labeled positions,
take a class-weighted cross-entropy over those queries only, and apply an
adaptive-moment update. Optionally retrains a fresh model on dense pseudo
labels afterwards.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .cloud import PointCloud
from .encoder import EncoderConfig, encode, input_point_features
from .labels import SparseLabelSet, class_weights, dense_label_set, generate_pseudo_labels
from .query import Model, QueryConfig, classify, init_model, query_features
from .seeding import rng_from
from .tensor import Tensor, adam_step, backward, load_checkpoint, restore_parameters, save_checkpoint

# pseudo-label retraining pays off only for extremely sparse supervision
RETRAIN_AUTO_THRESHOLD = 500


@dataclass
class TrainConfig:
    epochs: int = 200
    steps_per_epoch: int = 1   # augmented passes over the labeled set per epoch
    queries_per_step: int = 256
    lr: float = 0.01
    lr_decay: float = 0.95     # applied once per epoch
    augment: bool = True
    noise_sigma: float = 0.005
    noise_clip: float = 0.02
    seed: int = 0
    retrain_with_pseudo: bool | None = None  # None: auto, on when labels < 500
    class_weighting: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.queries_per_step < 1 or self.steps_per_epoch < 1:
            raise ValueError("epochs, steps_per_epoch and queries_per_step must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)  # (epoch, loss, train_acc, seconds)

    def append(self, epoch, loss, acc, seconds):
        self.rows.append((int(epoch), float(loss), float(acc), float(seconds)))

    def to_csv(self) -> str:
        lines = ["epoch,loss,train_acc,seconds"]
        for epoch, loss, acc, seconds in self.rows:
            lines.append(f"{epoch},{loss!r},{acc!r},{seconds:.3f}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as f:
            f.write(self.to_csv())


def apply_isometry(cloud: PointCloud, flip_x: bool, flip_y: bool, theta: float) -> PointCloud:
    """x/y flips then a rotation about the vertical axis, all around the
    xy-centroid so the scene stays in place. Labels and colors untouched."""
    pos = cloud.positions.astype(np.float64)
    center = pos[:, :2].mean(axis=0)
    xy = pos[:, :2] - center
    if flip_x:
        xy[:, 0] = -xy[:, 0]
    if flip_y:
        xy[:, 1] = -xy[:, 1]
    if theta:
        c, s = np.cos(theta), np.sin(theta)
        xy = xy @ np.array([[c, s], [-s, c]])
    pos[:, :2] = xy + center
    return cloud.with_positions(pos.astype(np.float32))


def flip_rotate(cloud: PointCloud, seed) -> PointCloud:
    """Seeded draw of the isometry part: flips with prob 0.5 each, rotation
    angle uniform in [0, 2pi)."""
    rng = rng_from(seed)
    flip_x = bool(rng.uniform() < 0.5)
    flip_y = bool(rng.uniform() < 0.5)
    theta = float(rng.uniform(0.0, 2.0 * np.pi))
    return apply_isometry(cloud, flip_x, flip_y, theta)


def augment(cloud: PointCloud, seed, noise_sigma=0.005, noise_clip=0.02) -> PointCloud:
    """flip_rotate plus clipped Gaussian position noise."""
    out = flip_rotate(cloud, seed)
    if noise_sigma > 0:
        rng = rng_from(seed, "noise")
        noise = np.clip(rng.normal(0.0, noise_sigma, out.positions.shape),
                        -noise_clip, noise_clip)
        out = out.with_positions(out.positions + noise.astype(np.float32))
    return out


def masked_loss(logits: Tensor, query_labels, weights) -> Tensor:
    """Mean over the labeled queries of w_y * (-log softmax(logits)_y).
    Unlabeled points never enter: the batch is built from labeled indices."""
    labels = np.asarray(query_labels, dtype=np.int64)
    if logits.data.ndim != 2 or len(labels) != logits.data.shape[0]:
        raise ValueError(f"logits {logits.data.shape} vs {len(labels)} labels")
    if len(labels) == 0:
        raise ValueError("empty query batch")
    q, c = logits.data.shape
    logp = T.log_softmax(logits, axis=1)
    onehot = np.zeros((q, c), dtype=logits.data.dtype)
    onehot[np.arange(q), labels] = 1.0
    picked = T.reduce_sum(T.mul(logp, Tensor(onehot, dtype=logits.data.dtype)), axis=1)
    w = np.asarray(weights, dtype=logits.data.dtype)[labels]
    weighted = T.mul(picked, Tensor(w, dtype=logits.data.dtype))
    return T.neg(T.reduce_mean(weighted))


def _train_loop(model: Model, cloud: PointCloud, labels: SparseLabelSet,
                cfg: TrainConfig, log: TrainLog) -> None:
    weights = (class_weights(labels, cloud.num_classes) if cfg.class_weighting
               else np.ones(cloud.num_classes, dtype=np.float32))
    start_epoch = model.params.step // cfg.steps_per_epoch
    for epoch in range(start_epoch, cfg.epochs):
        t0 = time.perf_counter()
        lr = cfg.lr * cfg.lr_decay ** epoch
        losses, accs = [], []
        for sub in range(cfg.steps_per_epoch):
            step = epoch * cfg.steps_per_epoch + sub
            step_cloud = (
                augment(cloud, (cfg.seed, "aug", step), cfg.noise_sigma, cfg.noise_clip)
                if cfg.augment else cloud
            )
            feats = input_point_features(step_cloud)
            hf = encode(step_cloud.positions, feats, model.params, model.encoder_cfg,
                        sample_seed=(cfg.seed, "rs", step))
            if len(labels) <= cfg.queries_per_step:
                batch = np.arange(len(labels))
            else:
                batch = rng_from(cfg.seed, "batch", step).choice(
                    len(labels), size=cfg.queries_per_step, replace=False)
            qpos = step_cloud.positions[labels.indices[batch]]
            qlab = labels.labels[batch].astype(np.int64)
            qr = query_features(hf, qpos, model.query_cfg)
            logits = classify(qr.feature, model.params, model.head_layers)
            loss = masked_loss(logits, qlab, weights)
            backward(loss)
            adam_step(model.params, lr)
            losses.append(float(loss.data))
            accs.append(float((np.argmax(logits.data, axis=1) == qlab).mean()))
        log.append(epoch, float(np.mean(losses)), float(np.mean(accs)),
                   time.perf_counter() - t0)


def train(cloud: PointCloud, sparse_labels: SparseLabelSet, encoder_cfg: EncoderConfig,
          query_cfg: QueryConfig, train_cfg: TrainConfig, log_path=None,
          initial_model: Model | None = None) -> Model:
    """Full weak-supervision training; returns the model with the clean cloud
    attached as its query support. `initial_model` continues a checkpointed
    run up to train_cfg.epochs total steps."""
    if len(sparse_labels) < 1:
        raise ValueError("need at least one labeled point")
    if sparse_labels.n != len(cloud):
        raise ValueError(f"label set is for n={sparse_labels.n}, cloud has {len(cloud)}")

    model = initial_model
    if model is None:
        model = init_model(encoder_cfg, query_cfg, cloud.num_classes,
                           input_point_features(cloud).shape[1], seed=(train_cfg.seed, "init"))
    log = TrainLog()
    _train_loop(model, cloud, sparse_labels, train_cfg, log)

    do_retrain = train_cfg.retrain_with_pseudo
    if do_retrain is None:
        do_retrain = len(sparse_labels) < RETRAIN_AUTO_THRESHOLD
    model.attach(cloud, sample_seed=(train_cfg.seed, "attach"))
    if do_retrain and train_cfg.epochs > 0:
        model = retrain_with_pseudo(model, cloud, sparse_labels, encoder_cfg,
                                    query_cfg, train_cfg, log=log)
    if log_path is not None:
        log.write(log_path)
    model.train_log = log
    return model


def retrain_with_pseudo(model: Model, cloud: PointCloud, sparse_labels: SparseLabelSet,
                        encoder_cfg: EncoderConfig, query_cfg: QueryConfig,
                        train_cfg: TrainConfig, log: TrainLog | None = None) -> Model:
    """Predict dense pseudo labels (true labels kept at annotated points),
    then train a brand-new model from scratch on them."""
    pseudo = generate_pseudo_labels(model, cloud, sparse_labels)
    dense = dense_label_set(pseudo, cloud.num_classes, seed=sparse_labels.seed)
    fresh = init_model(encoder_cfg, query_cfg, cloud.num_classes, model.input_dim,
                       seed=(train_cfg.seed, "retrain-init"))
    relog = log if log is not None else TrainLog()
    recfg = TrainConfig(**{**asdict(train_cfg), "retrain_with_pseudo": False,
                           "seed": train_cfg.seed})
    _train_loop(fresh, cloud, dense, recfg, relog)
    fresh.attach(cloud, sample_seed=(train_cfg.seed, "attach"))
    fresh.train_log = relog
    return fresh


# ---------------------------------------------------------------------------
# model persistence: SQNW checkpoint + a JSON sidecar for the configs


def save_model(model: Model, path) -> None:
    save_checkpoint(model.params, path)
    meta = {
        "encoder": asdict(model.encoder_cfg),
        "query": asdict(model.query_cfg),
        "num_classes": model.num_classes,
        "input_dim": model.input_dim,
    }
    with open(f"{path}.json", "w") as f:
        json.dump(meta, f, indent=0, sort_keys=True)


def load_model(path) -> Model:
    state, step = load_checkpoint(path)
    with open(f"{path}.json") as f:
        meta = json.load(f)
    enc = EncoderConfig(**{k: tuple(v) if isinstance(v, list) else v
                           for k, v in meta["encoder"].items()})
    qc = QueryConfig(**{k: tuple(v) if isinstance(v, list) else v
                        for k, v in meta["query"].items()})
    params = restore_parameters(state, step)
    return Model(params=params, encoder_cfg=enc, query_cfg=qc,
                 num_classes=meta["num_classes"], input_dim=meta["input_dim"])
