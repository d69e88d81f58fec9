"""Desk-scale experiment suites: label-ratio degradation, query-level
ablation, neighbor-count sweep and annotation-seed sensitivity.

Every suite runs one full train+eval per cell, sequentially, with all
randomness derived from an explicit seed bundle, so repeated runs are
bit-identical. Results land as plot-ready CSV plus a self-contained HTML
chart.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cloud import PointCloud
from .encoder import EncoderConfig
from .labels import sample_sparse_labels
from .metrics import accumulate, miou, oa, per_class_iou
from .query import QueryConfig, predict
from .scenes import SceneSpec, synth_scene
from .training import TrainConfig, train


@dataclass
class ExperimentCell:
    key: str
    oa: float
    miou: float
    class_iou: list
    wall_clock: float


@dataclass
class ExperimentResult:
    name: str
    num_classes: int
    cells: list = field(default_factory=list)

    def cell(self, key) -> ExperimentCell:
        for c in self.cells:
            if c.key == str(key):
                return c
        raise KeyError(key)

    def mious(self) -> list:
        return [c.miou for c in self.cells]

    def to_csv(self, include_timing=True) -> str:
        iou_cols = ",".join(f"iou_{c}" for c in range(self.num_classes))
        header = f"cell,oa,miou,{iou_cols}"
        if include_timing:
            header += ",wall_clock"
        lines = [header]
        for c in self.cells:
            ious = ",".join(repr(v) for v in c.class_iou)
            row = f"{c.key},{c.oa!r},{c.miou!r},{ious}"
            if include_timing:
                row += f",{c.wall_clock:.3f}"
            lines.append(row)
        return "\n".join(lines) + "\n"

    def to_html(self) -> str:
        return _svg_chart(self.name, [c.key for c in self.cells], self.mious())

    def write(self, outdir) -> None:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, f"{self.name}.csv"), "w") as f:
            f.write(self.to_csv())
        with open(os.path.join(outdir, f"{self.name}.html"), "w") as f:
            f.write(self.to_html())


def _svg_chart(title, keys, values, width=640, height=360, pad=50):
    """Minimal self-contained line chart (mIoU per cell)."""
    n = len(values)
    xs = [pad + (width - 2 * pad) * (i / max(n - 1, 1)) for i in range(n)]
    ys = [height - pad - (height - 2 * pad) * v for v in values]
    pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(xs, ys))
    labels = "".join(
        f'<text x="{x:.1f}" y="{height - pad + 16}" font-size="11" text-anchor="middle">{k}</text>'
        for x, k in zip(xs, keys)
    )
    dots = "".join(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="#d62728"/>'
                   for x, y in zip(xs, ys))
    axis_labels = "".join(
        f'<text x="{pad - 8}" y="{height - pad - (height - 2 * pad) * t + 4}" '
        f'font-size="11" text-anchor="end">{t:.1f}</text>'
        f'<line x1="{pad}" y1="{height - pad - (height - 2 * pad) * t}" '
        f'x2="{width - pad}" y2="{height - pad - (height - 2 * pad) * t}" '
        f'stroke="#ddd"/>'
        for t in (0.0, 0.25, 0.5, 0.75, 1.0)
    )
    return f"""<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>{title}</title></head>
<body><h2>{title} (mIoU)</h2>
<svg width="{width}" height="{height}" xmlns="http://www.w3.org/2000/svg">
{axis_labels}
<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>
{dots}
{labels}
</svg></body></html>
"""


def evaluate_model(model, cloud: PointCloud) -> dict:
    pred = predict(model, cloud)
    cm = accumulate(cloud.gt_labels.astype(np.int64), pred, cloud.num_classes)
    iou = per_class_iou(cm)
    return {
        "oa": oa(cm),
        "miou": miou(cm),
        "class_iou": [float(v) for v in iou],
    }


def run_cell(cloud, label_set, enc_cfg, q_cfg, t_cfg) -> dict:
    t0 = time.perf_counter()
    model = train(cloud, label_set, enc_cfg, q_cfg, t_cfg)
    out = evaluate_model(model, cloud)
    out["wall_clock"] = time.perf_counter() - t0
    out["model"] = model
    return out


def _append(result, key, metrics):
    result.cells.append(ExperimentCell(
        key=str(key), oa=metrics["oa"], miou=metrics["miou"],
        class_iou=metrics["class_iou"], wall_clock=metrics["wall_clock"],
    ))


def degradation_sweep(cloud: PointCloud, ratios, enc_cfg, q_cfg, t_cfg,
                      label_seed=0) -> ExperimentResult:
    """One train+eval per labeling ratio. Ratios must be descending; a fixed
    label seed makes the smaller sets nested subsets of the larger ones."""
    ratios = list(ratios)
    if any(b >= a for a, b in zip(ratios, ratios[1:])):
        raise ValueError(f"ratios must be strictly descending, got {ratios}")
    result = ExperimentResult(name="degradation", num_classes=cloud.num_classes)
    for ratio in ratios:
        labels = sample_sparse_labels(cloud, ratio, label_seed)
        metrics = run_cell(cloud, labels, enc_cfg, q_cfg, t_cfg)
        _append(result, ratio, metrics)
    return result


LEVEL_SUBSETS = ((1,), (4,), (1, 2), (1, 2, 3), (1, 2, 3, 4))


def query_level_ablation(cloud: PointCloud, enc_cfg, q_cfg, t_cfg, ratio,
                         subsets=LEVEL_SUBSETS, n_seeds=3,
                         label_seed=0) -> ExperimentResult:
    """Train with the head reading different encoder-level subsets; metrics
    are averaged over n_seeds seed bundles per subset."""
    result = ExperimentResult(name="level_ablation", num_classes=cloud.num_classes)
    for subset in subsets:
        runs = []
        for s in range(n_seeds):
            labels = sample_sparse_labels(cloud, ratio, label_seed * 1009 + s)
            sub_q = replace(q_cfg, levels=tuple(subset))
            sub_t = replace(t_cfg, seed=(t_cfg.seed, s))
            runs.append(run_cell(cloud, labels, enc_cfg, sub_q, sub_t))
        key = "+".join(str(l) for l in subset)
        avg = {
            "oa": float(np.mean([r["oa"] for r in runs])),
            "miou": float(np.mean([r["miou"] for r in runs])),
            "class_iou": list(np.mean([r["class_iou"] for r in runs], axis=0)),
            "wall_clock": float(np.sum([r["wall_clock"] for r in runs])),
        }
        _append(result, key, avg)
    return result


def k_sweep(cloud: PointCloud, enc_cfg, q_cfg, t_cfg, ratio,
            ks=(1, 3, 5, 10, 25), label_seed=0) -> ExperimentResult:
    labels = sample_sparse_labels(cloud, ratio, label_seed)
    result = ExperimentResult(name="k_sweep", num_classes=cloud.num_classes)
    for k in ks:
        metrics = run_cell(cloud, labels, enc_cfg, replace(q_cfg, k=int(k)), t_cfg)
        _append(result, k, metrics)
    return result


def seed_sensitivity(cloud: PointCloud, enc_cfg, q_cfg, t_cfg, ratio,
                     n_seeds=5, label_seed=0) -> ExperimentResult:
    """Retrain with different annotated subsets at a fixed ratio; appends
    mean and population-std summary cells."""
    result = ExperimentResult(name="seed_sensitivity", num_classes=cloud.num_classes)
    for s in range(n_seeds):
        labels = sample_sparse_labels(cloud, ratio, label_seed * 1009 + s)
        metrics = run_cell(cloud, labels, enc_cfg, q_cfg, t_cfg)
        _append(result, f"seed{s}", metrics)
    mious = np.array(result.mious())
    oas = np.array([c.oa for c in result.cells])
    ious = np.array([c.class_iou for c in result.cells])
    for key, reducer in (("mean", np.mean), ("std", np.std)):
        result.cells.append(ExperimentCell(
            key=key, oa=float(reducer(oas)), miou=float(reducer(mious)),
            class_iou=[float(v) for v in reducer(ious, axis=0)], wall_clock=0.0,
        ))
    return result


# ---------------------------------------------------------------------------
# frozen desk benchmark
#
# Two protocols share the synthetic-room scene family: the headline learning
# run (full scene, two-stage training) and a lighter sweep protocol for the
# comparative studies (smaller scene, single stage), sized so the whole
# acceptance suite finishes in tens of minutes on one CPU core.

SWEEP_POINTS_PER_CLASS = (1500, 1100, 850, 550)


def desk_scene(seed=0) -> PointCloud:
    return synth_scene(SceneSpec(seed=seed))


def sweep_scene(seed=0) -> PointCloud:
    return synth_scene(SceneSpec(seed=seed, points_per_class=SWEEP_POINTS_PER_CLASS))


def desk_train_config(seed=0) -> TrainConfig:
    return TrainConfig(epochs=200, steps_per_epoch=3, lr_decay=0.985, seed=seed)


def sweep_train_config(seed=0, epochs=100, retrain=False) -> TrainConfig:
    return TrainConfig(epochs=epochs, steps_per_epoch=3, lr_decay=0.985, seed=seed,
                       retrain_with_pseudo=retrain)


def desk_configs(epochs=200, seed=0):
    enc = EncoderConfig(seed=seed)
    qc = QueryConfig()
    tc = TrainConfig(epochs=epochs, steps_per_epoch=3, lr_decay=0.985, seed=seed)
    return enc, qc, tc
