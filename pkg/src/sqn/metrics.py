"""Segmentation evaluation: confusion matrix, OA / mAcc / IoU, and
boundary-vs-interior analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud
from .neighbors import SpatialIndex


class MetricsError(Exception):
    pass


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C), entry [gt, pred]

    @classmethod
    def zeros(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self):
        return self.counts.shape[0]

    def total(self):
        return int(self.counts.sum())

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


def accumulate(gt, pred, num_classes: int, cm: ConfusionMatrix | None = None) -> ConfusionMatrix:
    gt = np.asarray(gt, dtype=np.int64).ravel()
    pred = np.asarray(pred, dtype=np.int64).ravel()
    if len(gt) != len(pred):
        raise MetricsError(f"length mismatch: gt {len(gt)} vs pred {len(pred)}")
    if len(gt) == 0:
        raise MetricsError("empty input")
    if gt.min() < 0 or gt.max() >= num_classes or pred.min() < 0 or pred.max() >= num_classes:
        raise MetricsError(f"labels out of range [0, {num_classes})")
    flat = np.bincount(gt * num_classes + pred, minlength=num_classes * num_classes)
    counts = flat.reshape(num_classes, num_classes)
    if cm is None:
        return ConfusionMatrix(counts)
    cm.counts += counts
    return cm


def oa(cm: ConfusionMatrix) -> float:
    return float(np.trace(cm.counts) / cm.counts.sum())


def macc(cm: ConfusionMatrix) -> float:
    """Mean per-class recall over classes present in the ground truth."""
    gt_totals = cm.counts.sum(axis=1)
    present = gt_totals > 0
    recalls = np.diag(cm.counts)[present] / gt_totals[present]
    return float(recalls.mean())


def per_class_iou(cm: ConfusionMatrix) -> np.ndarray:
    """IoU per class; NaN where the union is empty (class absent everywhere)."""
    tp = np.diag(cm.counts).astype(np.float64)
    union = cm.counts.sum(axis=0) + cm.counts.sum(axis=1) - np.diag(cm.counts)
    out = np.full(cm.num_classes, np.nan)
    nz = union > 0
    out[nz] = tp[nz] / union[nz]
    return out


def miou(cm: ConfusionMatrix) -> float:
    """Mean IoU over classes with non-zero union."""
    iou = per_class_iou(cm)
    valid = ~np.isnan(iou)
    if not valid.any():
        raise MetricsError("no class has a non-empty union")
    return float(iou[valid].mean())


def boundary_mask(cloud: PointCloud, radius: float) -> np.ndarray:
    """True where some neighbor within `radius` carries a different gt label."""
    if cloud.gt_labels is None:
        raise MetricsError("boundary analysis needs ground-truth labels")
    if radius <= 0:
        raise MetricsError(f"radius must be positive, got {radius}")
    index = SpatialIndex(cloud.positions)
    mask = np.zeros(len(cloud), dtype=bool)
    labels = cloud.gt_labels
    for i in range(len(cloud)):
        nbrs = index.radius(cloud.positions[i], radius)
        mask[i] = bool(np.any(labels[nbrs] != labels[i]))
    return mask


@dataclass
class EvalReport:
    num_classes: int
    overall: dict = field(default_factory=dict)           # metric -> value
    class_iou: dict = field(default_factory=dict)         # class id -> value
    boundary: dict = field(default_factory=dict)          # radius -> {region -> {metric -> value}}

    def to_csv(self) -> str:
        lines = ["metric,class,value"]
        for name, value in self.overall.items():
            lines.append(f"{name},,{value!r}")
        for cls, value in self.class_iou.items():
            lines.append(f"iou,{cls},{value!r}")
        for radius, regions in self.boundary.items():
            for region, metrics_ in regions.items():
                for name, value in metrics_.items():
                    lines.append(f"{region}_{name}@r={radius!r},,{value!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        rows = [line.split(",") for line in text.strip().splitlines()[1:]]
        report = cls(num_classes=0)
        for metric, cls_id, value in rows:
            if cls_id:
                report.class_iou[int(cls_id)] = float(value)
                report.num_classes = max(report.num_classes, int(cls_id) + 1)
            elif "@r=" in metric:
                head, radius = metric.split("@r=")
                region, name = head.split("_", 1)
                bucket = report.boundary.setdefault(float(radius), {})
                bucket.setdefault(region, {})[name] = float(value)
            else:
                report.overall[metric] = float(value)
        return report


def evaluate_predictions(gt, pred, num_classes: int) -> dict:
    cm = accumulate(gt, pred, num_classes)
    return {"oa": oa(cm), "macc": macc(cm), "miou": miou(cm)}


def eval_report(model, cloud: PointCloud, boundary_radii=()) -> EvalReport:
    """Full-cloud evaluation with optional boundary/interior splits."""
    from .query import predict

    if cloud.gt_labels is None:
        raise MetricsError("evaluation needs ground-truth labels")
    pred = predict(model, cloud)
    gt = cloud.gt_labels.astype(np.int64)
    cm = accumulate(gt, pred, cloud.num_classes)
    report = EvalReport(num_classes=cloud.num_classes)
    report.overall = {"oa": oa(cm), "macc": macc(cm), "miou": miou(cm)}
    iou = per_class_iou(cm)
    report.class_iou = {c: float(iou[c]) for c in range(cloud.num_classes) if not np.isnan(iou[c])}
    for radius in boundary_radii:
        mask = boundary_mask(cloud, radius)
        regions = {}
        for region, sel in (("boundary", mask), ("interior", ~mask)):
            if sel.any():
                regions[region] = evaluate_predictions(gt[sel], pred[sel], cloud.num_classes)
        report.boundary[float(radius)] = regions
    return report
