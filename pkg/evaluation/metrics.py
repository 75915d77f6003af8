"""Segmentation, instance and oversegmentation quality metrics."""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from cloud.errors import ShapeMismatchError
from cloud.model import LabelAssignment, PointCloud
from spatial.neighbors import NeighborTable, build_neighbor_table
from spatial.octree import Octree


logger = logging.getLogger(__name__)

IOU_MATCH = 0.5


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts[g, p] of points with ground truth g predicted as p."""
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ShapeMismatchError(f"confusion matrix must be square, got {counts.shape}")
        object.__setattr__(self, "counts", counts)

    @property
    def num_classes(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0


def confusion_matrix(pred_labels, gt_labels, num_classes: int) -> ConfusionMatrix:
    """Confusion matrix over points where both labels lie in [0, num_classes)."""
    pred = np.asarray(pred_labels, dtype=np.int64)
    gt = np.asarray(gt_labels, dtype=np.int64)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"{pred.size} predicted labels for {gt.size} ground-truth labels")
    valid = (pred >= 0) & (pred < num_classes) & (gt >= 0) & (gt < num_classes)
    counts = np.bincount(gt[valid] * num_classes + pred[valid], minlength=num_classes * num_classes)
    return ConfusionMatrix(counts.reshape(num_classes, num_classes))


def miou(conf: ConfusionMatrix) -> Tuple[float, np.ndarray]:
    """
    Mean IoU and per-class IoU.

    Classes absent from both ground truth and prediction get NaN and are left
    out of the mean.
    """
    tp = np.diag(conf.counts).astype(np.float64)
    fp = conf.counts.sum(axis=0) - tp
    fn = conf.counts.sum(axis=1) - tp
    denom = tp + fp + fn
    per_class = np.full(conf.num_classes, math.nan)
    present = denom > 0
    per_class[present] = tp[present] / denom[present]
    mean = float(np.mean(per_class[present])) if present.any() else 0.0
    return mean, per_class


@dataclass(frozen=True, eq=False)
class ScoredInstance:
    """A predicted instance: class, member point indices and confidence."""
    class_id: int
    members: np.ndarray
    score: float = 1.0


def ground_truth_instances(cloud: PointCloud) -> List[ScoredInstance]:
    """One instance per (class, instance id) pair of the cloud's labels."""
    labels = cloud.require("gt_labels")
    instances = cloud.require("gt_instances")
    valid = np.flatnonzero((labels >= 0) & (instances >= 0))
    keys = np.stack([labels[valid], instances[valid]], axis=1)
    out = []
    for key in np.unique(keys, axis=0):
        members = valid[np.all(keys == key, axis=1)]
        out.append(ScoredInstance(class_id=int(key[0]), members=members))
    return out


def point_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.intersect1d(a, b, assume_unique=True).size
    union = a.size + b.size - inter
    return inter / union if union else 0.0


def average_precision(tp: np.ndarray, num_gt: int) -> float:
    """Area under the precision-recall step curve (all-point interpolation)."""
    if num_gt == 0 or tp.size == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    recall = cum_tp / num_gt
    precision = cum_tp / np.arange(1, tp.size + 1)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def instance_ap50(pred_instances: Sequence[ScoredInstance],
                  gt_instances: Sequence[ScoredInstance]) -> Tuple[Dict[int, float], float]:
    """
    AP at point-set IoU 0.5 per class and its mean.

    Predictions are matched greedily in descending score order (stable for
    ties) to the best unmatched ground truth of their class. The mean runs over
    classes with at least one ground-truth instance.
    """
    gt_classes = sorted({g.class_id for g in gt_instances})
    per_class: Dict[int, float] = {}
    for class_id in gt_classes:
        gts = [g for g in gt_instances if g.class_id == class_id]
        preds = sorted((p for p in pred_instances if p.class_id == class_id), key=lambda p: -p.score)
        matched = np.zeros(len(gts), dtype=bool)
        tp = np.zeros(len(preds))
        for i, pred in enumerate(preds):
            ious = [(-1.0 if matched[j] else point_iou(pred.members, g.members)) for j, g in enumerate(gts)]
            best = int(np.argmax(ious))
            if ious[best] >= IOU_MATCH:
                matched[best] = True
                tp[i] = 1.0
        per_class[class_id] = average_precision(tp, len(gts))
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return per_class, mean


@dataclass(frozen=True)
class BoundaryScores:
    recall: float
    precision: float
    f1: float
    gt_boundary: int
    pred_boundary: int


def _pairs(neighbors: NeighborTable) -> Tuple[np.ndarray, np.ndarray]:
    rows = np.repeat(np.arange(len(neighbors), dtype=np.int64), neighbors.counts())
    cols = np.concatenate(neighbors.ball) if len(neighbors) else np.empty(0, np.int64)
    return rows, cols


def boundary_mask(labels: np.ndarray, neighbors: NeighborTable) -> np.ndarray:
    """Points with a differently labelled point within the neighbour radius."""
    rows, cols = _pairs(neighbors)
    mask = np.zeros(labels.size, dtype=bool)
    mask[rows[labels[rows] != labels[cols]]] = True
    return mask


def overseg_prf(region_ids, cloud: PointCloud, boundary_tolerance: float,
                neighbors: Optional[NeighborTable] = None) -> BoundaryScores:
    """
    Boundary recall, precision and F1 of an oversegmentation.

    Ground-truth boundary points have a differently classed point within the
    tolerance; predicted boundary points analogously use region ids. A
    boundary point counts as matched when the other set has a point within the
    tolerance. Empty predicted boundaries give precision 1 only when the
    ground truth has no boundary either.
    """
    region_ids = np.asarray(region_ids, dtype=np.int64)
    gt = cloud.require("gt_labels")
    if region_ids.shape != gt.shape:
        raise ShapeMismatchError(f"{region_ids.size} region ids for {gt.size} points")
    if neighbors is None:
        neighbors = build_neighbor_table(Octree(cloud.positions), boundary_tolerance)
    gt_b = boundary_mask(gt, neighbors)
    pred_b = boundary_mask(region_ids, neighbors)

    rows, cols = _pairs(neighbors)
    pred_hit = np.zeros(gt.size, dtype=bool)
    pred_hit[rows[pred_b[rows] & gt_b[cols]]] = True
    gt_hit = np.zeros(gt.size, dtype=bool)
    gt_hit[rows[gt_b[rows] & pred_b[cols]]] = True

    n_gt, n_pred = int(gt_b.sum()), int(pred_b.sum())
    recall = float(gt_hit.sum()) / n_gt if n_gt else 1.0
    if n_pred:
        precision = float(pred_hit.sum()) / n_pred
    else:
        precision = 1.0 if n_gt == 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    logger.debug(f"Boundary points: {n_gt} ground truth, {n_pred} predicted")
    return BoundaryScores(recall=recall, precision=precision, f1=f1, gt_boundary=n_gt, pred_boundary=n_pred)


def instances_from_labels(assignment: LabelAssignment, neighbors: NeighborTable) -> List[ScoredInstance]:
    """
    Predicted instances of a per-point labelling.

    Labelled regions of the same class with a member pair inside the
    neighbour radius belong to one instance; its score is the mean point
    confidence. Instances come out ordered by their lowest point index.
    """
    if len(neighbors) != len(assignment):
        raise ShapeMismatchError(f"{len(assignment)} labels for a {len(neighbors)}-point neighbour table")
    labelled = assignment.labeled_mask()
    if not labelled.any():
        return []
    region_ids, compact = np.unique(assignment.region_ids[labelled], return_inverse=True)
    node = np.full(len(assignment), -1, dtype=np.int64)
    node[labelled] = compact

    rows, cols = _pairs(neighbors)
    keep = (node[rows] >= 0) & (node[cols] >= 0) & (node[rows] != node[cols]) \
        & (assignment.classes[rows] == assignment.classes[cols])
    graph = coo_matrix((np.ones(int(keep.sum())), (node[rows[keep]], node[cols[keep]])),
                       shape=(region_ids.size, region_ids.size))
    _, component = connected_components(graph, directed=False)

    point_component = np.full(len(assignment), -1, dtype=np.int64)
    point_component[labelled] = component[compact]
    out = []
    for c in np.unique(component):
        members = np.flatnonzero(point_component == c)
        out.append(ScoredInstance(class_id=int(assignment.classes[members[0]]), members=members,
                                  score=float(assignment.confidences[members].mean())))
    out.sort(key=lambda inst: int(inst.members[0]))
    logger.debug(f"{len(out)} instances from {region_ids.size} labelled regions")
    return out
