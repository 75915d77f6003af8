"""Self-training loop: alternate region predictions and merge steps."""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from cloud.config import SceneConfig
from cloud.model import LabelAssignment, PointCloud, WeakLabelSet
from merging.engine import extract_instances, filter_small_regions, merge_step
from merging.predictors.base import BasePredictor
from merging.state import Instance, MergeState
from segmentation.oversegment import SceneGeometry, prepare_geometry
from segmentation.regions import Partition


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterationRecord:
    """Label quality after one iteration; precision and recall are NaN without ground truth."""
    iteration: int
    labeled_fraction: float
    pseudo_precision: float
    pseudo_recall: float
    regions: int
    labeled_regions: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SelfTrainingResult:
    assignment: LabelAssignment
    initial: IterationRecord
    trace: List[IterationRecord]
    state: MergeState

    def instances(self) -> List[Instance]:
        return extract_instances(self.state)


def label_quality(assignment: LabelAssignment, gt_labels: Optional[np.ndarray]):
    """
    (labeled_fraction, precision, recall) of a per-point labelling.

    Precision is measured over labelled points, recall over all points with a
    ground-truth class.
    """
    labeled = assignment.labeled_mask()
    n = labeled.size
    fraction = float(labeled.sum()) / n if n else 0.0
    if gt_labels is None:
        return fraction, math.nan, math.nan
    correct = int(np.sum(labeled & (assignment.classes == gt_labels)))
    precision = correct / int(labeled.sum()) if labeled.any() else 0.0
    annotated = int(np.sum(gt_labels >= 0))
    recall = correct / annotated if annotated else 0.0
    return fraction, precision, recall


def _record(state: MergeState, iteration: int) -> IterationRecord:
    fraction, precision, recall = label_quality(state.assignment(), state.cloud.gt_labels)
    return IterationRecord(
        iteration=iteration,
        labeled_fraction=fraction,
        pseudo_precision=precision,
        pseudo_recall=recall,
        regions=len(state.regions),
        labeled_regions=sum(1 for r in state.regions.values() if r.label.is_labeled),
    )


def self_train(cloud: PointCloud, partition: Partition, weak: WeakLabelSet, predictor: BasePredictor,
               config: SceneConfig, geometry: Optional[SceneGeometry] = None,
               on_iteration: Optional[Callable[[IterationRecord], None]] = None) -> SelfTrainingResult:
    """
    Propagate weak labels through N_Total predict-then-merge iterations.

    Args:
        cloud: Input cloud (gt_labels, when present, feed the quality trace)
        partition: Oversegmentation carrying the initial pseudo labels
        weak: Weak labels used to build the partition
        predictor: Region predictor called once per iteration
        config: Scene configuration
        geometry: Frames, descriptors and neighbourhoods already built for cloud
        on_iteration: Called with each iteration's record

    Returns:
        SelfTrainingResult with final per-point labels and the trace

    Raises:
        ShapeMismatchError: If the predictor returns the wrong row count
    """
    geometry = geometry or prepare_geometry(cloud, config)
    num_classes = max(weak.num_classes, 1)
    state = MergeState.from_partition(cloud, geometry.frames, geometry.descriptors, partition,
                                      geometry.neighbors, num_classes)
    state = filter_small_regions(state, config.n_ths)
    initial = _record(state, 0)
    logger.info(f"Initial labels cover {initial.labeled_fraction:.2%} of points")

    trace: List[IterationRecord] = []
    for m in range(1, config.n_total + 1):
        pred = predictor.predict(state, m)
        state = merge_step(state, pred, config)
        record = _record(state, m)
        trace.append(record)
        logger.info(f"Iteration {m}/{config.n_total}: labelled {record.labeled_fraction:.2%}, "
                    f"precision {record.pseudo_precision:.4f}, recall {record.pseudo_recall:.4f}")
        if on_iteration:
            on_iteration(record)

    return SelfTrainingResult(assignment=state.assignment(), initial=initial, trace=trace, state=state)
