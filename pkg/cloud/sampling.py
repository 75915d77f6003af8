"""Weak-label sampling from ground-truth labelled clouds."""

import logging
import math

import numpy as np

from cloud.errors import CloudDataError
from cloud.model import PointCloud, WeakLabelSet


logger = logging.getLogger(__name__)


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def _present_classes(labels: np.ndarray) -> np.ndarray:
    return np.unique(labels[labels >= 0])


def sample_weak_labels(cloud: PointCloud, fraction: float, rng_seed: int) -> WeakLabelSet:
    """Draw a weak labelling with every present class represented.

    One point per present class is drawn first (classes in ascending order),
    then the rest uniformly from the remaining labelled points. The entry count
    is max(round_half_up(fraction * N), number of present classes).

    Args:
        cloud: Cloud carrying gt_labels
        fraction: Labelled fraction in (0, 1]
        rng_seed: Seed for the sampling generator

    Returns:
        WeakLabelSet sorted by point index

    Raises:
        MissingChannelError: If the cloud has no gt_labels
        CloudDataError: If fraction is outside (0, 1]
    """
    if not 0 < fraction <= 1:
        raise CloudDataError(f"fraction must lie in (0, 1], got {fraction}")
    labels = cloud.require("gt_labels")
    rng = np.random.default_rng(rng_seed)
    classes = _present_classes(labels)
    chosen = [int(rng.choice(np.flatnonzero(labels == c))) for c in classes]

    labeled = np.flatnonzero(labels >= 0)
    target = min(max(round_half_up(fraction * cloud.size), classes.size), labeled.size)
    remaining = np.setdiff1d(labeled, np.asarray(chosen, dtype=np.int64))
    extra = target - len(chosen)
    if extra > 0:
        chosen.extend(int(i) for i in rng.choice(remaining, size=extra, replace=False))

    indices = np.asarray(chosen, dtype=np.int64)
    logger.info(f"Sampled {indices.size} weak labels over {classes.size} classes "
                f"({fraction:.4%} of {cloud.size} points)")
    return WeakLabelSet(
        indices=indices,
        classes=labels[indices],
        num_classes=cloud.num_classes(),
        class_frequency=cloud.class_frequency(),
    )


def sample_one_point_per_class(cloud: PointCloud, rng_seed: int) -> WeakLabelSet:
    """Draw exactly one labelled point for every present class."""
    labels = cloud.require("gt_labels")
    rng = np.random.default_rng(rng_seed)
    indices = np.asarray(
        [int(rng.choice(np.flatnonzero(labels == c))) for c in _present_classes(labels)],
        dtype=np.int64,
    )
    return WeakLabelSet(
        indices=indices,
        classes=labels[indices],
        num_classes=cloud.num_classes(),
        class_frequency=cloud.class_frequency(),
    )
