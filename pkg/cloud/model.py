"""Core point cloud containers."""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np

from cloud.errors import CloudDataError, MissingChannelError, ShapeMismatchError


logger = logging.getLogger(__name__)

UNLABELED = -1


def _frozen(array: Optional[np.ndarray], dtype, name: str, rows: int,
            cols: Optional[int] = None) -> Optional[np.ndarray]:
    """Copy a channel into a read-only array of the expected shape."""
    if array is None:
        return None
    out = np.array(array, dtype=dtype, copy=True)
    expected = (rows,) if cols is None else (rows, cols)
    if out.shape != expected:
        raise ShapeMismatchError(f"{name} has shape {out.shape}, expected {expected}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable point cloud with optional per-point channels.

    Positions are float64 (N, 3). Colors are in [0, 1]. Label channels hold
    non-negative class/instance ids with -1 meaning unlabeled.
    """
    positions: np.ndarray
    colors: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None
    curvatures: Optional[np.ndarray] = None
    gt_labels: Optional[np.ndarray] = None
    gt_instances: Optional[np.ndarray] = None

    def __post_init__(self):
        positions = np.array(self.positions, dtype=np.float64, copy=True)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ShapeMismatchError(f"positions must be (N, 3), got {positions.shape}")
        if not np.all(np.isfinite(positions)):
            bad = int(np.argwhere(~np.isfinite(positions))[0][0])
            raise CloudDataError(f"non-finite coordinate at point {bad}")
        positions.setflags(write=False)
        n = positions.shape[0]
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "colors", _frozen(self.colors, np.float64, "colors", n, 3))
        object.__setattr__(self, "normals", _frozen(self.normals, np.float64, "normals", n, 3))
        object.__setattr__(self, "curvatures", _frozen(self.curvatures, np.float64, "curvatures", n))
        object.__setattr__(self, "gt_labels", _frozen(self.gt_labels, np.int64, "gt_labels", n))
        object.__setattr__(self, "gt_instances", _frozen(self.gt_instances, np.int64, "gt_instances", n))
        if self.colors is not None and (self.colors.min(initial=0.0) < 0.0 or self.colors.max(initial=0.0) > 1.0):
            raise CloudDataError("colors must lie in [0, 1]")
        if self.gt_labels is not None and self.gt_labels.min(initial=0) < UNLABELED:
            raise CloudDataError("gt_labels must be >= -1")

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    def has_channel(self, name: str) -> bool:
        return getattr(self, name) is not None

    def require(self, name: str) -> np.ndarray:
        """Return a channel or raise MissingChannelError."""
        value = getattr(self, name)
        if value is None:
            raise MissingChannelError(f"cloud has no '{name}' channel")
        return value

    def subset(self, indices: np.ndarray) -> "PointCloud":
        """Return a new cloud holding the given points, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        pick = lambda a: None if a is None else a[idx]
        return PointCloud(
            positions=self.positions[idx],
            colors=pick(self.colors),
            normals=pick(self.normals),
            curvatures=pick(self.curvatures),
            gt_labels=pick(self.gt_labels),
            gt_instances=pick(self.gt_instances),
        )

    def with_channels(self, **channels) -> "PointCloud":
        """Return a copy with some channels replaced."""
        return replace(self, **channels)

    def num_classes(self) -> int:
        """Size of the ground-truth label space (max id + 1)."""
        labels = self.require("gt_labels")
        labeled = labels[labels >= 0]
        return int(labeled.max()) + 1 if labeled.size else 0

    def class_frequency(self) -> Dict[int, int]:
        """Ground-truth point count per class."""
        labels = self.require("gt_labels")
        classes, counts = np.unique(labels[labels >= 0], return_counts=True)
        return {int(c): int(n) for c, n in zip(classes, counts)}


@dataclass(frozen=True, eq=False)
class WeakLabelSet:
    """Sparse (point index, class) annotations drawn from a cloud.

    Entries are sorted by point index; ``class_frequency`` holds the cloud-wide
    point count per class and breaks ties in majority votes.
    """
    indices: np.ndarray
    classes: np.ndarray
    num_classes: int
    class_frequency: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        indices = np.array(self.indices, dtype=np.int64, copy=True)
        classes = np.array(self.classes, dtype=np.int64, copy=True)
        if indices.shape != classes.shape or indices.ndim != 1:
            raise ShapeMismatchError("weak label indices and classes must be matching 1-D arrays")
        if np.unique(indices).size != indices.size:
            raise CloudDataError("weak label indices must be unique")
        if classes.size and (classes.min() < 0 or classes.max() >= self.num_classes):
            raise CloudDataError(f"weak label classes must lie in [0, {self.num_classes})")
        order = np.argsort(indices, kind="stable")
        indices, classes = indices[order], classes[order]
        indices.setflags(write=False)
        classes.setflags(write=False)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "classes", classes)

    def __len__(self) -> int:
        return int(self.indices.size)

    def as_dict(self) -> Dict[int, int]:
        return {int(i): int(c) for i, c in zip(self.indices, self.classes)}

    def present_classes(self) -> np.ndarray:
        return np.unique(self.classes)

    @classmethod
    def empty(cls, num_classes: int = 0) -> "WeakLabelSet":
        return cls(indices=np.empty(0, np.int64), classes=np.empty(0, np.int64), num_classes=num_classes)


@dataclass(frozen=True, eq=False)
class LabelAssignment:
    """Per-point output labelling: region id, class id and confidence.

    Unlabelled points carry class -1 and confidence 0.
    """
    region_ids: np.ndarray
    classes: np.ndarray
    confidences: np.ndarray

    def __post_init__(self):
        region_ids = np.array(self.region_ids, dtype=np.int64, copy=True)
        classes = np.array(self.classes, dtype=np.int64, copy=True)
        confidences = np.array(self.confidences, dtype=np.float64, copy=True)
        if not (region_ids.shape == classes.shape == confidences.shape) or region_ids.ndim != 1:
            raise ShapeMismatchError("label assignment columns must be matching 1-D arrays")
        for array in (region_ids, classes, confidences):
            array.setflags(write=False)
        object.__setattr__(self, "region_ids", region_ids)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "confidences", confidences)

    def __len__(self) -> int:
        return int(self.region_ids.size)

    def labeled_mask(self) -> np.ndarray:
        return self.classes >= 0
