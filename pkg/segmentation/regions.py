"""Regions, label states and partitions."""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Iterator, List, Optional

import numpy as np

from cloud.errors import InvariantViolation
from cloud.model import LabelAssignment, PointCloud, WeakLabelSet
from descriptors.base import Descriptor, DescriptorSet
from descriptors.region import region_descriptor
from geometry.frames import LocalFrames, region_aggregate


logger = logging.getLogger(__name__)


class LabelKind(str, Enum):
    """Where a region's label came from."""
    UNLABELED = "unlabeled"
    PSEUDO = "pseudo"
    WEAK = "weak"


@dataclass(frozen=True)
class LabelState:
    kind: LabelKind = LabelKind.UNLABELED
    class_id: int = -1
    confidence: float = 0.0

    @property
    def is_labeled(self) -> bool:
        return self.kind != LabelKind.UNLABELED

    @classmethod
    def unlabeled(cls) -> "LabelState":
        return cls()

    @classmethod
    def pseudo(cls, class_id: int, confidence: float) -> "LabelState":
        return cls(LabelKind.PSEUDO, int(class_id), float(confidence))

    @classmethod
    def weak(cls, class_id: int) -> "LabelState":
        return cls(LabelKind.WEAK, int(class_id), 1.0)


@dataclass(frozen=True, eq=False)
class Region:
    """A connected group of points with aggregated attributes."""
    region_id: int
    members: np.ndarray
    normal: np.ndarray
    curvature: float
    mean_color: Optional[np.ndarray]
    scale: float
    centroid: np.ndarray
    descriptor: Descriptor
    label: LabelState = LabelState()
    is_seed: bool = False
    degenerate: bool = False

    @property
    def size(self) -> int:
        return int(self.members.size)

    def with_label(self, label: LabelState) -> "Region":
        return replace(self, label=label)


def make_region(cloud: PointCloud, frames: LocalFrames, descriptors: DescriptorSet, region_id: int,
                members: np.ndarray, label: LabelState = LabelState(), is_seed: bool = False) -> Region:
    """Build a region with attributes aggregated from its members."""
    members = np.sort(np.asarray(members, dtype=np.int64))
    aggregate = region_aggregate(cloud, frames, members)
    return Region(
        region_id=region_id,
        members=members,
        normal=aggregate.normal,
        curvature=aggregate.curvature,
        mean_color=aggregate.mean_color,
        scale=aggregate.scale,
        centroid=aggregate.centroid,
        descriptor=region_descriptor(descriptors, members),
        label=label,
        is_seed=is_seed,
        degenerate=aggregate.degenerate,
    )


@dataclass(frozen=True, eq=False)
class Partition:
    """Disjoint regions covering every point of a cloud.

    ``point_region[i]`` is the id of the region holding point i.
    """
    regions: List[Region]
    point_region: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {r.region_id: r for r in self.regions})

    def __len__(self) -> int:
        return len(self.regions)

    def __iter__(self) -> Iterator[Region]:
        return iter(self.regions)

    @property
    def num_points(self) -> int:
        return int(self.point_region.size)

    def region(self, region_id: int) -> Region:
        return self._by_id[region_id]

    def sizes(self) -> List[int]:
        return [r.size for r in self.regions]

    def validate(self) -> None:
        """Check that regions are disjoint and cover every point.

        Raises:
            InvariantViolation: On overlap, gaps or a stale point index
        """
        seen = np.zeros(self.num_points, dtype=np.int64)
        for region in self.regions:
            seen[region.members] += 1
            if np.any(self.point_region[region.members] != region.region_id):
                raise InvariantViolation(f"region {region.region_id} disagrees with the point index")
        if np.any(seen != 1):
            raise InvariantViolation(f"{int(np.sum(seen != 1))} points are uncovered or shared")

    def assignment(self) -> LabelAssignment:
        """Per-point region id, class and confidence."""
        classes = np.full(self.num_points, -1, dtype=np.int64)
        confidences = np.zeros(self.num_points)
        for region in self.regions:
            if region.label.is_labeled:
                classes[region.members] = region.label.class_id
                confidences[region.members] = region.label.confidence
        return LabelAssignment(region_ids=self.point_region, classes=classes, confidences=confidences)


def majority_class(classes: np.ndarray, class_frequency: Dict[int, int]) -> int:
    """Most frequent class; ties go to the higher cloud-wide frequency, then the lower id."""
    values, counts = np.unique(classes, return_counts=True)
    best = counts.max()
    tied = [int(v) for v, c in zip(values, counts) if c == best]
    return min(tied, key=lambda c: (-class_frequency.get(c, 0), c))


def initial_pseudo_labels(partition: Partition, weak: WeakLabelSet) -> Partition:
    """Label every region holding weak labels with their majority class."""
    by_region: Dict[int, List[int]] = {}
    for index, cls in zip(weak.indices, weak.classes):
        by_region.setdefault(int(partition.point_region[index]), []).append(int(cls))
    regions = []
    for region in partition.regions:
        votes = by_region.get(region.region_id)
        if votes:
            label = LabelState.weak(majority_class(np.asarray(votes), weak.class_frequency))
            regions.append(region.with_label(label))
        else:
            regions.append(region.with_label(LabelState.unlabeled()))
    labeled = sum(1 for r in regions if r.label.is_labeled)
    logger.info(f"Initial pseudo labels: {labeled} of {len(regions)} regions hold weak labels")
    return Partition(regions=regions, point_region=partition.point_region)
