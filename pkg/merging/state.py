"""Mutable merge state, prediction matrices and instance boxes."""

import logging
from dataclasses import dataclass, field
from typing import AbstractSet, Dict, List, Optional, Set

import numpy as np

from cloud.errors import ShapeMismatchError
from cloud.model import LabelAssignment, PointCloud
from descriptors.base import Descriptor, DescriptorKind, DescriptorSet, normalize_histogram
from geometry.frames import DEGENERATE_CURVATURE, DEGENERATE_NORM, DEFAULT_NORMAL, LocalFrames
from segmentation.regions import LabelState, Partition, Region
from spatial.neighbors import NeighborTable


logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-4


@dataclass(frozen=True, eq=False)
class PredictionMatrix:
    """Per-region class probabilities at one self-training iteration.

    Row r belongs to ``region_ids[r]``; rows are non-negative and sum to 1.
    """
    values: np.ndarray
    region_ids: np.ndarray
    iteration: int

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        region_ids = np.array(self.region_ids, dtype=np.int64, copy=True)
        if values.ndim != 2:
            raise ShapeMismatchError(f"prediction matrix must be 2-D, got shape {values.shape}")
        if region_ids.shape != (values.shape[0],):
            raise ShapeMismatchError(f"prediction matrix has {values.shape[0]} rows "
                                     f"for {region_ids.size} regions")
        if values.size and (values.min() < 0 or np.any(np.abs(values.sum(axis=1) - 1.0) > ROW_SUM_TOLERANCE)):
            raise ShapeMismatchError("prediction rows must be non-negative and sum to 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "region_ids", region_ids)
        object.__setattr__(self, "_rows", {int(r): i for i, r in enumerate(region_ids)})

    @property
    def num_classes(self) -> int:
        return int(self.values.shape[1])

    def row(self, region_id: int) -> np.ndarray:
        return self.values[self._rows[region_id]]

    @classmethod
    def uniform(cls, region_ids, num_classes: int, iteration: int) -> "PredictionMatrix":
        region_ids = np.asarray(region_ids, dtype=np.int64)
        return cls(values=np.full((region_ids.size, num_classes), 1.0 / num_classes),
                   region_ids=region_ids, iteration=iteration)


@dataclass(frozen=True)
class InstanceBox:
    """Axis-aligned box around one propagated instance."""
    class_id: int
    minimum: np.ndarray
    maximum: np.ndarray
    count: int = 0

    def to_row(self) -> str:
        coords = " ".join(f"{v:.6g}" for v in (*self.minimum, *self.maximum))
        return f"{self.class_id} {coords}"


@dataclass(frozen=True, eq=False)
class Instance:
    """A maximal connected group of same-class regions."""
    class_id: int
    members: np.ndarray
    region_ids: List[int]
    score: float
    box: InstanceBox


@dataclass
class _RegionSums:
    """Running sums from which a region's attributes are rebuilt after fusion."""
    count: int
    normal_sum: np.ndarray
    usable: int
    curvature_sum: float
    color_sum: Optional[np.ndarray]
    position_sum: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    descriptor_sum: np.ndarray

    @classmethod
    def of(cls, cloud: PointCloud, frames: LocalFrames, descriptors: DescriptorSet,
           members: np.ndarray) -> "_RegionSums":
        usable = members[~frames.degenerate[members]]
        pts = cloud.positions[members]
        return cls(
            count=int(members.size),
            normal_sum=frames.normals[usable].sum(axis=0),
            usable=int(usable.size),
            curvature_sum=float(frames.curvatures[usable].sum()),
            color_sum=None if cloud.colors is None else cloud.colors[members].sum(axis=0),
            position_sum=pts.sum(axis=0),
            lower=pts.min(axis=0),
            upper=pts.max(axis=0),
            descriptor_sum=descriptors.values[members].sum(axis=0),
        )

    def merged(self, other: "_RegionSums") -> "_RegionSums":
        return _RegionSums(
            count=self.count + other.count,
            normal_sum=self.normal_sum + other.normal_sum,
            usable=self.usable + other.usable,
            curvature_sum=self.curvature_sum + other.curvature_sum,
            color_sum=None if self.color_sum is None else self.color_sum + other.color_sum,
            position_sum=self.position_sum + other.position_sum,
            lower=np.minimum(self.lower, other.lower),
            upper=np.maximum(self.upper, other.upper),
            descriptor_sum=self.descriptor_sum + other.descriptor_sum,
        )


@dataclass
class MergeState:
    """Live regions, their adjacency and the label bookkeeping of self-training.

    ``regions`` holds regions taking part in merging; regions dropped by the
    small-region filter move to ``excluded``. ``frozen`` ids keep their label
    for good and act as seeds.
    """
    cloud: PointCloud
    frames: LocalFrames
    descriptors: DescriptorSet
    regions: Dict[int, Region]
    adjacency: Dict[int, Set[int]]
    point_region: np.ndarray
    num_classes: int
    frozen: Set[int] = field(default_factory=set)
    excluded: Dict[int, Region] = field(default_factory=dict)
    iteration: int = 0
    _sums: Dict[int, _RegionSums] = field(default_factory=dict, repr=False)

    @classmethod
    def from_partition(cls, cloud: PointCloud, frames: LocalFrames, descriptors: DescriptorSet,
                       partition: Partition, neighbors: NeighborTable, num_classes: int) -> "MergeState":
        """Start merging from a labelled partition; weak-labelled regions are frozen."""
        regions = {r.region_id: r for r in partition.regions}
        point_region = partition.point_region.copy()
        counts = neighbors.counts()
        rows = np.repeat(np.arange(len(neighbors), dtype=np.int64), counts)
        cols = np.concatenate(neighbors.ball) if len(neighbors) else np.empty(0, np.int64)
        a, b = point_region[rows], point_region[cols]
        cross = a != b
        edges = np.unique(np.stack([a[cross], b[cross]], axis=1), axis=0) if cross.any() \
            else np.empty((0, 2), np.int64)
        adjacency: Dict[int, Set[int]] = {rid: set() for rid in regions}
        for u, v in edges:
            adjacency[int(u)].add(int(v))
        frozen = {rid for rid, r in regions.items() if r.label.is_labeled}
        sums = {rid: _RegionSums.of(cloud, frames, descriptors, r.members) for rid, r in regions.items()}
        logger.info(f"Merge state: {len(regions)} regions, {len(edges) // 2} adjacent pairs, "
                    f"{len(frozen)} frozen seed regions")
        return cls(cloud=cloud, frames=frames, descriptors=descriptors, regions=regions,
                   adjacency=adjacency, point_region=point_region, num_classes=num_classes,
                   frozen=frozen, _sums=sums)

    def copy(self) -> "MergeState":
        return MergeState(
            cloud=self.cloud,
            frames=self.frames,
            descriptors=self.descriptors,
            regions=dict(self.regions),
            adjacency={k: set(v) for k, v in self.adjacency.items()},
            point_region=self.point_region.copy(),
            num_classes=self.num_classes,
            frozen=set(self.frozen),
            excluded=dict(self.excluded),
            iteration=self.iteration,
            _sums=dict(self._sums),
        )

    def live_ids(self) -> List[int]:
        """Ids of regions taking part in merging, ascending."""
        return sorted(self.regions)

    def seed_ids(self) -> List[int]:
        return sorted(rid for rid in self.frozen if rid in self.regions)

    def exclude(self, region_id: int) -> None:
        region = self.regions.pop(region_id)
        self.excluded[region_id] = region
        self.frozen.discard(region_id)
        for other in self.adjacency.pop(region_id, set()):
            self.adjacency.get(other, set()).discard(region_id)

    def eligible(self, seed_id: int, region_id: int) -> bool:
        """Whether the seed may still label or absorb the region."""
        region = self.regions.get(region_id)
        if region is None or region_id in self.frozen:
            return False
        return not region.label.is_labeled or region.label.class_id == self.regions[seed_id].label.class_id

    def candidates(self, seed_id: int, k: Optional[int] = None,
                   skip: AbstractSet[int] = frozenset()) -> List[int]:
        """
        Adjacent regions the seed may label or absorb, nearest centroid first.

        Ties go to the lower id. Returns at most ``k`` ids (all when k is
        None), leaving out those in ``skip``.
        """
        ids = sorted(rid for rid in self.adjacency.get(seed_id, ())
                     if rid not in skip and self.eligible(seed_id, rid))
        if not ids:
            return []
        gaps = np.stack([self.regions[rid].centroid for rid in ids]) - self.regions[seed_id].centroid
        order = np.argsort(np.einsum("ij,ij->i", gaps, gaps), kind="stable")
        nearest = np.asarray(ids, dtype=np.int64)[order]
        return nearest[:k].tolist() if k is not None else nearest.tolist()

    def fuse(self, keep_id: int, absorb_id: int) -> Region:
        """Merge absorb_id into keep_id; keep_id keeps its label and id."""
        keep, absorb = self.regions[keep_id], self.regions.pop(absorb_id)
        sums = self._sums[keep_id].merged(self._sums.pop(absorb_id))
        members = np.sort(np.concatenate([keep.members, absorb.members]))
        self.point_region[absorb.members] = keep_id
        fused = self._rebuild(keep, members, sums)
        self.regions[keep_id] = fused
        self._sums[keep_id] = sums
        neighbours = self.adjacency.pop(absorb_id, set())
        for other in neighbours:
            peers = self.adjacency.get(other)
            if peers is not None:
                peers.discard(absorb_id)
                if other != keep_id:
                    peers.add(keep_id)
        self.adjacency[keep_id] = (self.adjacency[keep_id] | neighbours) - {keep_id, absorb_id}
        return fused

    def _rebuild(self, template: Region, members: np.ndarray, sums: _RegionSums) -> Region:
        norm = float(np.linalg.norm(sums.normal_sum))
        degenerate = not (sums.usable and norm > DEGENERATE_NORM * sums.usable)
        descriptor = sums.descriptor_sum / sums.count
        if self.descriptors.kind != DescriptorKind.EXTERNAL:
            descriptor = normalize_histogram(descriptor)
        return Region(
            region_id=template.region_id,
            members=members,
            normal=DEFAULT_NORMAL.copy() if degenerate else sums.normal_sum / norm,
            curvature=sums.curvature_sum / sums.usable if sums.usable else DEGENERATE_CURVATURE,
            mean_color=None if sums.color_sum is None else sums.color_sum / sums.count,
            scale=float(np.linalg.norm(sums.upper - sums.lower)),
            centroid=sums.position_sum / sums.count,
            descriptor=Descriptor(values=descriptor, kind=self.descriptors.kind, isolated=not descriptor.any()),
            label=template.label,
            is_seed=template.is_seed,
            degenerate=degenerate,
        )

    def set_label(self, region_id: int, label: LabelState) -> None:
        self.regions[region_id] = self.regions[region_id].with_label(label)

    def assignment(self) -> LabelAssignment:
        """Per-point labels; points of excluded or unlabelled regions get class -1."""
        n = self.cloud.size
        classes = np.full(n, -1, dtype=np.int64)
        confidences = np.zeros(n)
        for region in self.regions.values():
            if region.label.is_labeled:
                classes[region.members] = region.label.class_id
                confidences[region.members] = region.label.confidence
        return LabelAssignment(region_ids=self.point_region, classes=classes, confidences=confidences)

    def partition(self) -> Partition:
        """Current regions, excluded ones included, as a partition."""
        regions = sorted(list(self.regions.values()) + list(self.excluded.values()),
                         key=lambda r: r.region_id)
        return Partition(regions=regions, point_region=self.point_region.copy())
