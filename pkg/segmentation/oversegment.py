"""Seeded region growing over radius neighbourhoods.

Each seed starts a region. A sweep lets every region with pending seed points
examine the K nearest still-unassigned neighbours (within r) of each of them:

* a neighbour whose affinity to the region passes the gate joins it, and also
  becomes a seed point when its curvature is within zeta of the region's,
* any other neighbour starts a new region of its own.

Crease points, whose curvature exceeds ``crease_curvature``, sit where two
surfaces meet. They never seed or expand a region, join one only when their
normal lies within half the boundary angle of the region's, and are otherwise
left for a region on their own side.

Sweeps run in ascending region id until every point is assigned, no seed
points remain or a sweep changes nothing. Points never reached end up as
singleton regions.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from cloud.config import SceneConfig
from cloud.errors import ShapeMismatchError
from cloud.model import PointCloud, WeakLabelSet
from descriptors import compute_descriptors
from descriptors.base import DescriptorSet
from descriptors.region import vector_cosine
from geometry.frames import DEGENERATE_CURVATURE, DEGENERATE_NORM, DEFAULT_NORMAL, LocalFrames, estimate_frames
from segmentation.regions import Partition, initial_pseudo_labels, make_region
from spatial.neighbors import NeighborTable, build_neighbor_table
from spatial.octree import Octree


logger = logging.getLogger(__name__)


def select_seeds(cloud: PointCloud, frames: LocalFrames, weak: Optional[WeakLabelSet],
                 fraction: float) -> np.ndarray:
    """Weak-label indices plus the ceil(fraction * N) lowest-curvature points.

    Curvature ties go to the lower index. Returns ascending unique indices.
    """
    n = cloud.size
    count = min(n, int(math.ceil(fraction * n)))
    order = np.lexsort((np.arange(n), frames.curvatures))
    seeds = order[:count]
    if weak is not None and len(weak):
        seeds = np.union1d(seeds, weak.indices)
    return np.unique(seeds).astype(np.int64)


def affinity_terms(normal_a: np.ndarray, degenerate_a: bool, descriptor_a: np.ndarray,
                   normal_b: np.ndarray, degenerate_b: bool, descriptor_b: np.ndarray):
    """(A_n, A_des): clamped normal cosine and clamped descriptor cosine."""
    a_n = 0.0 if degenerate_a or degenerate_b else max(0.0, float(np.dot(normal_a, normal_b)))
    a_des = max(0.0, vector_cosine(descriptor_a, descriptor_b))
    return a_n, a_des


def affinity(region_a, region_b, lambda_n: float, lambda_des: float) -> float:
    """
    Combined affinity sqrt(lambda_n * A_n^2 + lambda_des * A_des^2) of two regions.

    Both arguments need ``normal``, ``degenerate`` and ``descriptor`` attributes;
    a degenerate side contributes A_n = 0.
    """
    a_n, a_des = affinity_terms(region_a.normal, region_a.degenerate, region_a.descriptor.values,
                                region_b.normal, region_b.degenerate, region_b.descriptor.values)
    return math.sqrt(lambda_n * a_n * a_n + lambda_des * a_des * a_des)


@dataclass
class _GrowingRegion:
    region_id: int
    members: List[int]
    frontier: List[int]
    normal_sum: np.ndarray
    usable: int
    curvature_sum: float
    descriptor_sum: np.ndarray
    seed: bool = False
    snapshot_normal: np.ndarray = field(default_factory=lambda: DEFAULT_NORMAL.copy())
    snapshot_degenerate: bool = True
    snapshot_curvature: float = DEGENERATE_CURVATURE
    snapshot_descriptor: Optional[np.ndarray] = None
    snapshot_descriptor_norm: float = 0.0

    def refresh(self) -> None:
        norm = float(np.linalg.norm(self.normal_sum))
        if self.usable and norm > DEGENERATE_NORM * self.usable:
            self.snapshot_normal = self.normal_sum / norm
            self.snapshot_degenerate = False
        else:
            self.snapshot_normal = DEFAULT_NORMAL.copy()
            self.snapshot_degenerate = True
        self.snapshot_curvature = self.curvature_sum / self.usable if self.usable else DEGENERATE_CURVATURE
        self.snapshot_descriptor = self.descriptor_sum.copy()
        self.snapshot_descriptor_norm = float(np.linalg.norm(self.descriptor_sum))


class RegionGrower:
    """Runs one growth over a cloud with fixed frames, descriptors and neighbourhoods."""

    def __init__(self, cloud: PointCloud, frames: LocalFrames, descriptors: DescriptorSet,
                 neighbors: NeighborTable, config: SceneConfig):
        self.cloud = cloud
        self.frames = frames
        self.descriptors = descriptors
        self.neighbors = neighbors
        self.config = config
        self.use_normal = config.use_normal_affinity and config.lambda_n > 0
        self.use_descriptor = config.use_descriptor_affinity and config.lambda_des > 0
        enabled = (config.lambda_n if self.use_normal else 0.0) + (config.lambda_des if self.use_descriptor else 0.0)
        self.gate = math.sqrt(enabled) * math.cos(math.radians(config.theta_th))
        self.normal_gate = config.normal_threshold
        self.crease_gate = math.cos(math.radians(config.theta_th / 2.0))
        self.crease = ~frames.degenerate & (frames.curvatures > config.crease_curvature)
        self.descriptor_norms = np.linalg.norm(descriptors.values, axis=1)
        self.point_region = np.full(cloud.size, -1, dtype=np.int64)
        self.regions: List[_GrowingRegion] = []
        self.sweeps = 0

    def _start_region(self, point: int, seed: bool) -> _GrowingRegion:
        region = _GrowingRegion(
            region_id=len(self.regions),
            members=[],
            frontier=[point] if seed and not self.crease[point] else [],
            normal_sum=np.zeros(3),
            usable=0,
            curvature_sum=0.0,
            descriptor_sum=np.zeros(self.descriptors.dim),
            seed=seed,
        )
        self._add_member(region, point)
        region.refresh()
        self.regions.append(region)
        return region

    def _add_member(self, region: _GrowingRegion, point: int) -> None:
        region.members.append(point)
        self.point_region[point] = region.region_id
        region.descriptor_sum += self.descriptors.values[point]
        if not self.frames.degenerate[point]:
            region.normal_sum += self.frames.normals[point]
            region.curvature_sum += float(self.frames.curvatures[point])
            region.usable += 1

    def _descriptor_affinity(self, region: _GrowingRegion, point: int) -> float:
        norm = self.descriptor_norms[point] * region.snapshot_descriptor_norm
        if norm == 0.0:
            return 0.0
        return max(0.0, min(1.0, float(self.descriptors.values[point] @ region.snapshot_descriptor) / norm))

    def passes(self, region: _GrowingRegion, point: int) -> bool:
        """
        Condition 1: the combined gate and, with normals enabled, the normal-angle gate.

        A crease point must face the region within half the boundary angle.
        """
        if region.snapshot_degenerate or self.frames.degenerate[point]:
            a_n = 0.0
        else:
            a_n = max(0.0, float(self.frames.normals[point] @ region.snapshot_normal))
        a_des = self._descriptor_affinity(region, point) if self.use_descriptor else 0.0
        combined = math.sqrt((self.config.lambda_n * a_n * a_n if self.use_normal else 0.0)
                             + (self.config.lambda_des * a_des * a_des if self.use_descriptor else 0.0))
        if combined < self.gate:
            return False
        if not self.use_normal:
            return True
        return a_n >= (self.crease_gate if self.crease[point] else self.normal_gate)

    def _expands(self, region: _GrowingRegion, point: int) -> bool:
        """Condition 2: a new member becomes a seed point when its curvature is close to the region's."""
        if self.frames.degenerate[point] or self.crease[point]:
            return False
        return abs(float(self.frames.curvatures[point]) - region.snapshot_curvature) <= self.config.zeta

    def grow(self, seeds: np.ndarray) -> Partition:
        for seed in np.unique(np.asarray(seeds, dtype=np.int64)):
            if self.point_region[seed] == -1:
                self._start_region(int(seed), seed=True)
        k = self.config.knn
        reason = "no seeds"
        while True:
            active = [r for r in self.regions if r.frontier]
            if not active:
                reason = "no seed points left"
                break
            for region in active:
                region.refresh()
            changed = False
            for region in active:
                frontier, region.frontier = region.frontier, []
                for point in frontier:
                    for candidate in self.neighbors.nearest(point, k):
                        candidate = int(candidate)
                        if self.point_region[candidate] != -1:
                            continue
                        if self.passes(region, candidate):
                            self._add_member(region, candidate)
                            if self._expands(region, candidate):
                                region.frontier.append(candidate)
                            changed = True
                        elif not self.crease[candidate]:
                            self._start_region(candidate, seed=True)
                            changed = True
            self.sweeps += 1
            logger.debug(f"Sweep {self.sweeps}: {len(self.regions)} regions, "
                         f"{int(np.sum(self.point_region >= 0))} points assigned")
            if np.all(self.point_region >= 0):
                reason = "all points assigned"
                break
            if not changed:
                reason = "no change"
                break

        unreached = np.flatnonzero(self.point_region < 0)
        for point in unreached:
            self._start_region(int(point), seed=False)
        logger.info(f"Region growing stopped after {self.sweeps} sweeps ({reason}): "
                    f"{len(self.regions)} regions, {unreached.size} unreached points "
                    f"({int(np.sum(self.crease[unreached]))} on creases)")
        return self._partition()

    def _partition(self) -> Partition:
        regions = [
            make_region(self.cloud, self.frames, self.descriptors, g.region_id, np.asarray(g.members),
                        is_seed=g.seed)
            for g in self.regions
        ]
        return Partition(regions=regions, point_region=self.point_region.copy())


def grow(cloud: PointCloud, frames: LocalFrames, descriptors: DescriptorSet, tree: Octree,
         seeds: np.ndarray, config: SceneConfig, neighbors: Optional[NeighborTable] = None) -> Partition:
    """
    Oversegment a cloud by seeded region growing.

    Args:
        cloud: Input cloud
        frames: Per-point frames
        descriptors: Per-point descriptors
        tree: Octree over cloud.positions
        seeds: Seed point indices; each starts its own region in ascending order
        config: Scene configuration (radius, knn, theta_th, zeta, lambdas)
        neighbors: Precomputed radius-r neighbour table

    Returns:
        Partition whose regions are numbered in creation order
    """
    if neighbors is None:
        neighbors = build_neighbor_table(tree, config.radius, threads=config.threads)
    grower = RegionGrower(cloud, frames, descriptors, neighbors, config)
    partition = grower.grow(seeds)
    partition.validate()
    return partition


@dataclass(frozen=True, eq=False)
class SceneGeometry:
    """Everything derived from positions once per run: tree, neighbourhoods, frames, descriptors."""
    tree: Octree
    neighbors: NeighborTable
    frames: LocalFrames
    descriptors: DescriptorSet


def prepare_geometry(cloud: PointCloud, config: SceneConfig,
                     descriptors: Optional[DescriptorSet] = None) -> SceneGeometry:
    """Build the octree, the radius neighbour table, frames and (unless given) descriptors."""
    tree = Octree(cloud.positions, leaf_capacity=config.leaf_capacity, max_depth=config.max_depth)
    neighbors = build_neighbor_table(tree, config.radius, threads=config.threads)
    frames = estimate_frames(cloud, tree, config.radius, threads=config.threads, neighbors=neighbors,
                             tie=config.orientation_tie)
    if descriptors is None:
        descriptors = compute_descriptors(config.descriptor, cloud, frames, tree, config.radius,
                                          neighbors=neighbors, threads=config.threads)
    elif len(descriptors) != cloud.size:
        raise ShapeMismatchError(f"{len(descriptors)} descriptors for {cloud.size} points")
    return SceneGeometry(tree=tree, neighbors=neighbors, frames=frames, descriptors=descriptors)


def oversegment(cloud: PointCloud, config: SceneConfig, weak: Optional[WeakLabelSet] = None,
                geometry: Optional[SceneGeometry] = None) -> Partition:
    """Seed selection plus region growing, labelled with the weak labels when given."""
    geometry = geometry or prepare_geometry(cloud, config)
    seeds = select_seeds(cloud, geometry.frames, weak, config.seed_fraction)
    partition = grow(cloud, geometry.frames, geometry.descriptors, geometry.tree, seeds, config,
                     neighbors=geometry.neighbors)
    if weak is not None:
        partition = initial_pseudo_labels(partition, weak)
    return partition
