"""PCA normals, curvature and region-level geometric aggregates."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from cloud.errors import ShapeMismatchError
from cloud.model import PointCloud
from spatial.neighbors import NeighborTable, build_neighbor_table, chunk_ranges
from spatial.octree import Octree


logger = logging.getLogger(__name__)

MIN_NEIGHBORS = 3
DEGENERATE_CURVATURE = 1.0 / 3.0
DEFAULT_NORMAL = np.array([0.0, 0.0, 1.0])
# |component| at or below this counts as a tie in the orientation rule
ORIENTATION_TIE = 0.1
DEGENERATE_NORM = 1e-9


@dataclass(frozen=True)
class LocalFrame:
    normal: np.ndarray
    curvature: float
    neighbor_count: int
    degenerate: bool


@dataclass(frozen=True, eq=False)
class LocalFrames:
    """Per-point frames stored column-wise.

    ``neighbor_counts`` counts the points of the radius ball, the point itself
    included; -1 marks frames that were not estimated from a neighbourhood.
    """
    normals: np.ndarray
    curvatures: np.ndarray
    neighbor_counts: np.ndarray
    degenerate: np.ndarray

    def __post_init__(self):
        n = self.normals.shape[0]
        if self.normals.shape != (n, 3) or self.curvatures.shape != (n,) \
                or self.neighbor_counts.shape != (n,) or self.degenerate.shape != (n,):
            raise ShapeMismatchError("frame columns must describe the same number of points")

    def __len__(self) -> int:
        return self.normals.shape[0]

    def __getitem__(self, i: int) -> LocalFrame:
        return LocalFrame(
            normal=self.normals[i].copy(),
            curvature=float(self.curvatures[i]),
            neighbor_count=int(self.neighbor_counts[i]),
            degenerate=bool(self.degenerate[i]),
        )

    @classmethod
    def from_normals(cls, normals: np.ndarray, curvatures: Optional[np.ndarray] = None) -> "LocalFrames":
        """Frames from given unit normals, e.g. a cloud's normal channel."""
        normals = np.asarray(normals, dtype=np.float64)
        n = normals.shape[0]
        return cls(
            normals=normals.copy(),
            curvatures=np.zeros(n) if curvatures is None else np.asarray(curvatures, dtype=np.float64).copy(),
            neighbor_counts=np.full(n, -1, dtype=np.int64),
            degenerate=np.zeros(n, dtype=bool),
        )

    def rotated(self, rotation: np.ndarray) -> "LocalFrames":
        """Frames with every normal rotated by the 3x3 matrix."""
        return LocalFrames(
            normals=self.normals @ np.asarray(rotation, dtype=np.float64).T,
            curvatures=self.curvatures.copy(),
            neighbor_counts=self.neighbor_counts.copy(),
            degenerate=self.degenerate.copy(),
        )


def orient_normals(normals: np.ndarray, tie: float = ORIENTATION_TIE) -> np.ndarray:
    """
    Flip normals into the +z half-space; ties fall back to +x, then +y.

    A component within ``tie`` of zero counts as a tie, so near-vertical
    normals whose z sign is set by noise are oriented by x (then y) instead.
    ``tie=0`` gives the exact rule: only n_z == 0 falls through.
    """
    n = np.array(normals, dtype=np.float64, copy=True)
    z_tie = np.abs(n[:, 2]) <= tie
    x_tie = np.abs(n[:, 0]) <= tie
    flip = (n[:, 2] < -tie) \
        | (z_tie & (n[:, 0] < -tie)) \
        | (z_tie & x_tie & (n[:, 1] < 0))
    n[flip] *= -1.0
    return n


def estimate_frames(cloud: PointCloud, tree: Octree, r: float, threads: int = 1,
                    neighbors: Optional[NeighborTable] = None, tie: float = ORIENTATION_TIE) -> LocalFrames:
    """
    PCA normal and curvature for every point from its radius-r ball.

    The normal is the eigenvector of the smallest covariance eigenvalue and the
    curvature is that eigenvalue over the eigenvalue sum. Balls with fewer than
    three points yield a degenerate frame: normal (0, 0, 1), curvature 1/3.

    Args:
        cloud: Input cloud
        tree: Octree over cloud.positions
        r: Neighbourhood radius
        threads: Worker threads
        neighbors: Precomputed neighbour table with the same radius
        tie: Orientation tie band, see orient_normals

    Returns:
        LocalFrames with one frame per point
    """
    if neighbors is None:
        neighbors = build_neighbor_table(tree, r, threads=threads)
    positions = cloud.positions
    n = cloud.size
    normals = np.tile(DEFAULT_NORMAL, (n, 1))
    curvatures = np.full(n, DEGENERATE_CURVATURE)
    counts = neighbors.counts()
    degenerate = counts < MIN_NEIGHBORS

    def work(start: int, stop: int) -> None:
        rows = [i for i in range(start, stop) if not degenerate[i]]
        if not rows:
            return
        covariances = np.empty((len(rows), 3, 3))
        for j, i in enumerate(rows):
            pts = positions[neighbors.ball[i]]
            centered = pts - pts.mean(axis=0)
            covariances[j] = centered.T @ centered / pts.shape[0]
        values, vectors = np.linalg.eigh(covariances)
        values = np.clip(values, 0.0, None)
        totals = values.sum(axis=1)
        for j, i in enumerate(rows):
            if totals[j] <= 0.0:
                # coincident points: no spread to estimate from
                degenerate[i] = True
                continue
            normals[i] = vectors[j, :, 0]
            curvatures[i] = values[j, 0] / totals[j]

    ranges = chunk_ranges(n, threads)
    if threads <= 1 or len(ranges) <= 1:
        for start, stop in ranges:
            work(start, stop)
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            for future in [executor.submit(work, a, b) for a, b in ranges]:
                future.result()

    normals[~degenerate] = orient_normals(normals[~degenerate], tie)
    normals[degenerate] = DEFAULT_NORMAL
    curvatures[degenerate] = DEGENERATE_CURVATURE
    if degenerate.any():
        logger.warning(f"{int(degenerate.sum())} of {n} points have degenerate frames "
                       f"(fewer than {MIN_NEIGHBORS} points within r={r:g})")
    logger.info(f"Estimated frames for {n} points")
    return LocalFrames(normals=normals, curvatures=curvatures, neighbor_counts=counts, degenerate=degenerate)


@dataclass(frozen=True)
class RegionAggregate:
    """Geometric summary of a set of points.

    ``scale`` is the bounding-box diagonal; ``mean_color`` is None for clouds
    without colors.
    """
    normal: np.ndarray
    curvature: float
    mean_color: Optional[np.ndarray]
    scale: float
    centroid: np.ndarray
    degenerate: bool


def region_aggregate(cloud: PointCloud, frames: LocalFrames, members: np.ndarray) -> RegionAggregate:
    """Aggregate normal, curvature, color, scale and centroid over members.

    Degenerate member frames are left out of the normal and curvature means.
    A region whose usable normals are missing or cancel out is flagged
    degenerate.
    """
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise ValueError("region_aggregate needs at least one member")
    usable = members[~frames.degenerate[members]]
    normal = DEFAULT_NORMAL.copy()
    degenerate = True
    curvature = DEGENERATE_CURVATURE
    if usable.size:
        total = frames.normals[usable].sum(axis=0)
        norm = float(np.linalg.norm(total))
        curvature = float(frames.curvatures[usable].mean())
        if norm > DEGENERATE_NORM * usable.size:
            normal = total / norm
            degenerate = False
    pts = cloud.positions[members]
    mean_color = None if cloud.colors is None else cloud.colors[members].mean(axis=0)
    return RegionAggregate(
        normal=normal,
        curvature=curvature,
        mean_color=mean_color,
        scale=float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))),
        centroid=pts.mean(axis=0),
        degenerate=degenerate,
    )
