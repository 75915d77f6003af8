"""Per-point radius neighbour tables built on the octree."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List

import numpy as np

from spatial.octree import Octree, squared_distances


logger = logging.getLogger(__name__)

# query points sharing one tree walk
GROUP_POINTS = 64


@dataclass(frozen=True, eq=False)
class NeighborTable:
    """Radius-r neighbourhoods of every indexed point.

    ``ball[i]`` holds the ascending indices of all points within r of point i,
    i included. ``ranked[i]`` holds the same set without i, ordered by
    ascending distance with ties to the lower index, and ``ranked_dist[i]``
    the matching distances.
    """
    radius: float
    ball: List[np.ndarray]
    ranked: List[np.ndarray]
    ranked_dist: List[np.ndarray]

    def __len__(self) -> int:
        return len(self.ball)

    def nearest(self, i: int, k: int) -> np.ndarray:
        """The k nearest neighbours of i within the radius (fewer if the ball is small)."""
        return self.ranked[i][:k]

    def counts(self) -> np.ndarray:
        return np.fromiter((b.size for b in self.ball), dtype=np.int64, count=len(self.ball))


def chunk_ranges(n: int, threads: int):
    """Split range(n) into contiguous (start, stop) chunks, one per worker."""
    threads = max(1, min(threads, n)) if n else 1
    bounds = np.linspace(0, n, threads + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def build_neighbor_table(tree: Octree, r: float, threads: int = 1) -> NeighborTable:
    """
    Radius-query every indexed point once, walking the tree once per compact group of points.

    Args:
        tree: Octree over the points
        r: Neighbourhood radius
        threads: Worker threads; groups write disjoint slots

    Returns:
        NeighborTable over all points of the tree
    """
    n = len(tree)
    ball: List[np.ndarray] = [None] * n
    ranked: List[np.ndarray] = [None] * n
    ranked_dist: List[np.ndarray] = [None] * n
    groups = list(tree.groups(GROUP_POINTS))

    def work(start: int, stop: int) -> None:
        for members in groups[start:stop]:
            for i, nbrs in zip(members.tolist(), tree.radius_query_many(tree.points[members], r)):
                ball[i] = nbrs
                others = nbrs[nbrs != i]
                d2 = squared_distances(tree.points[others], tree.points[i])
                order = np.lexsort((others, d2))
                ranked[i] = others[order]
                ranked_dist[i] = np.sqrt(d2[order])

    ranges = chunk_ranges(len(groups), threads)
    if threads <= 1 or len(ranges) <= 1:
        for start, stop in ranges:
            work(start, stop)
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            for future in [executor.submit(work, a, b) for a, b in ranges]:
                future.result()
    logger.info(f"Built radius-{r:g} neighbour table for {n} points "
                f"(mean {np.mean([b.size for b in ball]) if n else 0:.1f} per ball)")
    return NeighborTable(radius=r, ball=ball, ranked=ranked, ranked_dist=ranked_dist)
