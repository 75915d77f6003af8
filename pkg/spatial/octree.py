"""Octree over 3-D points with exact radius and k-nearest-neighbour queries.

Points are stored once in a permutation array; every node covers a contiguous
slice of it, so a node's whole subtree can be returned without descending.
Queries prune with three tests:

* an octant disjoint from the query ball is skipped,
* a k-NN search stops once its current ball lies inside a fully scanned octant,
* an octant inside the query ball is accepted in bulk.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional

import numpy as np

from cloud.errors import CloudDataError, EmptyIndexError, IndexBoundsError


logger = logging.getLogger(__name__)

ROOT_PADDING = 1e-6


def squared_distances(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances from each row of points to center."""
    diff = points - center
    return np.sum(diff * diff, axis=1)


def brute_force_radius(points: np.ndarray, center, r: float) -> np.ndarray:
    """Linear-scan radius query, ascending indices."""
    return np.flatnonzero(squared_distances(points, np.asarray(center, dtype=np.float64)) <= r * r)


def brute_force_knn(points: np.ndarray, center, k: int) -> np.ndarray:
    """Linear-scan k-NN, ascending distance with ties to the lower index."""
    d2 = squared_distances(points, np.asarray(center, dtype=np.float64))
    return np.lexsort((np.arange(d2.size), d2))[:k]


@dataclass
class QueryStats:
    """Per-query instrumentation, owned by the caller."""
    nodes_visited: int = 0
    bulk_accepts: int = 0
    points_tested: int = 0
    leaves_scanned: int = 0


class _Node:
    __slots__ = ("center", "half", "depth", "start", "end", "children")

    def __init__(self, center: np.ndarray, half: float, depth: int, start: int, end: int):
        self.center = center
        self.half = half
        self.depth = depth
        self.start = start
        self.end = end
        self.children: List["_Node"] = []

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def min_dist2(self, q: np.ndarray) -> float:
        gap = np.maximum(np.abs(q - self.center) - self.half, 0.0)
        return float(gap @ gap)

    def max_dist2(self, q: np.ndarray) -> float:
        far = np.abs(q - self.center) + self.half
        return float(far @ far)

    def contains_ball(self, q: np.ndarray, radius: float) -> bool:
        return bool(np.all(np.abs(q - self.center) + radius < self.half))


class Octree:
    """
    Read-only octree; concurrent queries are safe.

    Args:
        points: (N, 3) coordinates, N >= 1
        leaf_capacity: Maximum points per leaf before splitting
        max_depth: Depth at which leaves stop splitting regardless of size

    Raises:
        EmptyIndexError: If points is empty
    """

    def __init__(self, points: np.ndarray, leaf_capacity: int = 16, max_depth: int = 21):
        pts = np.array(points, dtype=np.float64, copy=True).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise EmptyIndexError("cannot build an octree over zero points")
        if not np.all(np.isfinite(pts)):
            raise CloudDataError("octree points must be finite")
        if leaf_capacity < 1:
            raise ValueError("leaf_capacity must be >= 1")
        pts.setflags(write=False)
        self.points = pts
        self.leaf_capacity = leaf_capacity
        self.max_depth = max_depth
        self.perm = np.arange(pts.shape[0], dtype=np.int64)

        lo = pts.min(axis=0) - ROOT_PADDING
        hi = pts.max(axis=0) + ROOT_PADDING
        side = float((hi - lo).max())
        self.root = _Node(lo + side / 2.0, side / 2.0, 0, 0, pts.shape[0])
        self.node_count = 1
        self.depth = 0
        self._build()
        logger.debug(f"Built octree over {pts.shape[0]} points: {self.node_count} nodes, depth {self.depth}")

    def __len__(self) -> int:
        return self.points.shape[0]

    def _build(self) -> None:
        stack = [self.root]
        while stack:
            node = stack.pop()
            self.depth = max(self.depth, node.depth)
            count = node.end - node.start
            if count <= self.leaf_capacity or node.depth >= self.max_depth:
                continue
            idx = self.perm[node.start:node.end]
            p = self.points[idx]
            c = node.center
            # Points on a splitting plane go to the lower-coordinate child.
            codes = ((p[:, 0] > c[0]).astype(np.int64) << 2) \
                | ((p[:, 1] > c[1]).astype(np.int64) << 1) \
                | (p[:, 2] > c[2]).astype(np.int64)
            order = np.argsort(codes, kind="stable")
            self.perm[node.start:node.end] = idx[order]
            counts = np.bincount(codes, minlength=8)
            quarter = node.half / 2.0
            offset = node.start
            for octant in range(8):
                n = int(counts[octant])
                if n == 0:
                    continue
                signs = np.array([(octant >> 2) & 1, (octant >> 1) & 1, octant & 1]) * 2.0 - 1.0
                child = _Node(c + signs * quarter, quarter, node.depth + 1, offset, offset + n)
                node.children.append(child)
                stack.append(child)
                offset += n
            self.node_count += len(node.children)

    def leaves(self) -> Iterator[np.ndarray]:
        """Yield the point indices of every leaf."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield self.perm[node.start:node.end]
            else:
                stack.extend(node.children)

    def groups(self, max_points: int) -> Iterator[np.ndarray]:
        """Yield the point indices of the largest subtrees holding at most max_points points (leaves always)."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf or node.end - node.start <= max_points:
                yield self.perm[node.start:node.end]
            else:
                stack.extend(node.children)

    def radius_query_many(self, centers, r: float) -> List[np.ndarray]:
        """
        Radius query for a compact group of centers with one tree walk.

        Args:
            centers: (Q, 3) query points
            r: Radius, > 0

        Returns:
            One ascending int64 index array per center, equal to radius_query
        """
        if not r > 0:
            raise ValueError(f"radius must be > 0, got {r}")
        q = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
        if q.shape[0] == 0:
            return []
        lo, hi = q.min(axis=0), q.max(axis=0)
        r2 = r * r
        found: List[np.ndarray] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            # gap between the node box and the bounding box of the centers
            gap = np.maximum(np.maximum(lo - (node.center + node.half), (node.center - node.half) - hi), 0.0)
            if float(gap @ gap) > r2:
                continue
            if node.is_leaf:
                found.append(self.perm[node.start:node.end])
            else:
                stack.extend(node.children)
        if not found:
            return [np.empty(0, dtype=np.int64) for _ in range(q.shape[0])]
        cand = np.sort(np.concatenate(found))
        diff = self.points[cand][None, :, :] - q[:, None, :]
        inside = np.sum(diff * diff, axis=2) <= r2
        return [cand[row] for row in inside]

    @property
    def leaf_count(self) -> int:
        return sum(1 for _ in self.leaves())

    def radius_query(self, center, r: float, stats: Optional[QueryStats] = None) -> np.ndarray:
        """
        Indices of all points p with |p - center| <= r.

        Args:
            center: Query point
            r: Radius, > 0
            stats: Optional counters filled during the query

        Returns:
            Ascending int64 indices
        """
        if not r > 0:
            raise ValueError(f"radius must be > 0, got {r}")
        q = np.asarray(center, dtype=np.float64)
        r2 = r * r
        found: List[np.ndarray] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if stats is not None:
                stats.nodes_visited += 1
            if node.min_dist2(q) > r2:
                continue
            if node.max_dist2(q) <= r2:
                if stats is not None:
                    stats.bulk_accepts += 1
                found.append(self.perm[node.start:node.end])
                continue
            if node.is_leaf:
                idx = self.perm[node.start:node.end]
                if stats is not None:
                    stats.points_tested += idx.size
                    stats.leaves_scanned += 1
                found.append(idx[squared_distances(self.points[idx], q) <= r2])
            else:
                stack.extend(node.children)
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(found))

    def knn_query(self, center, k: int, stats: Optional[QueryStats] = None,
                  return_distances: bool = False):
        """
        The k points nearest to center, ascending distance, ties to the lower index.

        Args:
            center: Query point
            k: Neighbour count in 1..N
            stats: Optional counters filled during the query
            return_distances: Also return the Euclidean distances

        Returns:
            int64 indices, or (indices, distances) when return_distances is set

        Raises:
            IndexBoundsError: If k is outside 1..N
        """
        if not 1 <= k <= len(self):
            raise IndexBoundsError(f"k must lie in 1..{len(self)}, got {k}")
        q = np.asarray(center, dtype=np.float64)
        best_d2 = np.empty(0, dtype=np.float64)
        best_idx = np.empty(0, dtype=np.int64)

        def worst() -> float:
            return float(best_d2[-1]) if best_d2.size == k else math.inf

        def visit(node: _Node) -> bool:
            nonlocal best_d2, best_idx
            if stats is not None:
                stats.nodes_visited += 1
            if node.is_leaf:
                idx = self.perm[node.start:node.end]
                if stats is not None:
                    stats.points_tested += idx.size
                    stats.leaves_scanned += 1
                d2 = np.concatenate([best_d2, squared_distances(self.points[idx], q)])
                cand = np.concatenate([best_idx, idx])
                keep = np.lexsort((cand, d2))[:k]
                best_d2, best_idx = d2[keep], cand[keep]
            else:
                ranked = sorted(range(len(node.children)),
                                key=lambda i: (node.children[i].min_dist2(q), i))
                for i in ranked:
                    child = node.children[i]
                    if child.min_dist2(q) > worst():
                        continue
                    if visit(child):
                        return True
            w = worst()
            return math.isfinite(w) and node.contains_ball(q, math.sqrt(w))

        visit(self.root)
        if return_distances:
            return best_idx, np.sqrt(best_d2)
        return best_idx
