"""
Tests for the octree index and neighbour tables.
"""

import sys
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from cloud.errors import EmptyIndexError, IndexBoundsError
from spatial.neighbors import build_neighbor_table, chunk_ranges
from spatial.octree import Octree, QueryStats, brute_force_knn, brute_force_radius


@pytest.fixture(scope="module")
def random_clouds():
    """Five uniform random clouds of 10^4 points."""
    return [np.random.default_rng(seed).uniform(-1.0, 1.0, size=(10_000, 3)) for seed in range(5)]


class TestBuild:
    """Test octree construction."""

    def test_single_point(self):
        """Test one point gives a depth-0 tree with a single leaf."""
        tree = Octree(np.array([[1.0, 2.0, 3.0]]))
        assert tree.depth == 0
        assert tree.leaf_count == 1

    def test_unit_cube_corners(self):
        """Test eight corners with capacity 1 land in eight octants after one split."""
        corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
        tree = Octree(corners, leaf_capacity=1)
        assert tree.depth == 1
        leaves = list(tree.leaves())
        assert len(leaves) == 8
        assert all(leaf.size == 1 for leaf in leaves)

    def test_every_index_once(self, random_clouds):
        """Test each of 10^4 indices sits in exactly one leaf."""
        tree = Octree(random_clouds[0], leaf_capacity=16)
        counts = Counter(int(i) for leaf in tree.leaves() for i in leaf)
        assert len(counts) == 10_000
        assert set(counts.values()) == {1}

    def test_leaf_capacity_respected(self, random_clouds):
        """Test leaves stay within capacity below the depth limit."""
        tree = Octree(random_clouds[1], leaf_capacity=8)
        assert max(leaf.size for leaf in tree.leaves()) <= 8

    def test_max_depth_caps_splitting(self):
        """Test duplicate points stop splitting at the depth limit."""
        tree = Octree(np.zeros((50, 3)), leaf_capacity=4, max_depth=3)
        assert tree.depth <= 3
        assert sum(leaf.size for leaf in tree.leaves()) == 50

    def test_empty_input(self):
        """Test an empty point set is rejected."""
        with pytest.raises(EmptyIndexError):
            Octree(np.empty((0, 3)))


class TestQueries:
    """Test exactness against linear scans."""

    def test_radius_and_knn_match_brute_force(self, random_clouds):
        """Test 100 radius and 100 k-NN queries on each of five clouds."""
        for seed, points in enumerate(random_clouds):
            tree = Octree(points, leaf_capacity=16)
            rng = np.random.default_rng(100 + seed)
            centers = rng.uniform(-1.1, 1.1, size=(100, 3))
            radii = rng.uniform(0.05, 0.4, size=100)
            ks = rng.integers(1, 64, size=100)
            for center, r, k in zip(centers, radii, ks):
                assert np.array_equal(tree.radius_query(center, r), brute_force_radius(points, center, r))
                assert np.array_equal(tree.knn_query(center, int(k)), brute_force_knn(points, center, int(k)))

    def test_grouped_radius_matches_brute_force(self, random_clouds):
        """Test one walk per group returns the same balls as single queries."""
        points = random_clouds[4]
        tree = Octree(points, leaf_capacity=16)
        for members in list(tree.groups(64))[:20]:
            for i, nbrs in zip(members, tree.radius_query_many(points[members], 0.12)):
                assert np.array_equal(nbrs, brute_force_radius(points, points[i], 0.12))

    def test_grouped_radius_far_centers(self):
        """Test centers away from every point get empty results."""
        tree = Octree(np.random.default_rng(9).uniform(size=(50, 3)))
        result = tree.radius_query_many(np.full((3, 3), 10.0), 0.5)
        assert [r.size for r in result] == [0, 0, 0]

    def test_groups_partition(self, random_clouds):
        """Test groups cover every index once and stay within the size limit above leaf level."""
        tree = Octree(random_clouds[0], leaf_capacity=16)
        groups = list(tree.groups(64))
        counts = Counter(int(i) for group in groups for i in group)
        assert len(counts) == 10_000
        assert set(counts.values()) == {1}
        assert max(group.size for group in groups) <= 64

    def test_knn_all_points(self):
        """Test k = N returns every index sorted by distance."""
        points = np.random.default_rng(7).normal(size=(40, 3))
        tree = Octree(points, leaf_capacity=4)
        result = tree.knn_query(np.zeros(3), 40)
        assert sorted(result.tolist()) == list(range(40))
        d = np.linalg.norm(points[result], axis=1)
        assert np.all(np.diff(d) >= 0)

    def test_knn_ties_to_lower_index(self):
        """Test equidistant points are ordered by index."""
        points = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0], [5.0, 5.0, 5.0]])
        tree = Octree(points, leaf_capacity=1)
        assert tree.knn_query(np.zeros(3), 3).tolist() == [0, 1, 2]

    def test_knn_bounds(self):
        """Test k outside 1..N is a bounds error."""
        tree = Octree(np.random.default_rng(0).normal(size=(5, 3)))
        with pytest.raises(IndexBoundsError):
            tree.knn_query(np.zeros(3), 6)
        with pytest.raises(IndexBoundsError):
            tree.knn_query(np.zeros(3), 0)

    def test_knn_distances(self):
        """Test returned distances match the points."""
        points = np.random.default_rng(2).normal(size=(100, 3))
        tree = Octree(points, leaf_capacity=8)
        idx, dist = tree.knn_query(np.ones(3), 5, return_distances=True)
        assert np.allclose(dist, np.linalg.norm(points[idx] - 1.0, axis=1))

    def test_radius_bulk_accept(self, random_clouds):
        """Test a ball covering the cloud accepts whole octants without testing points."""
        tree = Octree(random_clouds[2], leaf_capacity=16)
        stats = QueryStats()
        result = tree.radius_query(np.zeros(3), 10.0, stats=stats)
        assert result.size == 10_000
        assert stats.bulk_accepts >= 1
        assert stats.points_tested == 0

    def test_knn_prunes(self, random_clouds):
        """Test a k-NN query scans only a small share of the points."""
        tree = Octree(random_clouds[3], leaf_capacity=16)
        stats = QueryStats()
        tree.knn_query(np.array([0.3, -0.2, 0.1]), 8, stats=stats)
        assert stats.points_tested < 2_000


class TestNeighborTable:
    """Test radius neighbour tables."""

    def test_matches_brute_force(self):
        """Test every ball equals a linear scan and ranked lists exclude the point."""
        points = np.random.default_rng(4).uniform(size=(300, 3))
        table = build_neighbor_table(Octree(points), 0.15)
        for i in range(0, 300, 17):
            assert np.array_equal(table.ball[i], brute_force_radius(points, points[i], 0.15))
            assert i not in table.ranked[i]
            assert np.all(np.diff(table.ranked_dist[i]) >= 0)

    def test_threads_agree(self):
        """Test threaded construction gives the same table."""
        points = np.random.default_rng(5).uniform(size=(400, 3))
        one = build_neighbor_table(Octree(points), 0.1, threads=1)
        four = build_neighbor_table(Octree(points), 0.1, threads=4)
        assert all(np.array_equal(a, b) for a, b in zip(one.ball, four.ball))
        assert all(np.array_equal(a, b) for a, b in zip(one.ranked, four.ranked))

    def test_nearest_truncates(self):
        """Test nearest returns at most k ranked neighbours."""
        points = np.array([[0.0, 0, 0], [0.01, 0, 0], [0.02, 0, 0], [0.5, 0, 0]])
        table = build_neighbor_table(Octree(points), 0.05)
        assert table.nearest(0, 1).tolist() == [1]
        assert table.nearest(3, 4).size == 0

    def test_chunk_ranges_cover(self):
        """Test chunks are contiguous and cover the range."""
        ranges = chunk_ranges(10, 3)
        assert ranges[0][0] == 0 and ranges[-1][1] == 10
        assert all(a[1] == b[0] for a, b in zip(ranges, ranges[1:]))
