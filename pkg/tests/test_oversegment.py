"""
Tests for seed selection, affinity and region growing.
"""

import math
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from augmentation.transforms import Transform, apply
from cloud.config import SceneConfig
from cloud.errors import ShapeMismatchError
from cloud.model import PointCloud, WeakLabelSet
from descriptors.base import Descriptor, DescriptorKind, DescriptorSet
from geometry.frames import LocalFrames
from segmentation.oversegment import affinity, oversegment, prepare_geometry, select_seeds
from segmentation.regions import LabelKind, Partition, initial_pseudo_labels, majority_class, make_region
from synth.presets import perpendicular_planes, tilted_planes
from synth.scenes import generate


def grid(n: int, spacing: float, z: float = 0.0) -> np.ndarray:
    xs, ys = np.meshgrid(np.arange(n) * spacing, np.arange(n) * spacing, indexing="ij")
    return np.column_stack([xs.ravel(), ys.ravel(), np.full(n * n, z)])


def two_planes() -> PointCloud:
    """A flat grid at z = 0 and a slightly noisy copy at z = 1."""
    upper = grid(15, 0.04, 1.0)
    upper[:, 2] += 1e-3 * np.random.default_rng(3).normal(size=len(upper))
    return PointCloud(positions=np.concatenate([grid(15, 0.04), upper]))


class TestSeeds:
    """Test seed selection."""

    def test_lowest_curvature_and_weak(self):
        """Test the lowest-curvature points plus every weak-labelled point are seeds."""
        cloud = PointCloud(positions=np.random.default_rng(0).uniform(size=(5, 3)))
        frames = LocalFrames.from_normals(np.tile([0.0, 0.0, 1.0], (5, 1)),
                                          curvatures=np.array([0.2, 0.1, 0.1, 0.3, 0.0]))
        weak = WeakLabelSet(indices=[3], classes=[0], num_classes=1)
        assert select_seeds(cloud, frames, None, 0.3).tolist() == [1, 4]
        assert select_seeds(cloud, frames, weak, 0.3).tolist() == [1, 3, 4]

    def test_curvature_ties_to_lower_index(self):
        """Test equal curvatures select the lower index first."""
        cloud = PointCloud(positions=np.random.default_rng(0).uniform(size=(4, 3)))
        frames = LocalFrames.from_normals(np.tile([0.0, 0.0, 1.0], (4, 1)))
        assert select_seeds(cloud, frames, None, 0.25).tolist() == [0]


class TestAffinity:
    """Test the combined region affinity."""

    def _region(self, normal, descriptor, degenerate=False):
        return SimpleNamespace(normal=np.asarray(normal, dtype=float), degenerate=degenerate,
                               descriptor=Descriptor(values=np.asarray(descriptor, dtype=float),
                                                     kind=DescriptorKind.ADAPTED_PFH))

    def test_identical(self):
        """Test identical regions reach sqrt(lambda_n + lambda_des)."""
        a = self._region([0, 0, 1], [1, 0])
        assert affinity(a, a, 1.0, 1.0) == pytest.approx(math.sqrt(2.0))

    def test_perpendicular_normals(self):
        """Test perpendicular normals leave only the descriptor term."""
        a = self._region([0, 0, 1], [1, 0])
        b = self._region([1, 0, 0], [1, 0])
        assert affinity(a, b, 1.0, 1.0) == pytest.approx(1.0)

    def test_degenerate_side(self):
        """Test a degenerate region contributes no normal affinity."""
        a = self._region([0, 0, 1], [0, 1])
        b = self._region([0, 0, 1], [1, 0], degenerate=True)
        assert affinity(a, b, 1.0, 1.0) == pytest.approx(0.0)

    def test_thresholds(self):
        """Test the gate values at theta 60 degrees."""
        config = SceneConfig()
        assert config.affinity_threshold == pytest.approx(math.sqrt(2.0) * 0.5)
        assert config.normal_threshold == pytest.approx(0.5)


class TestGrowing:
    """Test region growing on synthetic scenes."""

    def test_single_plane_one_region(self):
        """Test one seed on a flat grid grows over the whole plane."""
        cloud = PointCloud(positions=grid(20, 0.04))
        partition = oversegment(cloud, SceneConfig())
        assert len(partition) == 1
        assert partition.sizes() == [400]

    def test_perpendicular_planes_not_mixed(self):
        """Test no region spans a floor and a wall meeting at a crease, at theta 60 degrees."""
        cloud = generate(perpendicular_planes(gap=0.0))
        partition = oversegment(cloud, SceneConfig(theta_th=60.0))
        partition.validate()
        for region in partition:
            assert np.unique(cloud.gt_labels[region.members]).size == 1

    def test_crease_seed_stays_single(self):
        """Test a weak label on the sharpest crease point gives a one-point region."""
        cloud = generate(perpendicular_planes(gap=0.0))
        config = SceneConfig()
        geometry = prepare_geometry(cloud, config)
        crease = int(np.argmax(geometry.frames.curvatures))
        assert geometry.frames.curvatures[crease] > config.crease_curvature
        weak = WeakLabelSet(indices=[crease], classes=[int(cloud.gt_labels[crease])], num_classes=2)
        partition = oversegment(cloud, config, weak, geometry)
        region = partition.region(int(partition.point_region[crease]))
        assert region.size == 1
        assert region.is_seed
        assert region.label.kind == LabelKind.WEAK

    def test_selected_seeds_marked(self):
        """Test every selected seed heads a region flagged as a seed."""
        cloud = two_planes()
        config = SceneConfig(seed_fraction=0.01)
        geometry = prepare_geometry(cloud, config)
        seeds = select_seeds(cloud, geometry.frames, None, config.seed_fraction)
        partition = oversegment(cloud, config, geometry=geometry)
        assert sum(1 for r in partition if r.is_seed) >= len(seeds)
        for seed in seeds:
            assert partition.region(int(partition.point_region[seed])).is_seed

    def test_weak_labels_seed_second_plane(self):
        """Test a weak label on the second plane gives two labelled regions."""
        cloud = two_planes()
        weak = WeakLabelSet(indices=[300], classes=[1], num_classes=2)
        partition = oversegment(cloud, SceneConfig(), weak)
        assert sorted(partition.sizes()) == [225, 225]
        upper = partition.region(int(partition.point_region[300]))
        assert upper.label.kind == LabelKind.WEAK
        assert upper.label.class_id == 1
        lower = partition.region(int(partition.point_region[0]))
        assert not lower.label.is_labeled

    def test_rotation_robustness(self):
        """Test a z rotation keeps the sorted region sizes of tilted planes within one point each."""
        cloud = generate(tilted_planes())
        rotated, _ = apply(cloud, Transform.rotate_z(30.0))
        config = SceneConfig()
        before = sorted(oversegment(cloud, config).sizes(), reverse=True)
        after = sorted(oversegment(rotated, config).sizes(), reverse=True)
        assert len(before) == len(after)
        assert all(abs(a - b) <= 1 for a, b in zip(before, after))

    def test_external_descriptors_shape(self):
        """Test precomputed descriptors must have one row per point."""
        cloud = PointCloud(positions=grid(5, 0.04))
        descriptors = DescriptorSet(kind=DescriptorKind.EXTERNAL, values=np.ones((3, 4)),
                                    isolated=np.zeros(3, dtype=bool))
        with pytest.raises(ShapeMismatchError):
            prepare_geometry(cloud, SceneConfig(), descriptors)


class TestInitialLabels:
    """Test majority voting of weak labels per region."""

    def test_majority_class(self):
        """Test the most frequent class wins."""
        assert majority_class(np.array([2, 2, 1]), {}) == 2

    def test_majority_tie_breaks(self):
        """Test ties go to the more frequent class, then the lower id."""
        assert majority_class(np.array([0, 1]), {0: 10, 1: 20}) == 1
        assert majority_class(np.array([0, 1]), {0: 5, 1: 5}) == 0

    def test_initial_pseudo_labels(self):
        """Test regions with weak labels take their majority class with confidence 1."""
        cloud = PointCloud(positions=grid(4, 0.1))
        frames = LocalFrames.from_normals(np.tile([0.0, 0.0, 1.0], (16, 1)))
        descriptors = DescriptorSet(kind=DescriptorKind.EXTERNAL, values=np.ones((16, 2)),
                                    isolated=np.zeros(16, dtype=bool))
        regions = [make_region(cloud, frames, descriptors, 0, np.arange(8)),
                   make_region(cloud, frames, descriptors, 1, np.arange(8, 16))]
        point_region = np.repeat([0, 1], 8)
        partition = Partition(regions=regions, point_region=point_region)
        weak = WeakLabelSet(indices=[1, 2, 3], classes=[4, 4, 2], num_classes=5)
        labelled = initial_pseudo_labels(partition, weak)
        assert labelled.region(0).label.class_id == 4
        assert labelled.region(0).label.confidence == 1.0
        assert not labelled.region(1).label.is_labeled
        assignment = labelled.assignment()
        assert assignment.classes.tolist() == [4] * 8 + [-1] * 8
