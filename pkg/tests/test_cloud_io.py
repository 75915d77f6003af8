"""
Tests for the point cloud model, weak-label sampling and file IO.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from plyfile import PlyData, PlyElement

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from cloud.errors import CloudDataError, CloudParseError, MissingChannelError, ShapeMismatchError
from cloud.model import LabelAssignment, PointCloud, WeakLabelSet
from cloud.sampling import round_half_up, sample_one_point_per_class, sample_weak_labels
from ingestion.cloud_io import (
    load_cloud, load_labels, load_region_ids, load_weak_labels, save_cloud, save_labels, save_partition,
    save_weak_labels,
)
from ingestion.matrix_io import MAGIC, read_matrix, write_matrix


def labelled_cloud(n: int, num_classes: int, seed: int = 0) -> PointCloud:
    rng = np.random.default_rng(seed)
    return PointCloud(positions=rng.uniform(size=(n, 3)), gt_labels=np.arange(n) % num_classes)


class TestPointCloud:
    """Test PointCloud invariants."""

    def test_channel_lengths_must_match(self):
        """Test a colour channel of the wrong length is rejected."""
        with pytest.raises(ShapeMismatchError):
            PointCloud(positions=np.zeros((3, 3)), colors=np.zeros((2, 3)))

    def test_non_finite_position_rejected(self):
        """Test NaN coordinates raise a data error."""
        positions = np.zeros((2, 3))
        positions[1, 2] = np.nan
        with pytest.raises(CloudDataError):
            PointCloud(positions=positions)

    def test_colors_outside_unit_range_rejected(self):
        """Test colours above 1 are rejected."""
        with pytest.raises(CloudDataError):
            PointCloud(positions=np.zeros((1, 3)), colors=np.array([[2.0, 0.0, 0.0]]))

    def test_require_missing_channel(self):
        """Test require raises for absent channels."""
        cloud = PointCloud(positions=np.zeros((2, 3)))
        with pytest.raises(MissingChannelError):
            cloud.require("gt_labels")

    def test_positions_are_read_only(self):
        """Test the position array cannot be modified in place."""
        cloud = PointCloud(positions=np.zeros((2, 3)))
        with pytest.raises(ValueError):
            cloud.positions[0, 0] = 1.0

    def test_class_frequency(self):
        """Test per-class counts ignore unlabelled points."""
        cloud = PointCloud(positions=np.zeros((5, 3)), gt_labels=[0, 0, 1, -1, 1])
        assert cloud.class_frequency() == {0: 2, 1: 2}
        assert cloud.num_classes() == 2


class TestLoadCloud:
    """Test ASCII and PLY loading."""

    def test_three_line_ascii(self, tmp_path):
        """Test a plain xyz file gives three points and no colours."""
        path = tmp_path / "cloud.xyz"
        path.write_text("0 0 0\n1 0 0\n0 1 0\n")
        cloud = load_cloud(path)
        assert cloud.size == 3
        assert cloud.colors is None
        assert np.array_equal(cloud.positions[1], [1.0, 0.0, 0.0])

    def test_nan_names_line(self, tmp_path):
        """Test a NaN coordinate reports its line number."""
        path = tmp_path / "bad.xyz"
        path.write_text("0 0 nan\n")
        with pytest.raises(CloudDataError, match="line 1"):
            load_cloud(path)

    def test_malformed_line_number(self, tmp_path):
        """Test a wrong column count is a parse error on that line."""
        path = tmp_path / "bad.xyz"
        path.write_text("0 0 0\n1 2\n")
        with pytest.raises(CloudParseError) as info:
            load_cloud(path)
        assert info.value.line == 2

    def test_missing_file(self, tmp_path):
        """Test a missing path raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_cloud(tmp_path / "absent.xyz")

    def test_ascii_colors_and_labels(self, tmp_path):
        """Test integer colours are scaled from 0-255 and labels are read."""
        path = tmp_path / "cloud.txt"
        path.write_text("0 0 0 255 0 0 1\n1 1 1 0 255 0 0\n")
        cloud = load_cloud(path)
        assert np.allclose(cloud.colors[0], [1.0, 0.0, 0.0])
        assert list(cloud.gt_labels) == [1, 0]

    def test_ply_red_channel_normalised(self, tmp_path):
        """Test PLY red=255 loads as 1.0."""
        vertices = np.array([(0.0, 0.0, 0.0, 255, 10, 0), (1.0, 0.0, 0.0, 0, 0, 0)],
                            dtype=[("x", "f4"), ("y", "f4"), ("z", "f4"),
                                   ("red", "u1"), ("green", "u1"), ("blue", "u1")])
        path = tmp_path / "cloud.ply"
        PlyData([PlyElement.describe(vertices, "vertex")], text=True).write(str(path))
        cloud = load_cloud(path)
        assert cloud.size == 2
        assert cloud.colors[0, 0] == pytest.approx(1.0)

    def test_ply_round_trip(self, tmp_path):
        """Test save then load keeps positions, colours, labels and instances."""
        rng = np.random.default_rng(3)
        cloud = PointCloud(positions=rng.normal(size=(20, 3)),
                           colors=rng.integers(0, 256, size=(20, 3)) / 255.0,
                           gt_labels=rng.integers(0, 3, size=20), gt_instances=rng.integers(0, 5, size=20))
        path = tmp_path / "cloud.ply"
        save_cloud(cloud, path)
        back = load_cloud(path)
        assert np.allclose(back.positions, cloud.positions, atol=1e-6)
        assert np.allclose(back.colors, cloud.colors, atol=1e-6)
        assert np.array_equal(back.gt_labels, cloud.gt_labels)
        assert np.array_equal(back.gt_instances, cloud.gt_instances)

    def test_ascii_float_colors_round_trip(self, tmp_path):
        """Test colours between 8-bit steps survive an ASCII save and load."""
        cloud = PointCloud(positions=np.zeros((2, 3)), colors=np.array([[0.3, 0.0, 1.0], [0.123457, 0.5, 0.25]]))
        path = tmp_path / "cloud.xyz"
        save_cloud(cloud, path)
        assert path.read_text().splitlines()[0].split()[3:] == ["0.300000", "0.000000", "1.000000"]
        back = load_cloud(path)
        assert np.allclose(back.colors, cloud.colors, atol=1e-6)

    def test_ply_float_colors_round_trip(self, tmp_path):
        """Test PLY keeps colours that are not 8-bit steps as float channels."""
        cloud = PointCloud(positions=np.zeros((2, 3)), colors=np.array([[0.3, 0.0, 1.0], [0.123457, 0.5, 0.25]]))
        path = tmp_path / "cloud.ply"
        save_cloud(cloud, path)
        assert np.issubdtype(PlyData.read(str(path))["vertex"]["red"].dtype, np.floating)
        assert np.allclose(load_cloud(path).colors, cloud.colors, atol=1e-6)

    def test_ascii_round_trip(self, tmp_path):
        """Test ASCII save then load agrees to 1e-6."""
        cloud = labelled_cloud(15, 2)
        path = tmp_path / "cloud.xyz"
        save_cloud(cloud, path)
        back = load_cloud(path)
        assert np.allclose(back.positions, cloud.positions, atol=1e-6)
        assert np.array_equal(back.gt_labels, cloud.gt_labels)


class TestWeakLabelSampling:
    """Test the weak-label sampling protocol."""

    def test_two_classes_small_fraction(self):
        """Test N=1000 at 0.2% with two classes gives one entry per class."""
        weak = sample_weak_labels(labelled_cloud(1000, 2), 0.002, rng_seed=1)
        assert len(weak) == 2
        assert set(weak.classes.tolist()) == {0, 1}

    def test_deterministic(self):
        """Test the same seed gives the same entries."""
        cloud = labelled_cloud(1000, 2)
        a = sample_weak_labels(cloud, 0.002, rng_seed=5)
        b = sample_weak_labels(cloud, 0.002, rng_seed=5)
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.classes, b.classes)

    def test_count_rule(self):
        """Test N=10000 at 0.2% with three classes gives 20 entries covering every class."""
        cloud = labelled_cloud(10000, 3)
        weak = sample_weak_labels(cloud, 0.002, rng_seed=0)
        assert len(weak) == 20
        assert set(weak.classes.tolist()) == {0, 1, 2}
        assert np.array_equal(weak.classes, cloud.gt_labels[weak.indices])
        assert np.all(np.diff(weak.indices) > 0)

    def test_requires_labels(self):
        """Test sampling needs ground truth."""
        with pytest.raises(MissingChannelError):
            sample_weak_labels(PointCloud(positions=np.zeros((4, 3))), 0.5, rng_seed=0)

    def test_fraction_range(self):
        """Test fractions outside (0, 1] are rejected."""
        with pytest.raises(CloudDataError):
            sample_weak_labels(labelled_cloud(10, 2), 0.0, rng_seed=0)

    def test_one_point_per_class(self):
        """Test the one-point protocol picks exactly one point of each class."""
        weak = sample_one_point_per_class(labelled_cloud(300, 4), rng_seed=2)
        assert sorted(weak.classes.tolist()) == [0, 1, 2, 3]

    def test_round_half_up(self):
        """Test half values round away from zero."""
        assert round_half_up(2.5) == 3
        assert round_half_up(2.4) == 2

    def test_weak_label_uniqueness(self):
        """Test duplicate indices are rejected."""
        with pytest.raises(CloudDataError):
            WeakLabelSet(indices=[1, 1], classes=[0, 0], num_classes=1)


class TestLabelFiles:
    """Test label, partition and weak-label files."""

    def test_two_point_rows(self, tmp_path):
        """Test two points give two index-ordered rows with the -1 sentinel."""
        path = tmp_path / "labels.txt"
        save_labels(LabelAssignment(region_ids=[0, 1], classes=[2, -1], confidences=[0.5, 0.0]), path)
        lines = path.read_text().splitlines()
        assert lines == ["0 0 2 0.5", "1 1 -1 0"]

    def test_round_trip(self, tmp_path):
        """Test save then load reproduces the assignment."""
        original = LabelAssignment(region_ids=[3, 3, 7], classes=[1, 1, -1], confidences=[0.875, 0.875, 0.0])
        path = tmp_path / "labels.txt"
        save_labels(original, path)
        back = load_labels(path)
        assert np.array_equal(back.region_ids, original.region_ids)
        assert np.array_equal(back.classes, original.classes)
        assert np.allclose(back.confidences, original.confidences)

    def test_region_ids_from_either_file(self, tmp_path):
        """Test region ids load from partition files and label files alike."""
        save_partition(np.array([4, 4, 9]), tmp_path / "partition.txt")
        save_labels(LabelAssignment(region_ids=[4, 4, 9], classes=[0, 0, 1], confidences=[1, 1, 1]),
                    tmp_path / "labels.txt")
        assert load_region_ids(tmp_path / "partition.txt").tolist() == [4, 4, 9]
        assert load_region_ids(tmp_path / "labels.txt").tolist() == [4, 4, 9]

    def test_weak_label_round_trip(self, tmp_path):
        """Test weak labels survive a save and load against their cloud."""
        cloud = labelled_cloud(50, 2)
        weak = sample_weak_labels(cloud, 0.1, rng_seed=0)
        save_weak_labels(weak, tmp_path / "weak.txt")
        back = load_weak_labels(tmp_path / "weak.txt", cloud)
        assert back.as_dict() == weak.as_dict()
        assert back.num_classes == 2

    def test_weak_label_out_of_bounds(self, tmp_path):
        """Test indices beyond the cloud are rejected."""
        path = tmp_path / "weak.txt"
        path.write_text("99 0\n")
        with pytest.raises(CloudDataError):
            load_weak_labels(path, labelled_cloud(10, 2))


class TestMatrixFiles:
    """Test RM3DMAT1 matrices."""

    def test_round_trip_float32(self, tmp_path):
        """Test a matrix reads back as float32 with its shape."""
        data = np.arange(12, dtype=np.float64).reshape(4, 3) / 7.0
        write_matrix(data, tmp_path / "m.mat")
        back = read_matrix(tmp_path / "m.mat")
        assert back.shape == (4, 3)
        assert back.dtype == np.float32
        assert np.allclose(back, data, atol=1e-6)

    def test_bad_magic(self, tmp_path):
        """Test files without the magic are rejected."""
        path = tmp_path / "m.mat"
        path.write_bytes(b"NOTAMAT1" + bytes(16))
        with pytest.raises(CloudParseError):
            read_matrix(path)

    def test_truncated_payload(self, tmp_path):
        """Test a short payload is rejected."""
        write_matrix(np.ones((2, 2)), tmp_path / "m.mat")
        raw = (tmp_path / "m.mat").read_bytes()
        assert raw.startswith(MAGIC)
        (tmp_path / "m.mat").write_bytes(raw[:-4])
        with pytest.raises(CloudParseError):
            read_matrix(tmp_path / "m.mat")
