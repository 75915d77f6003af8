"""
End-to-end tests for the run.py command line: outputs, manifests and exit codes.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from cloud.errors import CloudParseError, InvariantViolation, ShapeMismatchError
from cloud.model import LabelAssignment, PointCloud, WeakLabelSet
from cloud.sampling import round_half_up
from ingestion.cloud_io import load_cloud, load_labels, load_region_ids, save_cloud, save_labels, save_weak_labels
from ingestion.matrix_io import read_matrix, write_matrix
from pipeline.report_schema import RunManifest, read_csv
from run import EXIT_INTERNAL, EXIT_OK, EXIT_SHAPE, EXIT_USAGE, exit_code_for, main


def two_planes() -> PointCloud:
    """Two flat 15 x 15 grids 1 m apart; the upper one carries a little noise."""
    xs, ys = np.meshgrid(np.arange(15) * 0.04, np.arange(15) * 0.04)
    lower = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)])
    upper = lower + [0.0, 0.0, 1.0]
    upper[:, 2] += np.random.default_rng(3).normal(scale=1e-3, size=len(upper))
    labels = np.repeat([0, 1], len(lower))
    return PointCloud(positions=np.vstack([lower, upper]), gt_labels=labels)


@pytest.fixture
def plane_files(tmp_path):
    cloud = two_planes()
    cloud_path = tmp_path / "planes.xyz"
    save_cloud(cloud, cloud_path)
    weak_path = tmp_path / "weak.txt"
    save_weak_labels(WeakLabelSet(indices=np.array([300]), classes=np.array([1]), num_classes=2), weak_path)
    return cloud_path, weak_path


@pytest.fixture
def scene_ply(tmp_path):
    path = tmp_path / "scene.ply"
    assert main(["synth", "--preset", "two_parallel_planes", str(path)]) == EXIT_OK
    return path


def exact_labels(cloud: PointCloud, path: Path) -> Path:
    """A label file that reproduces the ground truth exactly."""
    assignment = LabelAssignment(region_ids=cloud.gt_instances, classes=cloud.gt_labels,
                                 confidences=np.ones(cloud.size))
    save_labels(assignment, path)
    return path


class TestExitCodes:
    """Test the exception to exit code mapping."""

    def test_mapping(self):
        """Test each error family lands on its documented code."""
        assert exit_code_for(ShapeMismatchError("rows")) == EXIT_SHAPE
        assert exit_code_for(InvariantViolation("frozen")) == EXIT_INTERNAL
        assert exit_code_for(CloudParseError("bad")) == EXIT_USAGE
        assert exit_code_for(FileNotFoundError("gone")) == EXIT_USAGE
        assert exit_code_for(ValueError("bad value")) == EXIT_USAGE
        assert exit_code_for(RuntimeError("boom")) == EXIT_INTERNAL

    def test_unknown_command_is_usage_error(self):
        """Test argparse rejects an unknown subcommand with exit 2."""
        with pytest.raises(SystemExit) as excinfo:
            main(["explode"])
        assert excinfo.value.code == 2


class TestOversegmentCommand:
    """Test the oversegment subcommand."""

    def test_writes_partition_and_manifest(self, tmp_path, plane_files):
        """Test two planes give two regions with partition, table and manifest."""
        cloud_path, weak_path = plane_files
        out = tmp_path / "seg"
        code = main(["oversegment", str(cloud_path), str(out), "--weak-labels", str(weak_path)])

        assert code == EXIT_OK
        region_ids = load_region_ids(out / "partition.txt")
        assert len(np.unique(region_ids)) == 2
        assert len(np.unique(region_ids[:225])) == 1
        rows = read_csv(out / "regions.csv")
        assert len(rows) == 2
        assert sorted(r["class"] for r in rows) == ["-1", "1"]
        manifest = RunManifest.read(out / "manifest.txt")
        assert manifest.results["regions"] == "2"
        assert manifest.status.value == "completed"

    def test_config_flag_recorded(self, tmp_path, plane_files):
        """Test a --theta-th override is resolved into the manifest."""
        cloud_path, _ = plane_files
        out = tmp_path / "seg"
        assert main(["oversegment", str(cloud_path), str(out), "--theta-th", "60"]) == EXIT_OK

        manifest = RunManifest.read(out / "manifest.txt")
        assert float(manifest.config["theta_th"]) == 60.0
        assert manifest.args["input"] == str(cloud_path)
        assert "input" in manifest.inputs

    def test_transform_applied_and_recorded(self, tmp_path, plane_files):
        """Test a z rotation keeps the two regions and is written to the manifest."""
        cloud_path, weak_path = plane_files
        out = tmp_path / "seg"
        code = main(["oversegment", str(cloud_path), str(out), "--weak-labels", str(weak_path),
                     "--transform", "rotz:90"])

        assert code == EXIT_OK
        region_ids = load_region_ids(out / "partition.txt")
        assert region_ids.size == 450
        assert len(np.unique(region_ids)) == 2
        assert sorted(r["class"] for r in read_csv(out / "regions.csv")) == ["-1", "1"]
        assert RunManifest.read(out / "manifest.txt").args["transform"] == "rotz:90"

    def test_transform_chain_rerun(self, tmp_path, plane_files):
        """Test chained transforms shrink the cloud and a rerun parses them back."""
        cloud_path, _ = plane_files
        first, second = tmp_path / "first", tmp_path / "second"
        code = main(["oversegment", str(cloud_path), str(first), "--transform", "rotz:30",
                     "--transform", "down:0.5:1"])

        assert code == EXIT_OK
        manifest = RunManifest.read(first / "manifest.txt")
        assert manifest.args["transform"] == "rotz:30;down:0.5:1"
        assert manifest.results["points"] == "225"
        assert main(["rerun", str(first / "manifest.txt"), "--out", str(second)]) == EXIT_OK
        assert (first / "partition.txt").read_bytes() == (second / "partition.txt").read_bytes()

    def test_bad_transform(self, tmp_path, plane_files):
        """Test a malformed transform exits with 2."""
        cloud_path, _ = plane_files
        assert main(["oversegment", str(cloud_path), str(tmp_path / "out"), "--transform", "spin:3"]) == EXIT_USAGE

    def test_missing_input(self, tmp_path):
        """Test a missing cloud file exits with 2."""
        assert main(["oversegment", str(tmp_path / "absent.xyz"), str(tmp_path / "out")]) == EXIT_USAGE

    def test_invalid_config_value(self, tmp_path, plane_files):
        """Test an out-of-range override exits with 2."""
        cloud_path, _ = plane_files
        assert main(["oversegment", str(cloud_path), str(tmp_path / "out"), "--radius", "-1"]) == EXIT_USAGE


class TestPropagateCommand:
    """Test the propagate and rerun subcommands."""

    def test_oracle_run(self, tmp_path, scene_ply):
        """Test an oracle run writes every output and one trace row per iteration."""
        out = tmp_path / "prop"
        code = main(["propagate", str(scene_ply), str(out), "--one-point", "--predictor", "oracle"])

        assert code == EXIT_OK
        trace = read_csv(out / "trace.csv")
        assert [int(r["iter"]) for r in trace] == list(range(1, 9))
        labels = load_labels(out / "labels.txt")
        assert len(labels) == load_cloud(scene_ply).size
        assert (out / "instances.txt").is_file()
        assert (out / "weak_labels.txt").is_file()
        manifest = RunManifest.read(out / "manifest.txt")
        assert manifest.args["predictor"] == "oracle"
        assert float(manifest.results["pseudo_precision"]) == pytest.approx(1.0)

    def test_file_predictor_row_mismatch(self, tmp_path, scene_ply):
        """Test a prediction matrix with the wrong row count exits with 3."""
        matrix = tmp_path / "pred.mat"
        write_matrix(np.array([[0.5, 0.5]]), matrix)
        code = main(["propagate", str(scene_ply), str(tmp_path / "prop"), "--one-point",
                     "--predictor", f"file:{matrix}"])
        assert code == EXIT_SHAPE

    def test_unknown_predictor(self, tmp_path, scene_ply):
        """Test an unknown predictor name exits with 2."""
        code = main(["propagate", str(scene_ply), str(tmp_path / "prop"), "--predictor", "magic"])
        assert code == EXIT_USAGE

    def test_rerun_reproduces_outputs(self, tmp_path, scene_ply):
        """Test rerunning a manifest writes byte-identical labels and trace."""
        first, second = tmp_path / "first", tmp_path / "second"
        assert main(["propagate", str(scene_ply), str(first), "--one-point", "--predictor", "oracle"]) == EXIT_OK
        assert main(["rerun", str(first / "manifest.txt"), "--out", str(second)]) == EXIT_OK

        for name in ("labels.txt", "trace.csv", "instances.txt"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_rerun_missing_manifest(self, tmp_path):
        """Test rerun of an absent manifest exits with 2."""
        assert main(["rerun", str(tmp_path / "manifest.txt")]) == EXIT_USAGE


class TestEvalCommand:
    """Test the eval subcommand."""

    def test_semantic_perfect(self, tmp_path, scene_ply):
        """Test labels equal to ground truth give mIoU 1."""
        labels = exact_labels(load_cloud(scene_ply), tmp_path / "labels.txt")
        report = tmp_path / "sem.csv"
        assert main(["eval", str(labels), str(scene_ply), "--task", "sem", "--out", str(report)]) == EXIT_OK

        rows = read_csv(report)
        assert list(rows[0]) == ["class", "iou", "gt_points", "pred_points", "correct"]
        assert rows[-1]["class"] == "summary"
        assert rows[-1]["iou"] == "1.000000"
        manifest = RunManifest.read(tmp_path / "sem.csv.manifest")
        assert manifest.results["accuracy"] == "1.000000"

    def test_instance_perfect(self, tmp_path, scene_ply):
        """Test exact instances give AP50 of 1."""
        labels = exact_labels(load_cloud(scene_ply), tmp_path / "labels.txt")
        report = tmp_path / "inst.csv"
        assert main(["eval", str(labels), str(scene_ply), "--task", "inst", "--out", str(report)]) == EXIT_OK

        rows = read_csv(report)
        assert rows[-1]["class"] == "summary"
        assert rows[-1]["ap50"] == "1.000000"
        assert rows[-1]["gt_instances"] == "2"

    def test_label_count_mismatch(self, tmp_path, scene_ply):
        """Test a label file for another cloud exits with 3."""
        cloud = load_cloud(scene_ply)
        short = LabelAssignment(region_ids=np.zeros(5, np.int64), classes=np.zeros(5, np.int64),
                                confidences=np.ones(5))
        save_labels(short, tmp_path / "labels.txt")
        code = main(["eval", str(tmp_path / "labels.txt"), str(scene_ply), "--out", str(tmp_path / "r.csv")])
        assert cloud.size != 5
        assert code == EXIT_SHAPE


class TestDescriptorCommand:
    """Test the descriptor subcommand."""

    @pytest.mark.parametrize("kind,dim", [("adapted-pfh", 125), ("fpfh", 33)])
    def test_dimensions(self, tmp_path, scene_ply, kind, dim):
        """Test the dumped matrix has one row per point and the kind's width."""
        out = tmp_path / "desc.mat"
        frames = tmp_path / "frames.mat"
        code = main(["descriptor", str(scene_ply), str(out), "--kind", kind, "--frames-out", str(frames)])

        assert code == EXIT_OK
        n = load_cloud(scene_ply).size
        assert read_matrix(out).shape == (n, dim)
        assert read_matrix(frames).shape == (n, 4)

    def test_transform_downsamples(self, tmp_path, scene_ply):
        """Test a downsampling transform gives one descriptor row per kept point."""
        out = tmp_path / "desc.mat"
        code = main(["descriptor", str(scene_ply), str(out), "--transform", "down:0.5"])

        assert code == EXIT_OK
        n = load_cloud(scene_ply).size
        assert read_matrix(out).shape == (round_half_up(0.5 * n), 125)
        assert RunManifest.read(tmp_path / "desc.mat.manifest").args["transform"] == "down:0.5"

    def test_unknown_kind(self, tmp_path, scene_ply):
        """Test an unknown descriptor kind exits with 2."""
        code = main(["descriptor", str(scene_ply), str(tmp_path / "d.mat"), "--kind", "shot"])
        assert code == EXIT_USAGE


class TestBenchAndSynthCommands:
    """Test the bench-knn and synth subcommands."""

    def test_bench_without_queries(self, tmp_path):
        """Test zero queries write a header-only report."""
        out = tmp_path / "bench.csv"
        code = main(["bench-knn", "--uniform", "500", "--queries", "0", "--out", str(out)])

        assert code == EXIT_OK
        assert out.read_text() == "query,octree_s,brute_force_s,identical\n"
        manifest = RunManifest.read(tmp_path / "bench.csv.manifest")
        assert manifest.results["speedup"] == "nan"

    def test_bench_queries_identical(self, tmp_path):
        """Test every timed query agrees with brute force."""
        out = tmp_path / "bench.csv"
        assert main(["bench-knn", "--uniform", "2000", "--queries", "10", "--k", "5", "--out", str(out)]) == EXIT_OK

        rows = read_csv(out)
        assert len(rows) == 10
        assert all(r["identical"] == "true" for r in rows)

    def test_bench_needs_points(self, tmp_path):
        """Test bench-knn without input or --uniform exits with 2."""
        assert main(["bench-knn", "--out", str(tmp_path / "b.csv")]) == EXIT_USAGE

    def test_synth_preset(self, scene_ply):
        """Test the preset scene round-trips with labels and instances."""
        cloud = load_cloud(scene_ply)
        assert cloud.size > 0
        assert set(np.unique(cloud.gt_labels)) == {0, 1}
        assert set(np.unique(cloud.gt_instances)) == {0, 1}

    def test_synth_spec_and_preset_conflict(self, tmp_path):
        """Test passing both a scene file and a preset exits with 2."""
        spec = Path(__file__).parent.parent / "configs" / "sample_scene.ini"
        code = main(["synth", "--spec", str(spec), "--preset", "two_parallel_planes", str(tmp_path / "s.ply")])
        assert code == EXIT_USAGE

    def test_synth_from_scene_file(self, tmp_path):
        """Test the sample scene file generates a labelled cloud."""
        spec = Path(__file__).parent.parent / "configs" / "sample_scene.ini"
        out = tmp_path / "sample.ply"
        assert main(["synth", "--spec", str(spec), str(out)]) == EXIT_OK
        assert load_cloud(out).gt_labels is not None
