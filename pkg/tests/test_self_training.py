"""
Tests for the self-training loop and label-quality bookkeeping.
"""

import math
import sys
import time
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from cloud.config import SceneConfig
from cloud.errors import ShapeMismatchError
from cloud.model import LabelAssignment
from cloud.sampling import sample_weak_labels
from ingestion.matrix_io import write_matrix
from merging.predictors import create_predictor
from merging.predictors.base import BasePredictor
from merging.predictors.oracle import OraclePredictor
from merging.self_training import label_quality, self_train
from segmentation.oversegment import oversegment, prepare_geometry
from synth.presets import five_primitives, two_parallel_planes
from synth.scenes import generate


class RecordingOracle(OraclePredictor):
    """Oracle that remembers the class of every frozen region it is shown."""

    def __init__(self, config=None):
        super().__init__(config)
        self.frozen: List[Dict[int, int]] = []

    def predict_rows(self, state, iteration: int) -> np.ndarray:
        self.frozen.append({rid: state.regions[rid].label.class_id for rid in state.frozen})
        return super().predict_rows(state, iteration)


def run(spec, predictor: Union[str, BasePredictor], config: SceneConfig = SceneConfig(),
        fraction: float = 0.002):
    cloud = generate(spec)
    weak = sample_weak_labels(cloud, fraction, rng_seed=config.rng_seed)
    geometry = prepare_geometry(cloud, config)
    partition = oversegment(cloud, config, weak, geometry)
    if isinstance(predictor, str):
        predictor = create_predictor(predictor, config)
    result = self_train(cloud, partition, weak, predictor, config, geometry=geometry)
    return cloud, partition, result


@pytest.fixture(scope="module")
def primitives_run():
    """Recorded oracle self-training on the five-primitive scene at a reduced density."""
    oracle = RecordingOracle()
    return run(five_primitives(density=400.0), oracle) + (oracle,)


@pytest.fixture(scope="module")
def full_scene_run():
    """Timed oracle self-training on the five-primitive scene at its default density."""
    started = time.perf_counter()
    cloud, partition, result = run(five_primitives(), "oracle")
    return cloud, result, time.perf_counter() - started


class TestLabelQuality:
    """Test labelled fraction, precision and recall."""

    def test_quality(self):
        """Test precision over labelled points and recall over annotated points."""
        assignment = LabelAssignment(region_ids=[0, 0, 1, 1], classes=[0, 1, -1, 1],
                                     confidences=[1.0, 0.9, 0.0, 0.9])
        fraction, precision, recall = label_quality(assignment, np.array([0, 0, 1, 1]))
        assert fraction == pytest.approx(0.75)
        assert precision == pytest.approx(2.0 / 3.0)
        assert recall == pytest.approx(0.5)

    def test_without_ground_truth(self):
        """Test precision and recall are NaN without ground truth."""
        assignment = LabelAssignment(region_ids=[0, 1], classes=[0, -1], confidences=[1.0, 0.0])
        fraction, precision, recall = label_quality(assignment, None)
        assert fraction == pytest.approx(0.5)
        assert math.isnan(precision)
        assert math.isnan(recall)


class TestSelfTraining:
    """Test label propagation over several iterations."""

    def test_oracle_accuracy(self, primitives_run):
        """Test oracle propagation from 0.2% labels reaches 90% accuracy."""
        cloud, _, result, _ = primitives_run
        accuracy = float(np.mean(result.assignment.classes == cloud.gt_labels))
        initial_accuracy = result.initial.pseudo_recall
        assert accuracy >= 0.90
        assert accuracy >= initial_accuracy

    def test_trace(self, primitives_run):
        """Test one record per iteration with a non-decreasing labelled fraction."""
        _, _, result, _ = primitives_run
        assert [r.iteration for r in result.trace] == list(range(1, 9))
        fractions = [result.initial.labeled_fraction] + [r.labeled_fraction for r in result.trace]
        assert all(b >= a for a, b in zip(fractions, fractions[1:]))

    def test_weak_labels_kept(self, primitives_run):
        """Test weak-labelled points keep their class."""
        cloud, partition, result, _ = primitives_run
        weak_regions = [r for r in partition if r.label.is_labeled]
        for region in weak_regions:
            assert np.all(result.assignment.classes[region.members] == region.label.class_id)

    def test_instances(self, primitives_run):
        """Test every instance box contains its members."""
        cloud, _, result, _ = primitives_run
        instances = result.instances()
        assert instances
        for instance in instances:
            points = cloud.positions[instance.members]
            assert np.all(points >= instance.box.minimum - 1e-12)
            assert np.all(points <= instance.box.maximum + 1e-12)

    def test_frozen_labels_never_change(self, primitives_run):
        """Test every frozen region keeps its class from the iteration it froze to the end."""
        _, _, result, oracle = primitives_run
        final = {rid: result.state.regions[rid].label.class_id for rid in result.state.frozen}
        seen = oracle.frozen + [final]
        assert len(seen) == 9
        for earlier, later in zip(seen, seen[1:]):
            assert set(earlier) <= set(later)
            for rid, class_id in earlier.items():
                assert later[rid] == class_id

    def test_uniform_predictor_keeps_initial_labels(self):
        """Test uniform predictions leave the initial labelling unchanged."""
        _, partition, result = run(two_parallel_planes(), "uniform")
        assert np.array_equal(result.assignment.classes, partition.assignment().classes)
        assert result.trace[-1].labeled_fraction == result.initial.labeled_fraction

    def test_deterministic(self):
        """Test two runs with the same inputs give identical labels."""
        _, _, first = run(two_parallel_planes(), "builtin")
        _, _, second = run(two_parallel_planes(), "builtin")
        assert np.array_equal(first.assignment.classes, second.assignment.classes)
        assert np.array_equal(first.assignment.confidences, second.assignment.confidences)

    def test_iteration_callback(self):
        """Test the callback fires once per iteration."""
        cloud = generate(two_parallel_planes())
        config = SceneConfig(n_total=3)
        weak = sample_weak_labels(cloud, 0.01, rng_seed=0)
        geometry = prepare_geometry(cloud, config)
        partition = oversegment(cloud, config, weak, geometry)
        seen = []
        self_train(cloud, partition, weak, create_predictor("uniform", config), config,
                   geometry=geometry, on_iteration=seen.append)
        assert [r.iteration for r in seen] == [1, 2, 3]

    def test_file_predictor_row_mismatch(self, tmp_path):
        """Test a prediction file with the wrong row count aborts self-training."""
        cloud = generate(two_parallel_planes())
        config = SceneConfig()
        weak = sample_weak_labels(cloud, 0.01, rng_seed=0)
        geometry = prepare_geometry(cloud, config)
        partition = oversegment(cloud, config, weak, geometry)
        path = tmp_path / "pred.mat"
        write_matrix(np.full((len(partition) + 1, 2), 0.5), path)
        with pytest.raises(ShapeMismatchError):
            self_train(cloud, partition, weak, create_predictor(f"file:{path}", config), config,
                       geometry=geometry)


class TestFullScene:
    """Test self-training on the full-size five-primitive scene."""

    def test_scene_size(self, full_scene_run):
        """Test the default density yields at least 5e4 points."""
        cloud, _, _ = full_scene_run
        assert cloud.size >= 50000

    def test_accuracy_improves(self, full_scene_run):
        """Test 0.2% labels with the oracle reach 90% accuracy and beat the initial labels."""
        cloud, result, _ = full_scene_run
        accuracy = float(np.mean(result.assignment.classes == cloud.gt_labels))
        assert accuracy >= 0.90
        assert accuracy >= result.initial.pseudo_recall

    def test_labelled_fraction_non_decreasing(self, full_scene_run):
        """Test the labelled fraction never drops across the trace."""
        _, result, _ = full_scene_run
        fractions = [result.initial.labeled_fraction] + [r.labeled_fraction for r in result.trace]
        assert all(b >= a for a, b in zip(fractions, fractions[1:]))

    def test_runtime(self, full_scene_run):
        """Test generation, geometry, growing and eight iterations finish within 60 s."""
        _, _, elapsed = full_scene_run
        assert elapsed < 60.0
