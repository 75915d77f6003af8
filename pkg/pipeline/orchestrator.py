"""
Run orchestrator: executes CLI commands and records their manifests.
"""

import hashlib
import logging
import time
import uuid
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import importlib_metadata
import numpy as np

from augmentation.transforms import apply_all, restrict_weak_labels
from cloud.config import SceneConfig
from cloud.errors import InvariantViolation
from cloud.model import PointCloud, WeakLabelSet
from cloud.sampling import sample_one_point_per_class, sample_weak_labels
from descriptors.external import load_external_embeddings
from evaluation.metrics import (
    confusion_matrix, ground_truth_instances, instance_ap50, instances_from_labels, miou, overseg_prf,
)
from ingestion.cloud_io import (
    load_cloud, load_labels, load_region_ids, load_weak_labels, save_cloud, save_labels, save_partition,
    save_weak_labels,
)
from ingestion.matrix_io import write_matrix
from merging.predictors import create_predictor
from merging.self_training import IterationRecord, self_train
from pipeline import __version__
from pipeline.report_schema import (
    TRACE_HEADER, Command, RunManifest, RunPhase, RunResult, RunStatus, write_csv,
)
from segmentation.oversegment import oversegment, prepare_geometry
from spatial.neighbors import build_neighbor_table
from spatial.octree import Octree, brute_force_knn
from synth import presets
from synth.scenes import generate
from synth.spec_file import load_scene


logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_FRACTION = 0.002
MANIFEST_NAME = "manifest.txt"
TRACKED_PACKAGES = ("numpy", "scipy", "plyfile", "python-dotenv")

# Typed arguments of every command, used to rebuild a run from its manifest.
COMMAND_ARGS: Dict[Command, Dict[str, type]] = {
    Command.OVERSEGMENT: {"input": str, "out": str, "weak_labels": str, "embeddings": str, "transform": list},
    Command.PROPAGATE: {"input": str, "out": str, "weak_labels": str, "one_point": bool,
                        "sample_fraction": float, "predictor": str, "embeddings": str,
                        "transform": list},
    Command.EVAL: {"pred": str, "gt": str, "task": str, "out": str},
    Command.DESCRIPTOR: {"input": str, "kind": str, "out": str, "frames_out": str, "transform": list},
    Command.BENCH_KNN: {"input": str, "uniform": int, "queries": int, "k": int, "out": str},
    Command.SYNTH: {"spec": str, "preset": str, "out": str},
}
INPUT_ARGS = ("input", "pred", "gt", "weak_labels", "embeddings", "spec")
DIRECTORY_OUTPUTS = {Command.OVERSEGMENT, Command.PROPAGATE}
FILE_OUTPUT_ARGS = ("out", "frames_out")

EventCallback = Callable[[str, str, Dict[str, Any]], None]


@dataclass(frozen=True, eq=False)
class LoadedInput:
    """An input cloud after the command's transforms.

    Point i of ``cloud`` is point ``index_map[i]`` of ``source``.
    """
    source: PointCloud
    cloud: PointCloud
    index_map: np.ndarray

    def weak_labels(self, path: str) -> WeakLabelSet:
        """Weak labels written against the source cloud, re-indexed onto the transformed one."""
        weak = load_weak_labels(path, self.source)
        if self.cloud is self.source:
            return weak
        return restrict_weak_labels(weak, self.index_map, self.source.size)


def sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def library_versions() -> Dict[str, str]:
    versions = {"pointmerge": __version__}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = importlib_metadata.version(name)
        except importlib_metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def manifest_path_for(command: Command, out: str) -> Path:
    """manifest.txt inside directory outputs, "<file>.manifest" next to file outputs."""
    out_path = Path(out)
    if command in DIRECTORY_OUTPUTS:
        return out_path / MANIFEST_NAME
    return out_path.parent / f"{out_path.name}.manifest"


def parse_args(command: Command, raw: Dict[str, Optional[str]]) -> Dict[str, Any]:
    """Typed command arguments from manifest strings; empty values become None."""
    spec = COMMAND_ARGS[command]
    args: Dict[str, Any] = {}
    for name, kind in spec.items():
        text = raw.get(name)
        if text is None or text == "":
            args[name] = False if kind is bool else None
        elif kind is bool:
            args[name] = text.strip().lower() == "true"
        elif kind is list:
            args[name] = [item for item in text.split(";") if item]
        else:
            args[name] = kind(text)
    return args


class RunOrchestrator:
    """Executes one command per call with a resolved SceneConfig."""

    def __init__(self, config: Optional[SceneConfig] = None):
        self.config = config or SceneConfig()
        self.event_callbacks: List[EventCallback] = []
        self.run_id = ""
        self.phase: Optional[RunPhase] = None

    def add_event_callback(self, callback: EventCallback):
        """Add callback for run events."""
        self.event_callbacks.append(callback)

    def _emit_event(self, event_type: str, data: Dict[str, Any]):
        """Emit event to all callbacks."""
        for callback in self.event_callbacks:
            try:
                callback(self.run_id, event_type, data)
            except Exception as e:
                logger.error(f"Event callback failed: {e}")

    def _enter_phase(self, phase: RunPhase, **data):
        self.phase = phase
        logger.debug(f"Run {self.run_id}: phase {phase.value}")
        self._emit_event("phase", {"phase": phase.value, **data})

    def run(self, command: Command, **kwargs) -> RunResult:
        """
        Execute one command and write its manifest.

        Args:
            command: Command to run
            **kwargs: Command arguments as listed in COMMAND_ARGS

        Returns:
            RunResult with output paths and summary values

        Raises:
            PointCloudError subclasses, FileNotFoundError or OSError from the command
        """
        handlers = {
            Command.OVERSEGMENT: self._oversegment,
            Command.PROPAGATE: self._propagate,
            Command.EVAL: self._evaluate,
            Command.DESCRIPTOR: self._descriptor,
            Command.BENCH_KNN: self._bench_knn,
            Command.SYNTH: self._synth,
        }
        args = {name: kwargs.get(name) for name in COMMAND_ARGS[command]}
        unknown = set(kwargs) - set(args)
        if unknown:
            raise TypeError(f"unknown arguments for {command.value}: {', '.join(sorted(unknown))}")

        self.run_id = uuid.uuid4().hex[:12]
        started = time.perf_counter()
        manifest = RunManifest(command=command, args=args, config=self.config.to_dict(), run_id=self.run_id)
        logger.info(f"Run {self.run_id}: {command.value}")
        self._emit_event("started", {"command": command.value})

        try:
            manifest.inputs = {name: sha256_of(Path(args[name])) for name in INPUT_ARGS
                               if args.get(name) and Path(args[name]).is_file()}
            outputs, results = handlers[command](**args)
        except Exception as e:
            phase = self.phase.value if self.phase else "setup"
            logger.error(f"Run {self.run_id} failed in phase {phase}: {e}")
            self._emit_event("failed", {"phase": phase, "error": str(e)})
            raise

        manifest.outputs = outputs
        manifest.results = results
        manifest.versions = library_versions()
        manifest.wall_time_s = time.perf_counter() - started
        manifest.status = RunStatus.COMPLETED
        path = manifest_path_for(command, args["out"])
        manifest.write(path)
        logger.info(f"Run {self.run_id} completed in {manifest.wall_time_s:.2f}s; manifest {path}")
        self._emit_event("completed", {"manifest": str(path), **results})
        return RunResult(command=command, outputs=outputs, results=results, manifest_path=str(path))

    # Commands

    def _load(self, path: str) -> PointCloud:
        self._enter_phase(RunPhase.LOAD, path=path)
        return load_cloud(path)

    def _load_input(self, path: str, transform: Optional[List[str]]) -> LoadedInput:
        source = self._load(path)
        if not transform:
            return LoadedInput(source=source, cloud=source, index_map=np.arange(source.size, dtype=np.int64))
        self._enter_phase(RunPhase.TRANSFORM, transforms=";".join(transform))
        cloud, index_map = apply_all(source, transform)
        return LoadedInput(source=source, cloud=cloud, index_map=index_map)

    def _geometry(self, loaded: LoadedInput, embeddings: Optional[str]):
        self._enter_phase(RunPhase.DESCRIPTORS, kind="external" if embeddings else self.config.descriptor)
        descriptors = None
        if embeddings:
            descriptors = load_external_embeddings(embeddings, loaded.source.size).subset(loaded.index_map)
        return prepare_geometry(loaded.cloud, self.config, descriptors=descriptors)

    def _oversegment(self, input: str, out: str, weak_labels: Optional[str], embeddings: Optional[str],
                     transform: Optional[List[str]]) -> Tuple[Dict[str, str], Dict[str, Any]]:
        loaded = self._load_input(input, transform)
        cloud = loaded.cloud
        weak = loaded.weak_labels(weak_labels) if weak_labels else None
        geometry = self._geometry(loaded, embeddings)
        self._enter_phase(RunPhase.GROW)
        partition = oversegment(cloud, self.config, weak, geometry)

        self._enter_phase(RunPhase.WRITE)
        out_dir = Path(out)
        partition_path, regions_path = out_dir / "partition.txt", out_dir / "regions.csv"
        save_partition(partition.point_region, partition_path)
        write_csv(regions_path, ["region_id", "size", "class", "confidence", "nx", "ny", "nz", "curvature"],
                  ([r.region_id, r.size, r.label.class_id, f"{r.label.confidence:.6g}",
                    *(f"{v:.6f}" for v in r.normal), f"{r.curvature:.6f}"] for r in partition))
        seeds = sum(1 for r in partition if r.is_seed)
        logger.info(f"Oversegmentation: {len(partition)} regions from {seeds} seeds")
        return ({"partition": str(partition_path), "regions": str(regions_path)},
                {"points": cloud.size, "regions": len(partition), "seeds": seeds})

    def _weak_labels(self, loaded: LoadedInput, weak_labels: Optional[str], one_point: bool,
                     sample_fraction: Optional[float]) -> WeakLabelSet:
        cloud = loaded.cloud
        if weak_labels:
            return loaded.weak_labels(weak_labels)
        if one_point:
            return sample_one_point_per_class(cloud, self.config.rng_seed)
        fraction = DEFAULT_SAMPLE_FRACTION if sample_fraction is None else sample_fraction
        return sample_weak_labels(cloud, fraction, self.config.rng_seed)

    def _propagate(self, input: str, out: str, weak_labels: Optional[str], one_point: bool,
                   sample_fraction: Optional[float], predictor: Optional[str],
                   embeddings: Optional[str],
                   transform: Optional[List[str]]) -> Tuple[Dict[str, str], Dict[str, Any]]:
        loaded = self._load_input(input, transform)
        cloud = loaded.cloud
        weak = self._weak_labels(loaded, weak_labels, one_point, sample_fraction)
        region_predictor = create_predictor(predictor or "builtin", self.config)
        geometry = self._geometry(loaded, embeddings)
        self._enter_phase(RunPhase.GROW)
        partition = oversegment(cloud, self.config, weak, geometry)

        self._enter_phase(RunPhase.MERGE, iterations=self.config.n_total)

        def on_iteration(record: IterationRecord):
            self._emit_event("iteration", record.to_dict())

        result = self_train(cloud, partition, weak, region_predictor, self.config, geometry,
                            on_iteration=on_iteration)
        instances = result.instances()

        self._enter_phase(RunPhase.WRITE)
        out_dir = Path(out)
        paths = {
            "labels": out_dir / "labels.txt",
            "trace": out_dir / "trace.csv",
            "instances": out_dir / "instances.txt",
            "weak_labels": out_dir / "weak_labels.txt",
        }
        save_labels(result.assignment, paths["labels"])
        write_csv(paths["trace"], TRACE_HEADER,
                  ([r.iteration, f"{r.labeled_fraction:.6f}", f"{r.pseudo_precision:.6f}",
                    f"{r.pseudo_recall:.6f}"] for r in result.trace))
        paths["instances"].write_text("".join(f"{inst.box.to_row()}\n" for inst in instances), encoding="utf-8")
        save_weak_labels(weak, paths["weak_labels"])

        final = result.trace[-1] if result.trace else result.initial
        results = {
            "points": cloud.size,
            "weak_labels": len(weak),
            "initial_labeled_fraction": f"{result.initial.labeled_fraction:.6f}",
            "labeled_fraction": f"{final.labeled_fraction:.6f}",
            "pseudo_precision": f"{final.pseudo_precision:.6f}",
            "pseudo_recall": f"{final.pseudo_recall:.6f}",
            "regions": final.regions,
            "instances": len(instances),
        }
        return {name: str(path) for name, path in paths.items()}, results

    def _evaluate(self, pred: str, gt: str, task: Optional[str],
                  out: str) -> Tuple[Dict[str, str], Dict[str, Any]]:
        task = task or "sem"
        cloud = self._load(gt)
        self._enter_phase(RunPhase.EVALUATE, task=task)
        if task == "sem":
            header, rows, results = self._semantic_report(pred, cloud)
        elif task == "inst":
            header, rows, results = self._instance_report(pred, cloud)
        elif task == "overseg":
            header, rows, results = self._overseg_report(pred, cloud)
        else:
            raise ValueError(f"unknown eval task '{task}'; expected sem, inst or overseg")
        self._enter_phase(RunPhase.WRITE)
        write_csv(out, header, rows)
        logger.info(f"Evaluation ({task}): " + ", ".join(f"{k}={v}" for k, v in results.items()))
        return {"report": str(out)}, results

    def _semantic_report(self, pred: str, cloud: PointCloud):
        assignment = load_labels(pred)
        gt = cloud.require("gt_labels")
        num_classes = max(cloud.num_classes(), int(assignment.classes.max(initial=-1)) + 1, 1)
        conf = confusion_matrix(assignment.classes, gt, num_classes)
        mean, per_class = miou(conf)
        gt_points, pred_points = conf.counts.sum(axis=1), conf.counts.sum(axis=0)
        correct = np.diag(conf.counts)
        rows = [[c, f"{per_class[c]:.6f}", int(gt_points[c]), int(pred_points[c]), int(correct[c])]
                for c in range(num_classes)]
        rows.append(["summary", f"{mean:.6f}", int(gt_points.sum()), int(pred_points.sum()), int(correct.sum())])
        results = {"miou": f"{mean:.6f}", "accuracy": f"{conf.accuracy():.6f}"}
        return ["class", "iou", "gt_points", "pred_points", "correct"], rows, results

    def _instance_report(self, pred: str, cloud: PointCloud):
        assignment = load_labels(pred)
        neighbors = build_neighbor_table(
            Octree(cloud.positions, leaf_capacity=self.config.leaf_capacity, max_depth=self.config.max_depth),
            self.config.radius, threads=self.config.threads)
        predicted = instances_from_labels(assignment, neighbors)
        truth = ground_truth_instances(cloud)
        per_class, mean = instance_ap50(predicted, truth)
        rows = []
        for class_id, ap in per_class.items():
            rows.append([class_id, f"{ap:.6f}", sum(1 for g in truth if g.class_id == class_id),
                         sum(1 for p in predicted if p.class_id == class_id)])
        rows.append(["summary", f"{mean:.6f}", len(truth), len(predicted)])
        return ["class", "ap50", "gt_instances", "pred_instances"], rows, {"map50": f"{mean:.6f}"}

    def _overseg_report(self, pred: str, cloud: PointCloud):
        region_ids = load_region_ids(pred)
        scores = overseg_prf(region_ids, cloud, self.config.radius)
        regions = int(np.unique(region_ids).size)
        rows = [["summary", f"{scores.recall:.6f}", f"{scores.precision:.6f}", f"{scores.f1:.6f}",
                 scores.gt_boundary, scores.pred_boundary, regions]]
        results = {"boundary_recall": f"{scores.recall:.6f}", "boundary_precision": f"{scores.precision:.6f}",
                   "boundary_f1": f"{scores.f1:.6f}", "regions": regions}
        header = ["class", "boundary_recall", "boundary_precision", "boundary_f1",
                  "gt_boundary", "pred_boundary", "regions"]
        return header, rows, results

    def _descriptor(self, input: str, kind: Optional[str], out: str, frames_out: Optional[str],
                    transform: Optional[List[str]]) -> Tuple[Dict[str, str], Dict[str, Any]]:
        cloud = self._load_input(input, transform).cloud
        config = replace(self.config, descriptor=kind or self.config.descriptor)
        self._enter_phase(RunPhase.DESCRIPTORS, kind=config.descriptor)
        geometry = prepare_geometry(cloud, config)

        self._enter_phase(RunPhase.WRITE)
        write_matrix(geometry.descriptors.values, out)
        outputs = {"descriptors": str(out)}
        if frames_out:
            write_matrix(np.column_stack([geometry.frames.normals, geometry.frames.curvatures]), frames_out)
            outputs["frames"] = str(frames_out)
        results = {"points": cloud.size, "dim": geometry.descriptors.dim,
                   "isolated": int(np.sum(geometry.descriptors.isolated))}
        return outputs, results

    def _bench_knn(self, input: Optional[str], uniform: Optional[int], queries: Optional[int],
                   k: Optional[int], out: str) -> Tuple[Dict[str, str], Dict[str, Any]]:
        rng = np.random.default_rng(self.config.rng_seed)
        if input:
            points = self._load(input).positions
        else:
            self._enter_phase(RunPhase.LOAD, uniform=uniform)
            if not uniform or uniform < 1:
                raise ValueError("bench-knn needs an input cloud or --uniform N with N >= 1")
            points = rng.uniform(0.0, 1.0, size=(uniform, 3))
        queries = 100 if queries is None else queries
        k = self.config.knn if k is None else k
        if queries < 0:
            raise ValueError("queries must be >= 0")

        self._enter_phase(RunPhase.INDEX, points=len(points))
        started = time.perf_counter()
        tree = Octree(points, leaf_capacity=self.config.leaf_capacity, max_depth=self.config.max_depth)
        build_s = time.perf_counter() - started
        centers = rng.uniform(points.min(axis=0), points.max(axis=0), size=(queries, 3))

        self._enter_phase(RunPhase.BENCHMARK, queries=queries, k=k)
        rows = []
        octree_total = brute_total = 0.0
        mismatches = 0
        for q, center in enumerate(centers):
            t0 = time.perf_counter()
            fast = tree.knn_query(center, k)
            t1 = time.perf_counter()
            slow = brute_force_knn(points, center, k)
            t2 = time.perf_counter()
            identical = bool(np.array_equal(fast, slow))
            mismatches += not identical
            octree_total += t1 - t0
            brute_total += t2 - t1
            rows.append([q, f"{t1 - t0:.6e}", f"{t2 - t1:.6e}", "true" if identical else "false"])
        if mismatches:
            raise InvariantViolation(f"octree k-NN differs from brute force on {mismatches} of {queries} queries")

        self._enter_phase(RunPhase.WRITE)
        write_csv(out, ["query", "octree_s", "brute_force_s", "identical"], rows)
        ratio = brute_total / octree_total if octree_total > 0 else float("nan")
        results = {"points": len(points), "queries": queries, "k": k, "build_s": f"{build_s:.4f}",
                   "octree_s": f"{octree_total:.4f}", "brute_force_s": f"{brute_total:.4f}",
                   "speedup": f"{ratio:.2f}"}
        return {"report": str(out)}, results

    def _synth(self, spec: Optional[str], preset: Optional[str],
               out: str) -> Tuple[Dict[str, str], Dict[str, Any]]:
        self._enter_phase(RunPhase.LOAD, spec=spec, preset=preset)
        if spec and preset:
            raise ValueError("synth takes a scene file or a preset, not both")
        if spec:
            scene = load_scene(spec)
        elif preset:
            scene = presets.preset(preset, seed=self.config.rng_seed)
        else:
            raise ValueError("synth needs a scene file or --preset")
        self._enter_phase(RunPhase.WRITE)
        cloud = generate(scene)
        save_cloud(cloud, out)
        results = {"points": cloud.size, "primitives": len(scene.primitives), "classes": cloud.num_classes()}
        return {"cloud": str(out)}, results


def rerun(manifest_path: str, out: Optional[str] = None,
          callbacks: Optional[List[EventCallback]] = None) -> RunResult:
    """
    Re-execute a recorded run with its resolved configuration.

    Outputs go to the recorded paths, or under ``out`` when given: directory
    outputs are replaced by ``out`` and file outputs keep their names inside it.

    Raises:
        FileNotFoundError: If the manifest or a recorded input is missing
        CloudParseError: If the manifest is malformed
    """
    manifest = RunManifest.read(manifest_path)
    args = parse_args(manifest.command, manifest.args)
    config = SceneConfig.from_mapping(manifest.config)
    if out:
        if manifest.command in DIRECTORY_OUTPUTS:
            args["out"] = out
        else:
            for name in FILE_OUTPUT_ARGS:
                if args.get(name):
                    args[name] = str(Path(out) / Path(args[name]).name)
    for name, expected in manifest.inputs.items():
        path = args.get(name)
        if path and Path(path).is_file() and sha256_of(Path(path)) != expected:
            logger.warning(f"Input {name} ({path}) changed since the recorded run")
    logger.info(f"Rerunning {manifest.command.value} from {manifest_path}")
    orchestrator = RunOrchestrator(config)
    for callback in callbacks or ():
        orchestrator.add_event_callback(callback)
    return orchestrator.run(manifest.command, **args)
