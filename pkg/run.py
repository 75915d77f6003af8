#!/usr/bin/env python3
"""
Command-line entry point for pointmerge.

    python run.py oversegment scene.ply out/ --theta-th 60
    python run.py oversegment scene.ply rotated/ --transform rotz:90 --transform down:0.5
    python run.py propagate scene.ply out/ --sample-fraction 0.002 --predictor oracle
    python run.py eval out/labels.txt scene.ply --task sem --out report.csv
    python run.py descriptor scene.ply descriptors.mat --kind fpfh --radius 0.1
    python run.py bench-knn --uniform 1000000 --queries 100 --k 8
    python run.py synth --preset five_primitives scene.ply
    python run.py rerun out/manifest.txt --out rerun/
"""

import argparse
import logging
import os
import sys
from dataclasses import fields
from typing import Any, Dict, List, Optional

from colorama import Fore, Style
from dotenv import load_dotenv

# Add the current directory to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from cloud.config import SceneConfig, load_config  # noqa: E402
from cloud.errors import (  # noqa: E402
    DegeneratePairError, InvariantViolation, PointCloudError, ShapeMismatchError,
)
from pipeline import __version__  # noqa: E402
from pipeline.orchestrator import COMMAND_ARGS, RunOrchestrator, rerun  # noqa: E402
from pipeline.report_schema import Command, RunResult  # noqa: E402


logger = logging.getLogger("pointmerge")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SHAPE = 3
EXIT_INTERNAL = 4


def setup_logging():
    """Configure logging for the application."""
    log_level = os.getenv("LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, log_level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the documented exit code."""
    if isinstance(error, ShapeMismatchError):
        return EXIT_SHAPE
    if isinstance(error, (DegeneratePairError, InvariantViolation)):
        return EXIT_INTERNAL
    if isinstance(error, (PointCloudError, OSError, ValueError)):
        return EXIT_USAGE
    return EXIT_INTERNAL


def add_config_flags(parser: argparse.ArgumentParser):
    """--config plus one override flag per SceneConfig field (theta_th -> --theta-th)."""
    group = parser.add_argument_group("configuration")
    group.add_argument("--config", help="'key = value' config file applied before the flags")
    defaults = SceneConfig()
    for f in fields(SceneConfig):
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", metavar="VALUE",
                           help=f"(default: {getattr(defaults, f.name)})")


def add_transform_flag(parser: argparse.ArgumentParser):
    parser.add_argument("--transform", action="append", metavar="SPEC",
                        help="Transform the input before processing: rotz:ANGLE, rot:SEED, flip:AXIS "
                             "or down:FRACTION[:SEED]; repeat to chain")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="run.py", allow_abbrev=False,
                                     description="Weak-label point cloud oversegmentation and label propagation")
    parser.add_argument("--version", action="version", version=f"pointmerge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, allow_abbrev=False)
        if name != "rerun":
            add_config_flags(p)
        return p

    p = command(Command.OVERSEGMENT.value, "Oversegment a cloud into regions")
    p.add_argument("input", help="Input cloud (.xyz/.txt or .ply)")
    p.add_argument("out", help="Output directory")
    p.add_argument("--weak-labels", help="'index class' file labelling the regions")
    p.add_argument("--embeddings", help="RM3DMAT1 per-point embeddings used as descriptors")
    add_transform_flag(p)

    p = command(Command.PROPAGATE.value, "Propagate weak labels by self-training")
    p.add_argument("input", help="Input cloud (.xyz/.txt or .ply)")
    p.add_argument("out", help="Output directory")
    weak = p.add_mutually_exclusive_group()
    weak.add_argument("--weak-labels", help="'index class' file of weak labels")
    weak.add_argument("--one-point", action="store_true", help="Sample one labelled point per class")
    weak.add_argument("--sample-fraction", type=float, help="Sampled labelled fraction (default: 0.002)")
    p.add_argument("--predictor", default="builtin", help="builtin, oracle, uniform or file:<path>")
    p.add_argument("--embeddings", help="RM3DMAT1 per-point embeddings used as descriptors")
    add_transform_flag(p)

    p = command(Command.EVAL.value, "Evaluate labels against ground truth")
    p.add_argument("pred", help="Label file (sem/inst) or partition file (overseg)")
    p.add_argument("gt", help="Ground-truth cloud")
    p.add_argument("--task", choices=["sem", "inst", "overseg"], default="sem")
    p.add_argument("--out", default="report.csv", help="Report CSV")

    p = command(Command.DESCRIPTOR.value, "Dump per-point descriptors")
    p.add_argument("input", help="Input cloud")
    p.add_argument("out", help="Output RM3DMAT1 matrix")
    p.add_argument("--kind", default="adapted-pfh", help="adapted-pfh, original-pfh or fpfh")
    p.add_argument("--frames-out", help="Also write an N x 4 matrix of normal and curvature")
    add_transform_flag(p)

    p = command(Command.BENCH_KNN.value, "Time octree k-NN against brute force")
    p.add_argument("input", nargs="?", help="Input cloud (omit with --uniform)")
    p.add_argument("--uniform", type=int, help="Benchmark N uniform points in the unit cube")
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--out", default="bench_knn.csv", help="Per-query timing CSV")

    p = command(Command.SYNTH.value, "Generate a synthetic scene")
    p.add_argument("out", help="Output cloud (.ply keeps instance ids)")
    p.add_argument("--spec", help="Scene file")
    p.add_argument("--preset", help="Named preset scene")

    p = command("rerun", "Re-execute a run from its manifest")
    p.add_argument("manifest", help="Manifest written by a previous run")
    p.add_argument("--out", help="Write outputs here instead of the recorded paths")
    return parser


def resolve_config(ns: argparse.Namespace) -> SceneConfig:
    overrides = {f.name: getattr(ns, f"cfg_{f.name}") for f in fields(SceneConfig)}
    return load_config(ns.config, overrides)


def command_args(command: Command, ns: argparse.Namespace) -> Dict[str, Any]:
    return {name: getattr(ns, name, None) for name in COMMAND_ARGS[command]}


def log_event(run_id: str, event_type: str, data: Dict[str, Any]):
    if event_type == "phase":
        logger.info(f"[{run_id}] {data.get('phase')}")
    elif event_type == "iteration":
        logger.debug(f"[{run_id}] iteration {data.get('iteration')}: "
                     f"labelled {data.get('labeled_fraction', 0.0):.2%}")


def print_result(result: RunResult):
    print(f"{Fore.GREEN}{result.command.value} completed{Style.RESET_ALL}")
    for key, value in result.results.items():
        print(f"  {key}: {value}")
    for key, path in result.outputs.items():
        print(f"  -> {key}: {path}")
    if result.manifest_path:
        print(f"  -> manifest: {result.manifest_path}")


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    load_dotenv()
    setup_logging()
    parser = build_parser()
    ns = parser.parse_args(argv)

    try:
        if ns.command == "rerun":
            result = rerun(ns.manifest, ns.out, callbacks=[log_event])
        else:
            command = Command(ns.command)
            orchestrator = RunOrchestrator(resolve_config(ns))
            orchestrator.add_event_callback(log_event)
            result = orchestrator.run(command, **command_args(command, ns))
    except Exception as e:
        code = exit_code_for(e)
        if code == EXIT_INTERNAL and not isinstance(e, PointCloudError):
            logger.exception("Unexpected failure")
        print(f"{Fore.RED}error ({type(e).__name__}): {e}{Style.RESET_ALL}", file=sys.stderr)
        return code

    print_result(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
