"""Run manifests, progress phases and CSV report rows."""

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from dotenv import dotenv_values

from cloud.errors import CloudParseError


class RunStatus(str, Enum):
    """Run execution status."""
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


class RunPhase(str, Enum):
    """Run execution phases."""
    LOAD = "load"
    TRANSFORM = "transform"
    INDEX = "index"
    FRAMES = "frames"
    DESCRIPTORS = "descriptors"
    GROW = "grow"
    MERGE = "merge"
    EVALUATE = "evaluate"
    BENCHMARK = "benchmark"
    WRITE = "write"


class Command(str, Enum):
    OVERSEGMENT = "oversegment"
    PROPAGATE = "propagate"
    EVAL = "eval"
    DESCRIPTOR = "descriptor"
    BENCH_KNN = "bench-knn"
    SYNTH = "synth"


TRACE_HEADER = ["iter", "labeled_fraction", "pseudo_precision", "pseudo_recall"]


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ";".join(str(v) for v in value)
    return str(value)


@dataclass
class RunManifest:
    """
    Everything needed to repeat a run: command, arguments, resolved config,
    input checksums, outputs and library versions.

    Serialised as "key = value" lines; ``wall_time_s`` and ``started_at`` are
    the only fields that differ between reruns.
    """
    command: Command
    args: Dict[str, Any]
    config: Dict[str, Any]
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    results: Dict[str, Any] = field(default_factory=dict)
    versions: Dict[str, str] = field(default_factory=dict)
    run_id: str = ""
    started_at: str = field(default_factory=lambda: datetime.now().isoformat())
    wall_time_s: float = 0.0
    status: RunStatus = RunStatus.COMPLETED

    def to_lines(self) -> List[str]:
        lines = [
            "# run manifest",
            f"command = {self.command.value}",
            f"run_id = {self.run_id}",
            f"status = {self.status.value}",
            f"started_at = {self.started_at}",
            f"wall_time_s = {self.wall_time_s:.3f}",
        ]
        sections = (("arg", self.args), ("config", self.config), ("sha256", self.inputs),
                    ("output", self.outputs), ("result", self.results), ("version", self.versions))
        for prefix, values in sections:
            lines.extend(f"{prefix}.{key} = {_format(value)}" for key, value in values.items())
        return lines

    def write(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path: Union[str, Path]) -> "RunManifest":
        """
        Parse a manifest written by ``write``.

        Raises:
            FileNotFoundError: If the file does not exist
            CloudParseError: If the command line is missing or unknown
        """
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"manifest not found: {path}")
        raw = {k: ("" if v is None else v) for k, v in dotenv_values(path, interpolate=False).items()}
        try:
            command = Command(raw.get("command", ""))
        except ValueError:
            raise CloudParseError(f"{path}: missing or unknown command '{raw.get('command')}'")

        def section(prefix: str) -> Dict[str, str]:
            head = prefix + "."
            return {k[len(head):]: v for k, v in raw.items() if k.startswith(head)}

        return cls(
            command=command,
            args={k: (v if v != "" else None) for k, v in section("arg").items()},
            config=section("config"),
            inputs=section("sha256"),
            outputs=section("output"),
            results=section("result"),
            versions=section("version"),
            run_id=raw.get("run_id", ""),
            started_at=raw.get("started_at", ""),
            wall_time_s=float(raw.get("wall_time_s") or 0.0),
            status=RunStatus(raw.get("status") or RunStatus.COMPLETED.value),
        )


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """RFC-4180 CSV with a mandatory header row and "\\n" line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format(v) for v in row])
    path.write_text(buffer.getvalue(), encoding="utf-8")


def read_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@dataclass
class RunResult:
    """What a command produced, for the CLI summary."""
    command: Command
    outputs: Dict[str, str]
    results: Dict[str, Any]
    manifest_path: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command.value,
            "outputs": self.outputs,
            "results": self.results,
            "manifest": self.manifest_path,
        }
