"""Cloud, label and weak-label file ingestion."""

import logging
import math
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from plyfile import PlyData, PlyElement, PlyParseError

from cloud.errors import CloudDataError, CloudParseError
from cloud.model import LabelAssignment, PointCloud, WeakLabelSet


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_ASCII_WIDTHS = (3, 4, 6, 7)


def load_cloud(path: PathLike) -> PointCloud:
    """
    Load a cloud from an ASCII-xyz or PLY file.

    ASCII rows are "x y z [r g b] [label]"; colors written as integers are
    read on the 0-255 scale, otherwise in [0, 1]. PLY files may be ASCII or
    binary little-endian with vertex properties x/y/z/red/green/blue/label.

    Args:
        path: File to read; the ".ply" suffix selects the PLY reader

    Returns:
        Loaded PointCloud

    Raises:
        FileNotFoundError: If the file does not exist
        CloudParseError: For malformed lines or headers
        CloudDataError: For NaN or infinite coordinates
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"cloud file not found: {path}")
    if path.suffix.lower() == ".ply":
        cloud = _load_ply(path)
    else:
        cloud = _load_ascii(path)
    logger.info(f"Loaded {cloud.size} points from {path}")
    return cloud


def _load_ascii(path: Path) -> PointCloud:
    rows: List[List[float]] = []
    integral_colors = True
    width: Optional[int] = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) not in _ASCII_WIDTHS:
                raise CloudParseError(f"expected 3, 4, 6 or 7 columns, got {len(tokens)}", line=lineno)
            if width is None:
                width = len(tokens)
            elif len(tokens) != width:
                raise CloudParseError(f"column count changed from {width} to {len(tokens)}", line=lineno)
            try:
                values = [float(t) for t in tokens]
            except ValueError:
                raise CloudParseError(f"non-numeric value in '{line}'", line=lineno)
            if not all(math.isfinite(v) for v in values):
                raise CloudDataError(f"line {lineno}: non-finite value")
            if width >= 6:
                integral_colors &= all(_is_integer_literal(t) for t in tokens[3:6])
            if width in (4, 7) and not values[-1].is_integer():
                raise CloudParseError(f"label must be an integer, got {tokens[-1]}", line=lineno)
            rows.append(values)

    data = np.asarray(rows, dtype=np.float64).reshape(-1, width or 3)
    colors = None
    labels = None
    if width is not None and width >= 6:
        colors = data[:, 3:6] / 255.0 if integral_colors else data[:, 3:6]
        if colors.size and (colors.min() < 0 or colors.max() > 1):
            raise CloudDataError(f"{path}: colors outside the 0-255 / [0, 1] range")
    if width in (4, 7):
        labels = data[:, -1].astype(np.int64)
    return PointCloud(positions=data[:, :3], colors=colors, gt_labels=labels)


def _is_integer_literal(token: str) -> bool:
    return token.lstrip("+-").isdigit()


def _load_ply(path: Path) -> PointCloud:
    try:
        ply = PlyData.read(str(path))
    except PlyParseError as e:
        raise CloudParseError(f"{path}: {e}", line=getattr(e, "line", None))
    except (ValueError, EOFError) as e:
        raise CloudParseError(f"{path}: {e}")
    if not ply.text and ply.byte_order == ">":
        raise CloudParseError(f"{path}: binary big-endian PLY is not supported")
    try:
        vertex = ply["vertex"]
    except KeyError:
        raise CloudParseError(f"{path}: no vertex element")
    names = vertex.data.dtype.names or ()
    if not {"x", "y", "z"}.issubset(names):
        raise CloudParseError(f"{path}: vertex element lacks x/y/z properties")

    positions = np.column_stack([np.asarray(vertex[a], dtype=np.float64) for a in ("x", "y", "z")])
    if not np.all(np.isfinite(positions)):
        bad = int(np.argwhere(~np.isfinite(positions))[0][0])
        raise CloudDataError(f"{path}: non-finite coordinate at vertex {bad}")
    colors = None
    if {"red", "green", "blue"}.issubset(names):
        raw = np.column_stack([vertex[c] for c in ("red", "green", "blue")])
        colors = raw.astype(np.float64) / 255.0 if np.issubdtype(raw.dtype, np.integer) else raw.astype(np.float64)
    labels = None
    for prop in ("label", "class"):
        if prop in names:
            labels = np.asarray(vertex[prop], dtype=np.int64)
            break
    instances = np.asarray(vertex["instance"], dtype=np.int64) if "instance" in names else None
    return PointCloud(positions=positions, colors=colors, gt_labels=labels, gt_instances=instances)


def save_cloud(cloud: PointCloud, path: PathLike) -> None:
    """Write a cloud as ASCII-xyz, or as binary little-endian PLY for ".ply"."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".ply":
        _save_ply(cloud, path)
    else:
        _save_ascii(cloud, path)
    logger.info(f"Wrote {cloud.size} points to {path}")


def _save_ascii(cloud: PointCloud, path: Path) -> None:
    colors = cloud.colors
    with open(path, "w", encoding="utf-8") as fh:
        for i, (x, y, z) in enumerate(cloud.positions):
            fields = [f"{x:.6f}", f"{y:.6f}", f"{z:.6f}"]
            if colors is not None:
                fields.extend(f"{c:.6f}" for c in colors[i])
            if cloud.gt_labels is not None:
                fields.append(str(int(cloud.gt_labels[i])))
            fh.write(" ".join(fields) + "\n")


def _save_ply(cloud: PointCloud, path: Path) -> None:
    dtype = [("x", "f8"), ("y", "f8"), ("z", "f8")]
    # 8-bit channels only when that is lossless
    byte_colors = cloud.colors is not None and np.allclose(
        cloud.colors * 255.0, np.rint(cloud.colors * 255.0), rtol=0.0, atol=1e-6)
    if cloud.colors is not None:
        channel = "u1" if byte_colors else "f4"
        dtype += [("red", channel), ("green", channel), ("blue", channel)]
    if cloud.gt_labels is not None:
        dtype.append(("label", "i4"))
    if cloud.gt_instances is not None:
        dtype.append(("instance", "i4"))
    vertices = np.empty(cloud.size, dtype=dtype)
    for axis, name in enumerate(("x", "y", "z")):
        vertices[name] = cloud.positions[:, axis]
    if cloud.colors is not None:
        rgb = np.rint(cloud.colors * 255.0).astype(np.uint8) if byte_colors else cloud.colors
        for axis, name in enumerate(("red", "green", "blue")):
            vertices[name] = rgb[:, axis]
    if cloud.gt_labels is not None:
        vertices["label"] = cloud.gt_labels
    if cloud.gt_instances is not None:
        vertices["instance"] = cloud.gt_instances
    PlyData([PlyElement.describe(vertices, "vertex")], text=False, byte_order="<").write(str(path))


def save_labels(assignment: LabelAssignment, path: PathLike) -> None:
    """Write "index region class confidence" rows, one per point."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(assignment)):
            fh.write(f"{i} {int(assignment.region_ids[i])} {int(assignment.classes[i])} "
                     f"{float(assignment.confidences[i]):.6g}\n")


def load_labels(path: PathLike) -> LabelAssignment:
    """Read a label file written by save_labels.

    Raises:
        FileNotFoundError: If the file does not exist
        CloudParseError: For malformed rows or non-contiguous indices
    """
    rows = _read_int_rows(path, widths=(4,), float_from=3)
    indices = np.asarray([r[0] for r in rows], dtype=np.int64)
    if not np.array_equal(np.sort(indices), np.arange(indices.size)):
        raise CloudParseError(f"{path}: label indices must cover 0..N-1 exactly once")
    order = np.argsort(indices)
    return LabelAssignment(
        region_ids=np.asarray([rows[i][1] for i in order], dtype=np.int64),
        classes=np.asarray([rows[i][2] for i in order], dtype=np.int64),
        confidences=np.asarray([rows[i][3] for i in order], dtype=np.float64),
    )


def save_weak_labels(weak: WeakLabelSet, path: PathLike) -> None:
    """Write "index class" rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for index, cls in zip(weak.indices, weak.classes):
            fh.write(f"{int(index)} {int(cls)}\n")


def load_weak_labels(path: PathLike, cloud: PointCloud) -> WeakLabelSet:
    """Read "index class" rows against the cloud they annotate."""
    rows = _read_int_rows(path, widths=(2,), float_from=2)
    indices = np.asarray([r[0] for r in rows], dtype=np.int64)
    classes = np.asarray([r[1] for r in rows], dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= cloud.size):
        raise CloudDataError(f"{path}: weak label index outside 0..{cloud.size - 1}")
    if cloud.gt_labels is not None:
        num_classes = max(cloud.num_classes(), int(classes.max(initial=-1)) + 1)
        frequency = cloud.class_frequency()
    else:
        num_classes = int(classes.max(initial=-1)) + 1
        frequency = {}
    return WeakLabelSet(indices=indices, classes=classes, num_classes=num_classes,
                        class_frequency=frequency)


def _read_int_rows(path: PathLike, widths, float_from: int) -> List[list]:
    """Rows of integer columns; columns at or after float_from parse as floats."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"label file not found: {path}")
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) not in widths:
                raise CloudParseError(f"expected {widths[0]} columns, got {len(tokens)}", line=lineno)
            try:
                row = [int(t) for t in tokens[:float_from]] + [float(t) for t in tokens[float_from:]]
            except ValueError:
                raise CloudParseError(f"malformed row '{line}'", line=lineno)
            rows.append(row)
    return rows


def save_partition(region_ids: np.ndarray, path: PathLike) -> None:
    """Write "index region_id" rows, one per point."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for i, rid in enumerate(np.asarray(region_ids, dtype=np.int64)):
            fh.write(f"{i} {int(rid)}\n")


def load_region_ids(path: PathLike) -> np.ndarray:
    """Per-point region ids from a partition file or a label file.

    Raises:
        FileNotFoundError: If the file does not exist
        CloudParseError: For malformed rows or non-contiguous indices
    """
    rows = _read_int_rows(path, widths=(2, 4), float_from=3)
    indices = np.asarray([r[0] for r in rows], dtype=np.int64)
    if not np.array_equal(np.sort(indices), np.arange(indices.size)):
        raise CloudParseError(f"{path}: indices must cover 0..N-1 exactly once")
    region_ids = np.asarray([r[1] for r in rows], dtype=np.int64)
    return region_ids[np.argsort(indices)]
