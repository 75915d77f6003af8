"""Rigid transforms and downsampling with index maps back to the original points."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from cloud.errors import ConfigError, ShapeMismatchError
from cloud.model import PointCloud, WeakLabelSet
from cloud.sampling import round_half_up
from evaluation.losses import DEFAULT_SAMPLE_COUNT, augmentation_loss, mse_augmentation_loss


logger = logging.getLogger(__name__)

AXES = {"x": 0, "y": 1, "z": 2}


class TransformKind(str, Enum):
    ROTATE_Z = "rotz"
    ROTATE = "rot"
    FLIP = "flip"
    DOWNSAMPLE = "down"


@dataclass(frozen=True, eq=False)
class Transform:
    """One geometric transform; only the fields of its kind are used."""
    kind: TransformKind
    angle: float = 0.0
    axis: str = "x"
    keep_fraction: float = 1.0
    seed: int = 0
    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == TransformKind.ROTATE_Z and not 0.0 <= self.angle <= 180.0:
            raise ConfigError(f"rotation angle must lie in [0, 180] degrees, got {self.angle}")
        if self.kind == TransformKind.FLIP and self.axis not in AXES:
            raise ConfigError(f"flip axis must be one of x, y, z, got '{self.axis}'")
        if self.kind == TransformKind.DOWNSAMPLE and not 0.0 < self.keep_fraction <= 1.0:
            raise ConfigError(f"keep fraction must lie in (0, 1], got {self.keep_fraction}")
        if self.kind == TransformKind.ROTATE:
            matrix = np.asarray(self.matrix, dtype=np.float64)
            if matrix.shape != (3, 3):
                raise ShapeMismatchError(f"rotation matrix must be 3x3, got {matrix.shape}")
            object.__setattr__(self, "matrix", matrix)

    @classmethod
    def rotate_z(cls, angle: float) -> "Transform":
        return cls(TransformKind.ROTATE_Z, angle=float(angle))

    @classmethod
    def rotate(cls, matrix: np.ndarray) -> "Transform":
        return cls(TransformKind.ROTATE, matrix=matrix)

    @classmethod
    def flip(cls, axis: str) -> "Transform":
        return cls(TransformKind.FLIP, axis=axis)

    @classmethod
    def downsample(cls, keep_fraction: float, seed: int = 0) -> "Transform":
        return cls(TransformKind.DOWNSAMPLE, keep_fraction=float(keep_fraction), seed=int(seed))

    def rotation_matrix(self) -> Optional[np.ndarray]:
        """3x3 rotation for rigid kinds; None for downsampling."""
        if self.kind == TransformKind.ROTATE_Z:
            return Rotation.from_euler("z", self.angle, degrees=True).as_matrix()
        if self.kind == TransformKind.ROTATE:
            return self.matrix
        if self.kind == TransformKind.FLIP:
            reflection = np.eye(3)
            reflection[AXES[self.axis], AXES[self.axis]] = -1.0
            return reflection
        return None

    def describe(self) -> str:
        if self.kind == TransformKind.ROTATE_Z:
            return f"rotz:{self.angle:g}"
        if self.kind == TransformKind.FLIP:
            return f"flip:{self.axis}"
        if self.kind == TransformKind.DOWNSAMPLE:
            return f"down:{self.keep_fraction:g}:{self.seed}"
        return "rot:matrix"


def random_rotation(seed: int) -> np.ndarray:
    """Uniformly distributed SO(3) rotation matrix."""
    return Rotation.random(None, seed).as_matrix()


def parse_transform(text: str) -> Transform:
    """
    Parse "rotz:ANGLE", "flip:AXIS", "down:FRACTION[:SEED]" or "rot:SEED" (random SO(3)).

    Raises:
        ConfigError: For malformed strings or out-of-range parameters
    """
    parts = text.strip().split(":")
    kind = parts[0].lower()
    try:
        if kind == TransformKind.ROTATE_Z.value and len(parts) == 2:
            return Transform.rotate_z(float(parts[1]))
        if kind == TransformKind.FLIP.value and len(parts) == 2:
            return Transform.flip(parts[1].lower())
        if kind == TransformKind.DOWNSAMPLE.value and len(parts) in (2, 3):
            return Transform.downsample(float(parts[1]), int(parts[2]) if len(parts) == 3 else 0)
        if kind == TransformKind.ROTATE.value and len(parts) == 2:
            return Transform.rotate(random_rotation(int(parts[1])))
    except ValueError as e:
        raise ConfigError(f"bad transform '{text}': {e}") from e
    raise ConfigError(f"bad transform '{text}'; expected rotz:ANGLE, flip:AXIS, down:FRACTION[:SEED] or rot:SEED")


def apply(cloud: PointCloud, transform: Transform) -> Tuple[PointCloud, np.ndarray]:
    """
    Apply a transform.

    Returns:
        (transformed cloud, index map) where point i of the result is point
        index_map[i] of the input
    """
    rotation = transform.rotation_matrix()
    if rotation is not None:
        positions = cloud.positions @ rotation.T
        normals = None if cloud.normals is None else cloud.normals @ rotation.T
        out = cloud.with_channels(positions=positions, normals=normals)
        return out, np.arange(cloud.size, dtype=np.int64)

    keep = min(cloud.size, max(1, round_half_up(transform.keep_fraction * cloud.size))) if cloud.size else 0
    rng = np.random.default_rng(transform.seed)
    index_map = np.sort(rng.choice(cloud.size, size=keep, replace=False)).astype(np.int64)
    logger.debug(f"Downsampled {cloud.size} points to {keep}")
    return cloud.subset(index_map), index_map


def apply_all(cloud: PointCloud, specs: Sequence[str]) -> Tuple[PointCloud, np.ndarray]:
    """
    Apply transform strings in order.

    Returns:
        (transformed cloud, index map into the input) with the per-step maps composed
    """
    index_map = np.arange(cloud.size, dtype=np.int64)
    for text in specs:
        cloud, step = apply(cloud, parse_transform(text))
        index_map = index_map[step]
        logger.info(f"Applied transform {text}: {cloud.size} points")
    return cloud, index_map


def restrict_weak_labels(weak: WeakLabelSet, index_map: np.ndarray, source_size: int) -> WeakLabelSet:
    """Re-index weak labels of a source cloud onto its transformed points; dropped points lose their label."""
    position = np.full(source_size, -1, dtype=np.int64)
    position[index_map] = np.arange(index_map.size, dtype=np.int64)
    moved = position[weak.indices]
    kept = moved >= 0
    if not kept.all():
        logger.warning(f"{int((~kept).sum())} weak labels fall on points removed by the transforms")
    return WeakLabelSet(indices=moved[kept], classes=weak.classes[kept], num_classes=weak.num_classes,
                        class_frequency=dict(weak.class_frequency))


def consistency_loss(pred_original, pred_transformed, index_map, sample_count: int = DEFAULT_SAMPLE_COUNT,
                     rng_seed: int = 0, kind: str = "js") -> float:
    """
    Augmentation consistency between per-point predictions of a cloud and its transform.

    Rows of ``pred_transformed`` are matched to ``pred_original[index_map]``
    and scored with the JS ("js") or mean-squared ("mse") augmentation loss.
    """
    pred_original = np.asarray(pred_original, dtype=np.float64)
    index_map = np.asarray(index_map, dtype=np.int64)
    common = pred_original[index_map]
    if kind == "js":
        return augmentation_loss(common, pred_transformed, sample_count, rng_seed)
    if kind == "mse":
        return mse_augmentation_loss(common, pred_transformed, sample_count, rng_seed)
    raise ValueError(f"unknown consistency loss '{kind}'")
