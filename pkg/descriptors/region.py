"""Region-level descriptors and descriptor similarity."""

import numpy as np

from cloud.errors import ShapeMismatchError
from descriptors.base import Descriptor, DescriptorKind, DescriptorSet, normalize_histogram


def region_descriptor(descriptors: DescriptorSet, members: np.ndarray) -> Descriptor:
    """Mean member descriptor; histogram kinds are renormalised to sum 1."""
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise ValueError("region_descriptor needs at least one member")
    mean = descriptors.values[members].mean(axis=0)
    if descriptors.kind != DescriptorKind.EXTERNAL:
        mean = normalize_histogram(mean)
    return Descriptor(values=mean, kind=descriptors.kind, isolated=not mean.any())


def descriptor_cosine(a: Descriptor, b: Descriptor) -> float:
    """
    Cosine similarity of two descriptors; 0 when either is all-zero.

    Raises:
        ShapeMismatchError: If kinds or dimensions differ
    """
    if a.kind != b.kind or a.dim != b.dim:
        raise ShapeMismatchError(f"cannot compare {a.kind.value}[{a.dim}] with {b.kind.value}[{b.dim}]")
    return vector_cosine(a.values, b.values)


def vector_cosine(x: np.ndarray, y: np.ndarray) -> float:
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(y))
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))
