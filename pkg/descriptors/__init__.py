"""Local shape descriptors: PFH variants, FPFH and external embeddings."""

from typing import Optional

from cloud.model import PointCloud
from descriptors.base import (
    Descriptor, DescriptorContext, DescriptorKind, DescriptorSet, PairCounter, descriptor_registry,
)
from descriptors import fpfh as _fpfh, pfh as _pfh  # noqa: F401  (registration)
from geometry.frames import LocalFrames
from spatial.neighbors import NeighborTable
from spatial.octree import Octree


def compute_descriptors(kind: str, cloud: PointCloud, frames: LocalFrames, tree: Octree, r: float,
                        neighbors: Optional[NeighborTable] = None, threads: int = 1,
                        counter: Optional[PairCounter] = None, **kwargs) -> DescriptorSet:
    """Descriptors of every point with the named registered extractor.

    Raises:
        ValueError: If no extractor is registered under kind
    """
    extractor = descriptor_registry.get_extractor(kind, **kwargs)
    if extractor is None:
        raise ValueError(f"unknown descriptor kind '{kind}'; "
                         f"expected one of {', '.join(descriptor_registry.list_extractors())}")
    context = DescriptorContext(cloud=cloud, frames=frames, tree=tree, radius=r, neighbors=neighbors)
    return extractor.compute_all(context, threads=threads, counter=counter)
