"""Descriptor containers and the extractor interface."""

import abc
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple, Type

import numpy as np

from cloud.model import PointCloud
from geometry.frames import LocalFrames
from spatial.neighbors import NeighborTable, build_neighbor_table, chunk_ranges
from spatial.octree import Octree


BLOCK_POINTS = 1024


class DescriptorKind(str, Enum):
    """Descriptor families."""
    ADAPTED_PFH = "adapted-pfh"
    ORIGINAL_PFH = "original-pfh"
    FPFH = "fpfh"
    EXTERNAL = "external"


@dataclass(frozen=True, eq=False)
class Descriptor:
    """Fixed-length descriptor of one point or region.

    Histogram kinds are normalised to sum 1; an all-zero vector with
    ``isolated`` set marks a point without neighbours.
    """
    values: np.ndarray
    kind: DescriptorKind
    isolated: bool = False

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    """Descriptors of every point of a cloud, one row each."""
    kind: DescriptorKind
    values: np.ndarray
    isolated: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def __getitem__(self, i: int) -> Descriptor:
        return Descriptor(values=self.values[i].copy(), kind=self.kind, isolated=bool(self.isolated[i]))

    def subset(self, indices: np.ndarray) -> "DescriptorSet":
        """Rows of the given points, in the given order."""
        return DescriptorSet(kind=self.kind, values=self.values[indices], isolated=self.isolated[indices])


@dataclass
class PairCounter:
    """Counts pair-feature evaluations; one counter per worker."""
    pairs: int = 0

    def add(self, n: int) -> None:
        self.pairs += int(n)


@dataclass
class DescriptorContext:
    """Everything an extractor reads: cloud, frames, index and neighbourhoods."""
    cloud: PointCloud
    frames: LocalFrames
    tree: Octree
    radius: float
    neighbors: Optional[NeighborTable] = None

    def ball(self, i: int) -> np.ndarray:
        """Ascending indices within the radius of point i, i included."""
        if self.neighbors is not None:
            return self.neighbors.ball[i]
        return self.tree.radius_query(self.cloud.positions[i], self.radius)

    def ensure_neighbors(self, threads: int = 1) -> NeighborTable:
        if self.neighbors is None:
            self.neighbors = build_neighbor_table(self.tree, self.radius, threads=threads)
        return self.neighbors


def normalize_histogram(hist: np.ndarray) -> np.ndarray:
    total = hist.sum()
    return hist / total if total > 0 else hist


class BaseDescriptorExtractor(abc.ABC):
    """Abstract base class for per-point descriptor extractors."""

    def __init__(self):
        self.logger = logging.getLogger(f"descriptor.{self.name}")

    @property
    @abc.abstractmethod
    def name(self) -> str:
        """Extractor name (e.g., 'adapted-pfh')."""
        pass

    @property
    @abc.abstractmethod
    def kind(self) -> DescriptorKind:
        pass

    @property
    @abc.abstractmethod
    def dim(self) -> int:
        """Descriptor length."""
        pass

    @abc.abstractmethod
    def compute(self, context: DescriptorContext, query_index: int,
                counter: Optional[PairCounter] = None) -> Descriptor:
        """Descriptor of one point."""
        pass

    def compute_block(self, context: DescriptorContext, indices: np.ndarray,
                      counter: Optional[PairCounter] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Descriptor rows and isolated flags of several points; extractors may batch this."""
        values = np.zeros((len(indices), self.dim))
        isolated = np.zeros(len(indices), dtype=bool)
        for row, i in enumerate(indices):
            descriptor = self.compute(context, int(i), counter)
            values[row] = descriptor.values
            isolated[row] = descriptor.isolated
        return values, isolated

    def compute_all(self, context: DescriptorContext, threads: int = 1,
                    counter: Optional[PairCounter] = None) -> DescriptorSet:
        """Descriptors of every point, chunked over worker threads."""
        context.ensure_neighbors(threads)
        n = context.cloud.size
        values = np.zeros((n, self.dim))
        isolated = np.zeros(n, dtype=bool)
        ranges = chunk_ranges(n, threads)
        counters = [PairCounter() for _ in ranges]

        def work(chunk: int) -> None:
            start, stop = ranges[chunk]
            for a in range(start, stop, BLOCK_POINTS):
                b = min(a + BLOCK_POINTS, stop)
                values[a:b], isolated[a:b] = self.compute_block(context, np.arange(a, b), counters[chunk])

        if threads <= 1 or len(ranges) <= 1:
            for chunk in range(len(ranges)):
                work(chunk)
        else:
            with ThreadPoolExecutor(max_workers=threads) as executor:
                for future in [executor.submit(work, c) for c in range(len(ranges))]:
                    future.result()
        if counter is not None:
            counter.add(sum(c.pairs for c in counters))
        if isolated.any():
            self.logger.warning(f"{int(isolated.sum())} isolated points have zero descriptors")
        self.logger.info(f"Computed {n} {self.name} descriptors (dim {self.dim})")
        return DescriptorSet(kind=self.kind, values=values, isolated=isolated)


class DescriptorRegistry:
    """Registry for managing available descriptor extractors."""

    def __init__(self):
        self._extractors: Dict[str, Type[BaseDescriptorExtractor]] = {}

    def register(self, extractor_class: Type[BaseDescriptorExtractor]):
        """Register an extractor class."""
        temp_instance = extractor_class()
        name = temp_instance.name
        self._extractors[name] = extractor_class
        logging.debug(f"Registered descriptor extractor: {name}")

    def get_extractor(self, name: str, **kwargs) -> Optional[BaseDescriptorExtractor]:
        """Get extractor instance by name."""
        extractor_class = self._extractors.get(name)
        if extractor_class:
            return extractor_class(**kwargs)
        return None

    def list_extractors(self) -> List[str]:
        """List all registered extractor names."""
        return list(self._extractors.keys())


# Global registry instance
descriptor_registry = DescriptorRegistry()
