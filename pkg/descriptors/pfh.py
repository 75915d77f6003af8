"""Point feature histograms over all pairs of a radius neighbourhood."""

import abc
import math
from functools import lru_cache
from typing import Iterator, Optional, Tuple

import numpy as np

from cloud.model import PointCloud
from descriptors.base import (
    BaseDescriptorExtractor, Descriptor, DescriptorContext, DescriptorKind, PairCounter,
    descriptor_registry,
)
from descriptors.pairs import pair_features_batch
from geometry.frames import LocalFrames
from spatial.octree import Octree


PFH_BINS = 5
PAIR_BUDGET = 1 << 18


def bin_index(values: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    """Half-open equal-width bins over [lo, hi]; hi itself falls in the last bin."""
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


@lru_cache(maxsize=1024)
def _pair_template(size: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(size, k=1)


def neighborhood_pairs(context: DescriptorContext, query_index: int):
    """Query point first, then its neighbours by index; all unordered pairs."""
    ball = context.ball(query_index)
    members = np.concatenate([[query_index], ball[ball != query_index]]).astype(np.int64)
    src, tgt = _pair_template(members.size)
    return members, members[src], members[tgt]


def pair_blocks(context: DescriptorContext, indices: np.ndarray,
                budget: int = PAIR_BUDGET) -> Iterator[Tuple[int, int, np.ndarray, np.ndarray, np.ndarray]]:
    """
    Neighbourhood pairs of consecutive runs of indices.

    Yields (start, stop, src, tgt, owner) with about ``budget`` pairs each;
    ``owner`` holds the row of each pair's query point relative to start.
    """
    srcs, tgts, owners = [], [], []
    start = pairs = 0
    for row, i in enumerate(indices):
        _, src, tgt = neighborhood_pairs(context, int(i))
        srcs.append(src)
        tgts.append(tgt)
        owners.append(np.full(src.size, row - start, dtype=np.int64))
        pairs += src.size
        if pairs >= budget:
            yield start, row + 1, np.concatenate(srcs), np.concatenate(tgts), np.concatenate(owners)
            srcs, tgts, owners = [], [], []
            start, pairs = row + 1, 0
    if start < len(indices):
        yield start, len(indices), np.concatenate(srcs), np.concatenate(tgts), np.concatenate(owners)


class PairHistogramExtractor(BaseDescriptorExtractor):
    """Histogram of binned pair features over every pair of a neighbourhood."""

    @abc.abstractmethod
    def pair_bins(self, context: DescriptorContext, src: np.ndarray,
                  tgt: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Flat bin of every valid pair, and the valid mask over all pairs."""
        pass

    def compute_block(self, context: DescriptorContext, indices: np.ndarray,
                      counter: Optional[PairCounter] = None) -> Tuple[np.ndarray, np.ndarray]:
        values = np.zeros((len(indices), self.dim))
        isolated = np.ones(len(indices), dtype=bool)
        for start, stop, src, tgt, owner in pair_blocks(context, indices):
            if counter is not None:
                counter.add(src.size)
            flat, valid = self.pair_bins(context, src, tgt)
            rows = stop - start
            hist = np.bincount(owner[valid] * self.dim + flat, minlength=rows * self.dim)
            hist = hist.reshape(rows, self.dim).astype(np.float64)
            totals = hist.sum(axis=1)
            filled = totals > 0
            hist[filled] /= totals[filled, None]
            values[start:stop] = hist
            isolated[start:stop] = ~filled
        return values, isolated

    def compute(self, context: DescriptorContext, query_index: int,
                counter: Optional[PairCounter] = None) -> Descriptor:
        values, isolated = self.compute_block(context, np.array([query_index], dtype=np.int64), counter)
        return Descriptor(values=values[0], kind=self.kind, isolated=bool(isolated[0]))


class AdaptedPFHExtractor(PairHistogramExtractor):
    """5x5x5 joint histogram of (alpha, phi, theta); the distance is left out."""

    @property
    def name(self) -> str:
        return DescriptorKind.ADAPTED_PFH.value

    @property
    def kind(self) -> DescriptorKind:
        return DescriptorKind.ADAPTED_PFH

    @property
    def dim(self) -> int:
        return PFH_BINS ** 3

    def pair_bins(self, context: DescriptorContext, src: np.ndarray,
                  tgt: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        positions, normals = context.cloud.positions, context.frames.normals
        alpha, phi, theta, _, valid = pair_features_batch(positions[src], normals[src],
                                                          positions[tgt], normals[tgt])
        flat = (bin_index(alpha[valid], -1.0, 1.0, PFH_BINS) * PFH_BINS
                + bin_index(phi[valid], -1.0, 1.0, PFH_BINS)) * PFH_BINS \
            + bin_index(theta[valid], -math.pi, math.pi, PFH_BINS)
        return flat, valid


class OriginalPFHExtractor(PairHistogramExtractor):
    """5^4 joint histogram of (alpha, phi, theta, d) with d binned over [0, distance_range].

    Args:
        distance_range: Upper edge of the distance bins; None means 2r
    """

    def __init__(self, distance_range: Optional[float] = None):
        self.distance_range = distance_range
        super().__init__()

    @property
    def name(self) -> str:
        return DescriptorKind.ORIGINAL_PFH.value

    @property
    def kind(self) -> DescriptorKind:
        return DescriptorKind.ORIGINAL_PFH

    @property
    def dim(self) -> int:
        return PFH_BINS ** 4

    def pair_bins(self, context: DescriptorContext, src: np.ndarray,
                  tgt: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        positions, normals = context.cloud.positions, context.frames.normals
        alpha, phi, theta, distance, valid = pair_features_batch(positions[src], normals[src],
                                                                 positions[tgt], normals[tgt])
        d_max = self.distance_range if self.distance_range is not None else 2.0 * context.radius
        flat = ((bin_index(alpha[valid], -1.0, 1.0, PFH_BINS) * PFH_BINS
                 + bin_index(phi[valid], -1.0, 1.0, PFH_BINS)) * PFH_BINS
                + bin_index(theta[valid], -math.pi, math.pi, PFH_BINS)) * PFH_BINS \
            + bin_index(distance[valid], 0.0, d_max, PFH_BINS)
        return flat, valid


def adapted_pfh(cloud: PointCloud, frames: LocalFrames, tree: Octree, query_index: int, r: float,
                counter: Optional[PairCounter] = None) -> Descriptor:
    """Adapted PFH of one point."""
    return AdaptedPFHExtractor().compute(DescriptorContext(cloud, frames, tree, r), query_index, counter)


def original_pfh(cloud: PointCloud, frames: LocalFrames, tree: Octree, query_index: int, r: float,
                 counter: Optional[PairCounter] = None,
                 distance_range: Optional[float] = None) -> Descriptor:
    """Original four-feature PFH of one point."""
    extractor = OriginalPFHExtractor(distance_range=distance_range)
    return extractor.compute(DescriptorContext(cloud, frames, tree, r), query_index, counter)


descriptor_registry.register(AdaptedPFHExtractor)
descriptor_registry.register(OriginalPFHExtractor)
