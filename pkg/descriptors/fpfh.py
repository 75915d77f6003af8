"""Fast point feature histograms.

Pass one builds a simplified histogram (SPFH) from the query-to-neighbour
pairs of every point; pass two adds the neighbours' SPFHs weighted by
1/distance and averaged over the neighbour count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from cloud.model import PointCloud
from descriptors.base import (
    BaseDescriptorExtractor, Descriptor, DescriptorContext, DescriptorKind, DescriptorSet,
    PairCounter, descriptor_registry, normalize_histogram,
)
from descriptors.pairs import pair_features_batch
from descriptors.pfh import bin_index
from geometry.frames import LocalFrames
from spatial.neighbors import chunk_ranges
from spatial.octree import Octree, squared_distances


FPFH_BINS = 11


def _spfh(context: DescriptorContext, i: int, counter: Optional[PairCounter]) -> np.ndarray:
    ball = context.ball(i)
    others = ball[ball != i]
    if counter is not None:
        counter.add(others.size)
    hist = np.zeros(3 * FPFH_BINS)
    if others.size == 0:
        return hist
    positions, normals = context.cloud.positions, context.frames.normals
    src = np.full(others.size, i, dtype=np.int64)
    alpha, phi, theta, _, valid = pair_features_batch(positions[src], normals[src],
                                                      positions[others], normals[others])
    if not valid.any():
        return hist
    for offset, (values, lo, hi) in enumerate(((alpha, -1.0, 1.0), (phi, -1.0, 1.0),
                                               (theta, -math.pi, math.pi))):
        sub = np.bincount(bin_index(values[valid], lo, hi, FPFH_BINS), minlength=FPFH_BINS)
        hist[offset * FPFH_BINS:(offset + 1) * FPFH_BINS] = sub / valid.sum()
    return hist


def _combine(context: DescriptorContext, i: int, spfh: np.ndarray) -> np.ndarray:
    ball = context.ball(i)
    others = ball[ball != i]
    total = spfh[i].copy()
    if others.size:
        d = np.sqrt(squared_distances(context.cloud.positions[others], context.cloud.positions[i]))
        keep = d > 0
        if keep.any():
            weights = 1.0 / d[keep]
            total += (weights[:, None] * spfh[others[keep]]).sum(axis=0) / others.size
    return normalize_histogram(total)


class FPFHExtractor(BaseDescriptorExtractor):
    """Three concatenated 11-bin histograms of alpha, phi and theta."""

    @property
    def name(self) -> str:
        return DescriptorKind.FPFH.value

    @property
    def kind(self) -> DescriptorKind:
        return DescriptorKind.FPFH

    @property
    def dim(self) -> int:
        return 3 * FPFH_BINS

    def compute(self, context: DescriptorContext, query_index: int,
                counter: Optional[PairCounter] = None) -> Descriptor:
        ball = context.ball(query_index)
        spfh = {int(j): _spfh(context, int(j), counter) for j in ball}
        others = ball[ball != query_index]
        total = spfh[query_index].copy()
        if others.size:
            d = np.sqrt(squared_distances(context.cloud.positions[others],
                                          context.cloud.positions[query_index]))
            for j, dist in zip(others, d):
                if dist > 0:
                    total += spfh[int(j)] / dist / others.size
        values = normalize_histogram(total)
        return Descriptor(values=values, kind=self.kind, isolated=not values.any())

    def compute_all(self, context: DescriptorContext, threads: int = 1,
                    counter: Optional[PairCounter] = None) -> DescriptorSet:
        """Both passes over the whole cloud; every SPFH is computed once."""
        context.ensure_neighbors(threads)
        n = context.cloud.size
        spfh = np.zeros((n, self.dim))
        values = np.zeros((n, self.dim))
        ranges = chunk_ranges(n, threads)
        counters = [PairCounter() for _ in ranges]

        def first_pass(chunk: int) -> None:
            start, stop = ranges[chunk]
            for i in range(start, stop):
                spfh[i] = _spfh(context, i, counters[chunk])

        def second_pass(chunk: int) -> None:
            start, stop = ranges[chunk]
            for i in range(start, stop):
                values[i] = _combine(context, i, spfh)

        for stage in (first_pass, second_pass):
            if threads <= 1 or len(ranges) <= 1:
                for chunk in range(len(ranges)):
                    stage(chunk)
            else:
                with ThreadPoolExecutor(max_workers=threads) as executor:
                    for future in [executor.submit(stage, c) for c in range(len(ranges))]:
                        future.result()
        if counter is not None:
            counter.add(sum(c.pairs for c in counters))
        isolated = ~values.any(axis=1)
        if isolated.any():
            self.logger.warning(f"{int(isolated.sum())} isolated points have zero descriptors")
        self.logger.info(f"Computed {n} fpfh descriptors")
        return DescriptorSet(kind=self.kind, values=values, isolated=isolated)


def fpfh(cloud: PointCloud, frames: LocalFrames, tree: Octree, query_index: int, r: float,
         counter: Optional[PairCounter] = None) -> Descriptor:
    """FPFH of one point."""
    return FPFHExtractor().compute(DescriptorContext(cloud, frames, tree, r), query_index, counter)


descriptor_registry.register(FPFHExtractor)
