"""Merge step, small-region filter and instance extraction."""

import logging
from collections import deque
from typing import Deque, Dict, List, Set

import numpy as np

from cloud.config import SceneConfig
from cloud.errors import InvariantViolation, ShapeMismatchError
from merging.similarity import SimilarityTerms, similarity_score
from merging.state import Instance, InstanceBox, MergeState, PredictionMatrix
from segmentation.regions import LabelState


logger = logging.getLogger(__name__)


def check_prediction(state: MergeState, pred: PredictionMatrix) -> None:
    """Raise ShapeMismatchError unless pred has one row per live region."""
    live = state.live_ids()
    if pred.values.shape[0] != len(live) or not np.array_equal(np.sort(pred.region_ids), live):
        raise ShapeMismatchError(f"prediction matrix has {pred.values.shape[0]} rows, "
                                 f"expected {len(live)} live regions")
    if pred.num_classes != state.num_classes:
        raise ShapeMismatchError(f"prediction matrix has {pred.num_classes} classes, "
                                 f"expected {state.num_classes}")


def _take(state: MergeState, seed_id: int, queue: Deque[int], k: int) -> List[int]:
    """Pop up to k queued candidates the seed may still label or absorb."""
    batch: List[int] = []
    while queue and len(batch) < k:
        cand_id = queue.popleft()
        if state.eligible(seed_id, cand_id):
            batch.append(cand_id)
    return batch


def merge_step(state: MergeState, pred: PredictionMatrix, config: SceneConfig) -> MergeState:
    """
    One region-merging stage of self-training.

    In every sweep each frozen labelled region (ascending id) scores the K
    nearest adjacent candidates it has not scored yet in this step. A
    candidate whose score reaches t_merge while both regions' top class
    probabilities reach gamma takes the seed's class as a pseudo label. At
    t_seed it is fused into the seed region instead, which stays frozen and
    keeps seeding. Sweeps repeat until no seed has candidates left.

    Args:
        state: Current merge state (left untouched)
        pred: Region predictions for ``state``'s live regions at iteration m
        config: Scene configuration

    Returns:
        The new merge state

    Raises:
        ShapeMismatchError: If ``pred`` does not match the live regions
    """
    check_prediction(state, pred)
    m = pred.iteration
    rows: Dict[int, np.ndarray] = {int(rid): pred.row(int(rid)).copy() for rid in pred.region_ids}
    terms = SimilarityTerms.from_config(config)
    frozen_before = {rid: state.regions[rid].label.class_id for rid in state.seed_ids()}

    new = state.copy()
    new.iteration = m
    labelled = fused = sweeps = 0
    # candidates each seed has already scored in this step
    scored: Dict[int, Set[int]] = {}
    # unscored candidates per seed, nearest first; rebuilt after the seed grows
    queues: Dict[int, Deque[int]] = {}
    stale: Set[int] = set(new.seed_ids())
    changed = True
    while changed:
        changed = False
        sweeps += 1
        for seed_id in new.seed_ids():
            seed = new.regions[seed_id]
            done = scored.setdefault(seed_id, set())
            if seed_id in stale:
                queues[seed_id] = deque(new.candidates(seed_id, skip=done))
                stale.discard(seed_id)
            for cand_id in _take(new, seed_id, queues[seed_id], config.knn):
                done.add(cand_id)
                changed = True
                cand = new.regions[cand_id]
                seed_conf = float(rows[seed_id].max())
                cand_conf = float(rows[cand_id].max())
                if seed_conf < config.gamma or cand_conf < config.gamma:
                    continue
                score = similarity_score(seed, cand, rows[seed_id], rows[cand_id], m,
                                         config.n_total, config.lambda_seg, terms)
                if score < config.t_merge:
                    continue
                if score >= config.t_seed:
                    weight_s, weight_c = seed.size, cand.size
                    rows[seed_id] = (weight_s * rows[seed_id] + weight_c * rows.pop(cand_id)) / (weight_s + weight_c)
                    seed = new.fuse(seed_id, cand_id)
                    stale.add(seed_id)
                    fused += 1
                elif not cand.label.is_labeled:
                    new.set_label(cand_id, LabelState.pseudo(seed.label.class_id, cand_conf))
                    labelled += 1

    for rid, class_id in frozen_before.items():
        region = new.regions.get(rid)
        if region is None or region.label.class_id != class_id:
            raise InvariantViolation(f"frozen region {rid} lost its class {class_id}")
    logger.info(f"Merge step m={m}: {fused} regions fused, {labelled} regions pseudo-labelled "
                f"in {sweeps} sweeps; {len(new.regions)} live regions")
    return new


def filter_small_regions(state: MergeState, n_ths: int) -> MergeState:
    """Exclude regions with fewer than n_ths points from merging and labelling."""
    if n_ths <= 0:
        return state
    new = state.copy()
    small = [rid for rid, r in new.regions.items() if r.size < n_ths]
    for rid in small:
        new.exclude(rid)
    if small:
        logger.warning(f"Excluded {len(small)} regions with fewer than {n_ths} points")
    return new


def _find(parent: Dict[int, int], x: int) -> int:
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


def extract_instances(state: MergeState) -> List[Instance]:
    """
    Group adjacent same-class labelled regions into instances.

    Returns one instance per maximal connected group, ordered by its lowest
    region id, each with a tight axis-aligned box of its members.
    """
    labelled = {rid: r for rid, r in state.regions.items() if r.label.is_labeled}
    parent = {rid: rid for rid in labelled}
    for rid, region in labelled.items():
        for other in state.adjacency.get(rid, ()):
            peer = labelled.get(other)
            if peer is not None and peer.label.class_id == region.label.class_id:
                a, b = _find(parent, rid), _find(parent, other)
                if a != b:
                    parent[max(a, b)] = min(a, b)

    groups: Dict[int, List[int]] = {}
    for rid in sorted(labelled):
        groups.setdefault(_find(parent, rid), []).append(rid)

    instances = []
    for root in sorted(groups):
        region_ids = groups[root]
        regions = [labelled[rid] for rid in region_ids]
        members = np.sort(np.concatenate([r.members for r in regions]))
        points = state.cloud.positions[members]
        sizes = np.array([r.size for r in regions], dtype=np.float64)
        score = float(np.dot(sizes, [r.label.confidence for r in regions]) / sizes.sum())
        class_id = regions[0].label.class_id
        box = InstanceBox(class_id=class_id, minimum=points.min(axis=0), maximum=points.max(axis=0),
                          count=int(members.size))
        instances.append(Instance(class_id=class_id, members=members, region_ids=region_ids,
                                  score=score, box=box))
    logger.info(f"Extracted {len(instances)} instances from {len(labelled)} labelled regions")
    return instances
