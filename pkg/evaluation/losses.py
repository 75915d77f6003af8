"""Losses of the weakly supervised training objectives.

All functions take numpy arrays, use the natural log and return Python floats.
"""

import logging
from typing import Optional

import numpy as np
from scipy.special import rel_entr

from cloud.errors import ShapeMismatchError


logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
DEFAULT_SAMPLE_COUNT = 1000


def _same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{what}: shapes {a.shape} and {b.shape} differ")


def js_divergence(p, q):
    """
    Jensen-Shannon divergence along the last axis, in [0, ln 2].

    1-D inputs give a float; (R, C) inputs give one value per row.

    Raises:
        ShapeMismatchError: If p and q differ in shape
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _same_shape(p, q, "js_divergence")
    m = 0.5 * (p + q)
    value = 0.5 * rel_entr(p, m).sum(axis=-1) + 0.5 * rel_entr(q, m).sum(axis=-1)
    value = np.clip(value, 0.0, np.log(2.0))
    return float(value) if value.ndim == 0 else value


def sample_common_rows(count: int, sample_count: int, rng_seed: int = 0) -> np.ndarray:
    """Indices of min(sample_count, count) rows drawn without replacement (all rows if fewer)."""
    if sample_count >= count:
        return np.arange(count)
    rng = np.random.default_rng(rng_seed)
    return np.sort(rng.choice(count, size=sample_count, replace=False))


def augmentation_loss(pred_a, pred_b, sample_count: int = DEFAULT_SAMPLE_COUNT, rng_seed: int = 0) -> float:
    """Mean JS divergence over sampled rows shared by two prediction matrices."""
    pred_a = np.asarray(pred_a, dtype=np.float64)
    pred_b = np.asarray(pred_b, dtype=np.float64)
    _same_shape(pred_a, pred_b, "augmentation_loss")
    if pred_a.shape[0] == 0:
        return 0.0
    rows = sample_common_rows(pred_a.shape[0], sample_count, rng_seed)
    return float(np.mean(js_divergence(pred_a[rows], pred_b[rows])))


def mse_augmentation_loss(pred_a, pred_b, sample_count: int = DEFAULT_SAMPLE_COUNT, rng_seed: int = 0) -> float:
    """Mean squared entry difference over the same row sampling as augmentation_loss."""
    pred_a = np.asarray(pred_a, dtype=np.float64)
    pred_b = np.asarray(pred_b, dtype=np.float64)
    _same_shape(pred_a, pred_b, "mse_augmentation_loss")
    if pred_a.shape[0] == 0:
        return 0.0
    rows = sample_common_rows(pred_a.shape[0], sample_count, rng_seed)
    diff = pred_a[rows] - pred_b[rows]
    return float(np.mean(diff * diff))


def contrastive_loss(distances, labels, tau: float) -> float:
    """Mean of y*d^2 + (1 - y)*max(tau - d, 0)^2; y = 1 marks a positive pair."""
    d = np.asarray(distances, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    _same_shape(d, y, "contrastive_loss")
    if d.size == 0:
        return 0.0
    margin = np.maximum(tau - d, 0.0)
    return float(np.mean(y * d * d + (1.0 - y) * margin * margin))


def triplet_loss(d_ap, d_an, rho: float) -> float:
    """Mean of max(d_ap - d_an + rho, 0)."""
    d_ap = np.asarray(d_ap, dtype=np.float64)
    d_an = np.asarray(d_an, dtype=np.float64)
    _same_shape(d_ap, d_an, "triplet_loss")
    if d_ap.size == 0:
        return 0.0
    return float(np.mean(np.maximum(d_ap - d_an + rho, 0.0)))


def offset_loss(o_t, o_t1) -> float:
    """
    Mean of |o_t - o_t1| minus the cosine between o_t and o_t1.

    Rows where either vector has zero norm contribute the distance term only.
    """
    o_t = np.atleast_2d(np.asarray(o_t, dtype=np.float64))
    o_t1 = np.atleast_2d(np.asarray(o_t1, dtype=np.float64))
    _same_shape(o_t, o_t1, "offset_loss")
    if o_t.shape[0] == 0:
        return 0.0
    distance = np.linalg.norm(o_t - o_t1, axis=1)
    norms = np.linalg.norm(o_t, axis=1) * np.linalg.norm(o_t1, axis=1)
    usable = norms > 0
    if not usable.all():
        logger.warning(f"offset_loss: {int((~usable).sum())} zero-norm offsets skip the cosine term")
    cosine = np.zeros_like(distance)
    cosine[usable] = np.einsum("ij,ij->i", o_t[usable], o_t1[usable]) / norms[usable]
    return float(np.mean(distance - cosine))


def _log_prob_of(pred: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return np.log(np.clip(pred[np.arange(labels.size), labels], PROB_FLOOR, None))


def cross_entropy(pred, labels, mask=None) -> float:
    """Mean -log p[label] over masked rows; 0 with a warning when the mask is empty."""
    pred = np.asarray(pred, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if pred.ndim != 2 or labels.shape != (pred.shape[0],):
        raise ShapeMismatchError(f"cross_entropy: {pred.shape} predictions for {labels.shape} labels")
    mask = np.ones(labels.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    _same_shape(mask, labels, "cross_entropy mask")
    if not mask.any():
        logger.warning("cross_entropy: empty mask, returning 0")
        return 0.0
    return float(-np.mean(_log_prob_of(pred[mask], labels[mask])))


def dice_loss(pred_mask, gt_mask) -> float:
    """1 - 2*sum(p*g) / (sum(p) + sum(g)); 0 when both masks are empty."""
    p = np.asarray(pred_mask, dtype=np.float64)
    g = np.asarray(gt_mask, dtype=bool).astype(np.float64)
    _same_shape(p, g, "dice_loss")
    total = p.sum() + g.sum()
    if total == 0:
        return 0.0
    return float(1.0 - 2.0 * np.sum(p * g) / total)


def class_presence_loss(scene_pred, gt_presence) -> float:
    """Mean binary cross-entropy of per-class presence probabilities."""
    p = np.clip(np.asarray(scene_pred, dtype=np.float64), PROB_FLOOR, 1.0 - PROB_FLOOR)
    g = np.asarray(gt_presence, dtype=bool)
    _same_shape(p, g, "class_presence_loss")
    if p.size == 0:
        return 0.0
    return float(-np.mean(np.where(g, np.log(p), np.log(1.0 - p))))


def pseudo_segmentation_loss(pred, pseudo_labels) -> float:
    """Cross-entropy over pseudo-labelled points, normalised by the number of all points."""
    pred = np.asarray(pred, dtype=np.float64)
    pseudo_labels = np.asarray(pseudo_labels, dtype=np.int64)
    if pred.ndim != 2 or pseudo_labels.shape != (pred.shape[0],):
        raise ShapeMismatchError(f"pseudo_segmentation_loss: {pred.shape} predictions "
                                 f"for {pseudo_labels.shape} labels")
    if pseudo_labels.size == 0:
        return 0.0
    labelled = pseudo_labels >= 0
    return float(-np.sum(_log_prob_of(pred[labelled], pseudo_labels[labelled])) / pseudo_labels.size)


def wsl_loss(pred, weak_labels, pseudo_labels) -> float:
    """Cross-entropy on weak labels plus cross-entropy on pseudo labels (-1 = none)."""
    weak_labels = np.asarray(weak_labels, dtype=np.int64)
    pseudo_labels = np.asarray(pseudo_labels, dtype=np.int64)
    return (cross_entropy(pred, np.maximum(weak_labels, 0), weak_labels >= 0)
            + cross_entropy(pred, np.maximum(pseudo_labels, 0), pseudo_labels >= 0))


def segmentation_objective(pred, pred_augmented, pseudo_labels, sample_count: int = DEFAULT_SAMPLE_COUNT,
                           rng_seed: int = 0) -> float:
    """Augmentation consistency plus pseudo-label segmentation loss."""
    return (augmentation_loss(pred, pred_augmented, sample_count, rng_seed)
            + pseudo_segmentation_loss(pred, pseudo_labels))


def instance_objective(pred, weak_labels, pseudo_labels, offsets, reference_offsets) -> float:
    """Semantic weak-supervision loss plus offset regression loss."""
    return wsl_loss(pred, weak_labels, pseudo_labels) + offset_loss(offsets, reference_offsets)


def detection_objective(pred, pred_augmented, pseudo_labels, mask_pred, mask_gt,
                        scene_pred, gt_presence, sample_count: int = DEFAULT_SAMPLE_COUNT,
                        rng_seed: int = 0, presence_weight: Optional[float] = None) -> float:
    """Segmentation objective plus Dice and class-presence terms."""
    weight = 1.0 if presence_weight is None else presence_weight
    return (segmentation_objective(pred, pred_augmented, pseudo_labels, sample_count, rng_seed)
            + dice_loss(mask_pred, mask_gt)
            + weight * class_presence_loss(scene_pred, gt_presence))
