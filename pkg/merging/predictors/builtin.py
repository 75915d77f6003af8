"""Heuristic predictor: similarity to already-labelled regions.

For region j and class c the score is the best, over labelled regions l of
class c, of clamped descriptor cosine times a Gaussian kernel of centroid
distance. Rows are softmax(score / temperature). This is a desk-scale
stand-in for a trained network, not a learned model.
"""

import numpy as np
from scipy.special import softmax

from merging.predictors.base import BasePredictor, predictor_registry, uniform_rows
from merging.state import MergeState


def _unit_rows(values: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(values, axis=1, keepdims=True)
    return np.divide(values, norms, out=np.zeros_like(values), where=norms > 0)


@predictor_registry.register
class BuiltinPredictor(BasePredictor):
    name = "builtin"

    def predict_rows(self, state: MergeState, iteration: int) -> np.ndarray:
        live = state.live_ids()
        regions = [state.regions[rid] for rid in live]
        labelled = [r for r in regions if r.label.is_labeled]
        if not labelled:
            return uniform_rows(len(live), state.num_classes)

        descriptors = _unit_rows(np.stack([r.descriptor.values for r in regions]))
        anchors = _unit_rows(np.stack([r.descriptor.values for r in labelled]))
        cosine = np.clip(descriptors @ anchors.T, 0.0, None)
        centroids = np.stack([r.centroid for r in regions])
        anchor_centroids = np.stack([r.centroid for r in labelled])
        gap = centroids[:, None, :] - anchor_centroids[None, :, :]
        kernel = np.exp(-np.einsum("ijk,ijk->ij", gap, gap) / (2.0 * self.config.predictor_bandwidth ** 2))
        affinity = cosine * kernel

        classes = np.array([r.label.class_id for r in labelled])
        scores = np.zeros((len(live), state.num_classes))
        for c in np.unique(classes):
            scores[:, c] = affinity[:, classes == c].max(axis=1)
        return softmax(scores / self.config.predictor_temperature, axis=1)
