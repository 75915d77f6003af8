"""Ground-truth oracle: one-hot majority class of each region's members."""

import numpy as np

from merging.predictors.base import BasePredictor, predictor_registry
from merging.state import MergeState


@predictor_registry.register
class OraclePredictor(BasePredictor):
    name = "oracle"

    def predict_rows(self, state: MergeState, iteration: int) -> np.ndarray:
        labels = state.cloud.require("gt_labels")
        live = state.live_ids()
        rows = np.full((len(live), state.num_classes), 1.0 / state.num_classes)
        for row, rid in enumerate(live):
            member_labels = labels[state.regions[rid].members]
            member_labels = member_labels[(member_labels >= 0) & (member_labels < state.num_classes)]
            if member_labels.size:
                # argmax returns the lowest id on ties
                majority = int(np.argmax(np.bincount(member_labels, minlength=state.num_classes)))
                rows[row] = 0.0
                rows[row, majority] = 1.0
        return rows
