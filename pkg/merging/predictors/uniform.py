"""Uniform rows; never passes the confidence gate for two or more classes."""

import numpy as np

from merging.predictors.base import BasePredictor, predictor_registry, uniform_rows
from merging.state import MergeState


@predictor_registry.register
class UniformPredictor(BasePredictor):
    name = "uniform"

    def predict_rows(self, state: MergeState, iteration: int) -> np.ndarray:
        return uniform_rows(len(state.live_ids()), state.num_classes)
