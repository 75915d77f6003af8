"""Region predictor interface and registry."""

import abc
import logging
from typing import Dict, List, Optional, Type

import numpy as np

from cloud.config import SceneConfig
from merging.state import MergeState, PredictionMatrix


class BasePredictor(abc.ABC):
    """Abstract base class for region-level class predictors.

    A predictor maps the current merge state at iteration m to one probability
    row per live region (ascending region id). Output must depend only on its
    inputs.
    """

    name: str = "base"

    def __init__(self, config: Optional[SceneConfig] = None):
        self.config = config or SceneConfig()
        self.logger = logging.getLogger(f"predictor.{self.name}")

    @abc.abstractmethod
    def predict_rows(self, state: MergeState, iteration: int) -> np.ndarray:
        """Probability rows for ``state.live_ids()``, in that order."""
        pass

    def predict(self, state: MergeState, iteration: int) -> PredictionMatrix:
        rows = self.predict_rows(state, iteration)
        self.logger.debug(f"Iteration {iteration}: predicted {len(rows)} region rows")
        return PredictionMatrix(values=rows, region_ids=state.live_ids(), iteration=iteration)


def uniform_rows(count: int, num_classes: int) -> np.ndarray:
    return np.full((count, num_classes), 1.0 / max(num_classes, 1))


class PredictorRegistry:
    """Registry for managing available predictors."""

    def __init__(self):
        self._predictors: Dict[str, Type[BasePredictor]] = {}

    def register(self, predictor_class: Type[BasePredictor]):
        """Register a predictor class under its name."""
        self._predictors[predictor_class.name] = predictor_class
        logging.debug(f"Registered predictor: {predictor_class.name}")
        return predictor_class

    def get_predictor(self, name: str, **kwargs) -> Optional[BasePredictor]:
        """Get predictor instance by name."""
        predictor_class = self._predictors.get(name)
        if predictor_class:
            return predictor_class(**kwargs)
        return None

    def list_predictors(self) -> List[str]:
        return list(self._predictors.keys())


# Global registry instance
predictor_registry = PredictorRegistry()
