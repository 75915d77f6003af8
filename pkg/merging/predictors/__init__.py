"""Region predictors driving self-training."""

from typing import Optional

from cloud.config import SceneConfig
from merging.predictors.base import BasePredictor, predictor_registry
from merging.predictors import builtin as _builtin, file as _file, oracle as _oracle, uniform as _uniform  # noqa: F401

FILE_PREFIX = "file:"


def create_predictor(spec: str, config: Optional[SceneConfig] = None) -> BasePredictor:
    """Instantiate a predictor from "builtin", "oracle", "uniform" or "file:<path>".

    Raises:
        ValueError: For unknown predictor names
    """
    if spec.startswith(FILE_PREFIX):
        return predictor_registry.get_predictor("file", path=spec[len(FILE_PREFIX):], config=config)
    if spec == "file":
        raise ValueError("file predictor needs a path (use file:<path>)")
    predictor = predictor_registry.get_predictor(spec, config=config)
    if predictor is None:
        raise ValueError(f"unknown predictor '{spec}'; expected one of "
                         f"{', '.join(n for n in predictor_registry.list_predictors())} (file as file:<path>)")
    return predictor


__all__ = ["BasePredictor", "create_predictor", "predictor_registry"]
