"""Predictions read from RM3DMAT1 matrices written by an external model.

The path is either one matrix reused at every iteration or a directory of
``iter_01.mat``, ``iter_02.mat``, ... files. Row r belongs to the r-th live
region in ascending id order.
"""

from pathlib import Path
from typing import Optional, Union

import numpy as np

from cloud.config import SceneConfig
from cloud.errors import ShapeMismatchError
from ingestion.matrix_io import read_matrix
from merging.predictors.base import BasePredictor, predictor_registry
from merging.state import MergeState


def iteration_file(directory: Path, iteration: int) -> Path:
    return directory / f"iter_{iteration:02d}.mat"


@predictor_registry.register
class FilePredictor(BasePredictor):
    name = "file"

    def __init__(self, path: Union[str, Path, None] = None, config: Optional[SceneConfig] = None):
        super().__init__(config)
        if path is None:
            raise ValueError("file predictor needs a path (use file:<path>)")
        self.path = Path(path)

    def source(self, iteration: int) -> Path:
        return iteration_file(self.path, iteration) if self.path.is_dir() else self.path

    def predict_rows(self, state: MergeState, iteration: int) -> np.ndarray:
        path = self.source(iteration)
        if not path.exists():
            raise FileNotFoundError(f"prediction matrix not found: {path}")
        rows = read_matrix(path).astype(np.float64)
        live = len(state.live_ids())
        if rows.shape != (live, state.num_classes):
            raise ShapeMismatchError(f"{path}: matrix has shape {rows.shape}, "
                                     f"expected ({live}, {state.num_classes})")
        # float32 storage; renormalise so rows sum to 1 in float64
        sums = rows.sum(axis=1, keepdims=True)
        return np.divide(rows, sums, out=np.zeros_like(rows), where=sums > 0)
