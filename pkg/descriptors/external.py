"""Externally computed per-point embeddings used as descriptors."""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from cloud.errors import ShapeMismatchError
from descriptors.base import DescriptorKind, DescriptorSet
from ingestion.matrix_io import read_matrix


logger = logging.getLogger(__name__)


def load_external_embeddings(path: Union[str, Path], expected_rows: Optional[int] = None) -> DescriptorSet:
    """
    Load an N x D RM3DMAT1 matrix as a descriptor set.

    Raises:
        ShapeMismatchError: If the row count differs from expected_rows
    """
    matrix = read_matrix(path).astype(np.float64)
    if expected_rows is not None and matrix.shape[0] != expected_rows:
        raise ShapeMismatchError(f"{path}: embedding has {matrix.shape[0]} rows, cloud has {expected_rows} points")
    logger.info(f"Loaded {matrix.shape[0]}x{matrix.shape[1]} external embeddings from {path}")
    return DescriptorSet(kind=DescriptorKind.EXTERNAL, values=matrix, isolated=~matrix.any(axis=1))
