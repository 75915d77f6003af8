"""RM3DMAT1 binary matrices: magic, u64 rows, u64 cols, little-endian f32 row-major."""

import logging
from pathlib import Path
from typing import Union

import numpy as np

from cloud.errors import CloudParseError


logger = logging.getLogger(__name__)

MAGIC = b"RM3DMAT1"
_HEADER = np.dtype([("rows", "<u8"), ("cols", "<u8")])


def write_matrix(matrix: np.ndarray, path: Union[str, Path]) -> None:
    """Write a 2-D array as float32."""
    data = np.asarray(matrix)
    if data.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {data.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.array([(data.shape[0], data.shape[1])], dtype=_HEADER)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    logger.debug(f"Wrote {data.shape[0]}x{data.shape[1]} matrix to {path}")


def read_matrix(path: Union[str, Path]) -> np.ndarray:
    """
    Read a matrix written by write_matrix.

    Returns:
        float32 array of shape (rows, cols)

    Raises:
        FileNotFoundError: If the file does not exist
        CloudParseError: For a bad magic or a truncated payload
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"matrix file not found: {path}")
    raw = path.read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise CloudParseError(f"{path}: bad magic, expected {MAGIC!r}")
    offset = len(MAGIC) + _HEADER.itemsize
    if len(raw) < offset:
        raise CloudParseError(f"{path}: truncated header")
    header = np.frombuffer(raw, dtype=_HEADER, count=1, offset=len(MAGIC))[0]
    rows, cols = int(header["rows"]), int(header["cols"])
    expected = rows * cols * 4
    if len(raw) - offset != expected:
        raise CloudParseError(f"{path}: payload has {len(raw) - offset} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4", offset=offset).reshape(rows, cols).astype(np.float32)
