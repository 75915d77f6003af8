"""Darboux-frame pair features."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from cloud.errors import DegeneratePairError


COINCIDENT = 1e-12
# |u x dir| below this means the connecting line is parallel to the normal
PARALLEL = 1e-9


@dataclass(frozen=True)
class PairFeatures:
    """Angles of a (source, target) pair in the source's Darboux frame.

    ``beta`` is the unit direction from source to target; alpha and phi lie
    in [-1, 1], theta in [-pi, pi].
    """
    alpha: float
    phi: float
    theta: float
    beta: np.ndarray
    distance: float


def _frame_v(u: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Second frame axis for each row; falls back to the global axis least parallel to u."""
    v = np.cross(u, direction)
    norms = np.linalg.norm(v, axis=1)
    flat = norms < PARALLEL
    if flat.any():
        axes = np.eye(3)[np.argmin(np.abs(u[flat]), axis=1)]
        v[flat] = np.cross(u[flat], axes)
        norms[flat] = np.linalg.norm(v[flat], axis=1)
    return v / norms[:, None]


def _rowdot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", a, b)


def pair_features_batch(p_src: np.ndarray, n_src: np.ndarray, p_tgt: np.ndarray,
                        n_tgt: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorised pair features over matching rows.

    The frame is never built explicitly: with c = u x delta, alpha is
    (c . n2) / |c| and w . n2 is ((u . delta)(u . n2) - |u|^2 (delta . n2)) / |c|.
    Rows whose connecting line is parallel to the normal take the fallback
    axis of ``_frame_v``.

    Returns:
        (alpha, phi, theta, distance, valid); rows of coincident points are
        marked invalid and carry zeros
    """
    delta = np.asarray(p_tgt, dtype=np.float64) - np.asarray(p_src, dtype=np.float64)
    u = np.asarray(n_src, dtype=np.float64)
    n2 = np.asarray(n_tgt, dtype=np.float64)
    distance = np.sqrt(_rowdot(delta, delta))
    valid = distance > COINCIDENT
    cross = np.cross(u, delta)
    cross_norm = np.sqrt(_rowdot(cross, cross))
    u_delta = _rowdot(u, delta)
    u_n2 = _rowdot(u, n2)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = _rowdot(cross, n2) / cross_norm
        phi = u_delta / distance
        w_n2 = (u_delta * u_n2 - _rowdot(u, u) * _rowdot(delta, n2)) / cross_norm
        flat = valid & (cross_norm < PARALLEL * distance)
    if flat.any():
        v = _frame_v(u[flat], delta[flat] / distance[flat, None])
        alpha[flat] = _rowdot(v, n2[flat])
        w_n2[flat] = _rowdot(np.cross(u[flat], v), n2[flat])
    alpha = np.where(valid, np.clip(alpha, -1.0, 1.0), 0.0)
    phi = np.where(valid, np.clip(phi, -1.0, 1.0), 0.0)
    theta = np.where(valid, np.arctan2(w_n2, u_n2), 0.0)
    return alpha, phi, theta, distance, valid


def pair_features(p_c, n_c, p_x, n_x) -> PairFeatures:
    """
    Pair features of one ordered pair.

    Raises:
        DegeneratePairError: If the two points coincide
    """
    p_c = np.asarray(p_c, dtype=np.float64).reshape(1, 3)
    p_x = np.asarray(p_x, dtype=np.float64).reshape(1, 3)
    alpha, phi, theta, distance, valid = pair_features_batch(
        p_c, np.asarray(n_c, dtype=np.float64).reshape(1, 3),
        p_x, np.asarray(n_x, dtype=np.float64).reshape(1, 3))
    if not valid[0]:
        raise DegeneratePairError("pair features are undefined for coincident points")
    return PairFeatures(
        alpha=float(alpha[0]),
        phi=float(phi[0]),
        theta=float(theta[0]),
        beta=((p_x - p_c) / distance[0]).reshape(3),
        distance=float(distance[0]),
    )
