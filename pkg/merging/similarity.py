"""Region-to-region similarity used by the merge engine.

S = y1*M_color + y2*M_scale + y3*M_des + y4*M_seg, with the geometric
weights y1..y3 = 1 - m/N_Total and the semantic weight y4 = m/N_Total, so the
score shifts from geometry towards network predictions as self-training
proceeds.
"""

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict

import numpy as np

from cloud.config import SceneConfig
from descriptors.region import descriptor_cosine
from segmentation.regions import Region


SQRT3 = math.sqrt(3.0)
UNBALANCED_WEIGHT = 0.5


@dataclass(frozen=True)
class SimilarityTerms:
    """Which similarity terms contribute; a disabled term counts as 0."""
    color: bool = True
    scale: bool = True
    descriptor: bool = True
    semantic: bool = True
    weight_balancing: bool = True

    @classmethod
    def from_config(cls, config: SceneConfig) -> "SimilarityTerms":
        return cls(
            color=config.use_color,
            scale=config.use_scale,
            descriptor=config.use_descriptor_similarity,
            semantic=config.use_semantic_similarity,
            weight_balancing=config.weight_balancing,
        )


@dataclass(frozen=True)
class SimilarityBreakdown:
    m_color: float
    m_scale: float
    m_des: float
    m_seg: float
    geometric_weight: float
    semantic_weight: float
    total: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def stage_weights(m: int, n_total: int, weight_balancing: bool = True):
    """(geometric, semantic) weights at iteration m of n_total."""
    if not weight_balancing:
        return UNBALANCED_WEIGHT, UNBALANCED_WEIGHT
    progress = min(max(m / n_total, 0.0), 1.0) if n_total > 0 else 0.0
    return 1.0 - progress, progress


def similarity_breakdown(region_i: Region, region_j: Region, pred_i: np.ndarray, pred_j: np.ndarray,
                         m: int, n_total: int, lambda_seg: float,
                         terms: SimilarityTerms = SimilarityTerms()) -> SimilarityBreakdown:
    """
    All four similarity terms and the weighted total.

    M_color is 1 - |c_i - c_j| / sqrt(3) and is replaced by M_des when the
    cloud has no colors. M_scale is the smaller over the larger bounding-box
    diagonal (1 when both are 0). M_des is the clamped descriptor cosine and
    M_seg = exp(-lambda_seg * |p_i - p_j|^2) over the prediction rows.
    """
    m_des = max(0.0, descriptor_cosine(region_i.descriptor, region_j.descriptor))
    if region_i.mean_color is None or region_j.mean_color is None:
        m_color = m_des
    else:
        m_color = 1.0 - float(np.linalg.norm(region_i.mean_color - region_j.mean_color)) / SQRT3
    larger = max(region_i.scale, region_j.scale)
    m_scale = 1.0 if larger == 0.0 else min(region_i.scale, region_j.scale) / larger
    diff = np.asarray(pred_i, dtype=np.float64) - np.asarray(pred_j, dtype=np.float64)
    m_seg = math.exp(-lambda_seg * float(diff @ diff))

    geometric, semantic = stage_weights(m, n_total, terms.weight_balancing)
    total = geometric * ((m_color if terms.color else 0.0)
                         + (m_scale if terms.scale else 0.0)
                         + (m_des if terms.descriptor else 0.0)) \
        + semantic * (m_seg if terms.semantic else 0.0)
    return SimilarityBreakdown(m_color=m_color, m_scale=m_scale, m_des=m_des, m_seg=m_seg,
                               geometric_weight=geometric, semantic_weight=semantic, total=total)


def similarity_score(region_i: Region, region_j: Region, pred_i: np.ndarray, pred_j: np.ndarray,
                     m: int, n_total: int, lambda_seg: float,
                     terms: SimilarityTerms = SimilarityTerms()) -> float:
    """Weighted similarity S of two regions at self-training iteration m."""
    return similarity_breakdown(region_i, region_j, pred_i, pred_j, m, n_total, lambda_seg, terms).total
