"""Scene configuration: defaults, config files and command-line overrides."""

import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import dotenv_values

from cloud.errors import ConfigError


logger = logging.getLogger(__name__)

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class SceneConfig:
    """Tunables for oversegmentation, merging and self-training."""
    radius: float = 0.1
    knn: int = 8
    theta_th: float = 60.0
    zeta: float = 0.05
    crease_curvature: float = 0.05
    orientation_tie: float = 0.1
    gamma: float = 0.75
    t_merge: float = 1.25
    t_seed: float = 1.5
    lambda_n: float = 1.0
    lambda_des: float = 1.0
    lambda_seg: float = 1.0
    n_ths: int = 0
    n_total: int = 8
    seed_fraction: float = 0.002
    rng_seed: int = 0
    descriptor: str = "adapted-pfh"
    leaf_capacity: int = 16
    max_depth: int = 21
    threads: int = 1
    predictor_temperature: float = 0.1
    predictor_bandwidth: float = 1.0
    aug_sample_count: int = 1000
    # Ablation switches
    use_normal_affinity: bool = True
    use_descriptor_affinity: bool = True
    use_color: bool = True
    use_scale: bool = True
    use_descriptor_similarity: bool = True
    use_semantic_similarity: bool = True
    weight_balancing: bool = True

    def __post_init__(self):
        checks = [
            (self.radius > 0, "radius must be > 0"),
            (self.knn >= 1, "knn must be >= 1"),
            (0 < self.theta_th < 90, "theta_th must lie in (0, 90) degrees"),
            (self.zeta >= 0, "zeta must be >= 0"),
            (self.crease_curvature >= 0, "crease_curvature must be >= 0"),
            (0 <= self.orientation_tie < 1, "orientation_tie must lie in [0, 1)"),
            (0 < self.gamma < 1, "gamma must lie in (0, 1)"),
            (self.t_seed >= self.t_merge, "t_seed must be >= t_merge"),
            (min(self.lambda_n, self.lambda_des, self.lambda_seg) >= 0, "lambda weights must be >= 0"),
            (self.lambda_n + self.lambda_des > 0, "lambda_n + lambda_des must be > 0"),
            (self.n_ths >= 0, "n_ths must be >= 0"),
            (self.n_total >= 0, "n_total must be >= 0"),
            (0 < self.seed_fraction <= 1, "seed_fraction must lie in (0, 1]"),
            (self.leaf_capacity >= 1, "leaf_capacity must be >= 1"),
            (self.max_depth >= 0, "max_depth must be >= 0"),
            (self.threads >= 1, "threads must be >= 1"),
            (self.predictor_temperature > 0, "predictor_temperature must be > 0"),
            (self.predictor_bandwidth > 0, "predictor_bandwidth must be > 0"),
            (self.aug_sample_count >= 1, "aug_sample_count must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @property
    def affinity_threshold(self) -> float:
        """Condition 1 gate on the combined affinity."""
        return math.sqrt(self.lambda_n + self.lambda_des) * math.cos(math.radians(self.theta_th))

    @property
    def normal_threshold(self) -> float:
        """Condition 1 gate on the normal angle alone."""
        return math.cos(math.radians(self.theta_th))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "SceneConfig":
        """Return a copy with the non-None overrides applied."""
        values = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(values) - _field_types().keys()
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return replace(self, **{k: _coerce(k, v) for k, v in values.items()})

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "SceneConfig":
        return cls().with_overrides(values)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "SceneConfig":
        """Load a "key = value" config file on top of the defaults.

        Raises:
            FileNotFoundError: If the file does not exist
            ConfigError: For unknown keys or unparsable values
        """
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        raw = dotenv_values(path, interpolate=False)
        logger.debug(f"Loaded {len(raw)} config keys from {path}")
        return cls.from_mapping({k: v for k, v in raw.items() if v is not None})


def _field_types() -> Dict[str, type]:
    defaults = SceneConfig()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(SceneConfig)}


def _coerce(key: str, value: Any) -> Any:
    target = _field_types()[key]
    if isinstance(value, target) and not (target is int and isinstance(value, bool)):
        return value
    text = str(value).strip()
    try:
        if target is bool:
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if target is int:
            return int(text)
        if target is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {value!r}")


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> SceneConfig:
    """Resolve a config with precedence defaults < file < overrides."""
    config = SceneConfig.from_file(path) if path else SceneConfig()
    if overrides:
        config = config.with_overrides(overrides)
    return config
