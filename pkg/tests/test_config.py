"""
Tests for SceneConfig defaults, validation and override precedence.
"""

import math
import sys
from pathlib import Path

import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from cloud.config import SceneConfig, load_config
from cloud.errors import ConfigError


class TestDefaults:
    """Test documented defaults."""

    def test_defaults(self):
        """Test the default tunables."""
        config = SceneConfig()
        assert config.theta_th == 60.0
        assert config.gamma == 0.75
        assert config.lambda_n == config.lambda_des == 1.0
        assert config.n_total == 8
        assert config.seed_fraction == 0.002
        assert config.descriptor == "adapted-pfh"

    def test_affinity_thresholds(self):
        """Test the Condition 1 gates derived from theta_th."""
        config = SceneConfig()
        assert config.normal_threshold == pytest.approx(0.5)
        assert config.affinity_threshold == pytest.approx(math.sqrt(2.0) * 0.5)

    def test_default_config_file_matches(self):
        """Test configs/default.conf restates the built-in defaults."""
        path = Path(__file__).parent.parent / "configs" / "default.conf"
        assert SceneConfig.from_file(path) == SceneConfig()


class TestValidation:
    """Test invariant checks."""

    @pytest.mark.parametrize("overrides", [
        {"radius": 0.0},
        {"gamma": 1.0},
        {"gamma": 0.0},
        {"t_merge": 2.0, "t_seed": 1.5},
        {"theta_th": 90.0},
        {"knn": 0},
        {"n_total": -1},
        {"seed_fraction": 0.0},
        {"leaf_capacity": 0},
        {"crease_curvature": -0.1},
        {"orientation_tie": 1.0},
    ])
    def test_invalid_values(self, overrides):
        """Test each invariant rejects a violating value."""
        with pytest.raises(ConfigError):
            SceneConfig().with_overrides(overrides)

    def test_unknown_key(self):
        """Test unknown keys are rejected."""
        with pytest.raises(ConfigError, match="unknown"):
            SceneConfig.from_mapping({"radious": "0.2"})

    def test_unparsable_value(self):
        """Test a non-numeric value for a float key is rejected."""
        with pytest.raises(ConfigError):
            SceneConfig.from_mapping({"radius": "wide"})


class TestOverrides:
    """Test coercion and precedence."""

    def test_string_coercion(self):
        """Test string values are coerced to the field types."""
        config = SceneConfig.from_mapping({"knn": "12", "theta_th": "45", "use_color": "false"})
        assert config.knn == 12
        assert config.theta_th == 45.0
        assert config.use_color is False

    def test_none_is_ignored(self):
        """Test None overrides leave the value untouched."""
        assert SceneConfig().with_overrides({"radius": None}).radius == 0.1

    def test_precedence(self, tmp_path):
        """Test defaults < file < overrides."""
        path = tmp_path / "scene.conf"
        path.write_text("# tuned\nradius = 0.2\nknn = 4\n")
        config = load_config(path, {"knn": "6"})
        assert config.radius == 0.2
        assert config.knn == 6
        assert config.gamma == 0.75

    def test_missing_file(self, tmp_path):
        """Test a missing config file raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.conf")

    def test_dict_round_trip(self):
        """Test to_dict and from_mapping agree."""
        config = SceneConfig(radius=0.25, use_scale=False)
        assert SceneConfig.from_mapping(config.to_dict()) == config
