"""Scene files: one [scene] section and one [primitive NAME] section per primitive.

    [scene]
    seed = 7

    [primitive floor]
    kind = plane
    center = 0 0 0
    rotation = 0 0 0
    size = 2 2
    class = 0
    instance = 0
    density = 400
    noise = 0.001
    color = 0.8 0.2 0.2
"""

import configparser
import logging
from pathlib import Path
from typing import Tuple, Union

from cloud.errors import CloudParseError, ConfigError
from synth.scenes import PrimitiveKind, PrimitiveSpec, SceneSpec


logger = logging.getLogger(__name__)

PRIMITIVE_PREFIX = "primitive"
PRIMITIVE_KEYS = {"kind", "center", "rotation", "size", "radius", "class", "instance",
                  "density", "noise", "color"}


def _vector(text: str, length: int, pad: float, key: str, section: str) -> Tuple[float, ...]:
    values = [float(v) for v in text.replace(",", " ").split()]
    if not 1 <= len(values) <= length:
        raise ConfigError(f"[{section}] {key}: expected up to {length} numbers, got '{text}'")
    return tuple(values + [pad] * (length - len(values)))


def parse_scene(text: str) -> SceneSpec:
    """
    Parse scene-file text.

    Raises:
        CloudParseError: If the text is not a valid sectioned file
        ConfigError: For unknown keys, bad values or missing required keys
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise CloudParseError(f"bad scene file: {e}", line=getattr(e, "lineno", None)) from e

    seed = parser.getint("scene", "seed", fallback=0) if parser.has_section("scene") else 0
    primitives = []
    for section in parser.sections():
        if section == "scene":
            continue
        if not section.startswith(PRIMITIVE_PREFIX):
            raise ConfigError(f"unknown section [{section}]")
        body = parser[section]
        unknown = set(body) - PRIMITIVE_KEYS
        if unknown:
            raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(unknown))}")
        try:
            kind = PrimitiveKind(body.get("kind", "").strip().lower())
        except ValueError:
            raise ConfigError(f"[{section}] kind must be plane, box or sphere")
        try:
            primitives.append(PrimitiveSpec(
                kind=kind,
                class_id=body.getint("class"),
                instance_id=body.getint("instance", fallback=len(primitives)),
                density=body.getfloat("density"),
                center=_vector(body.get("center", "0 0 0"), 3, 0.0, "center", section),
                rotation=_vector(body.get("rotation", "0 0 0"), 3, 0.0, "rotation", section),
                size=_vector(body.get("size", "1 1 1"), 3, 1.0, "size", section),
                radius=body.getfloat("radius", fallback=0.5),
                noise=body.getfloat("noise", fallback=0.0),
                color=_vector(body["color"], 3, 0.0, "color", section) if "color" in body else None,
            ))
        except TypeError:
            raise ConfigError(f"[{section}] needs class and density")
        except ValueError as e:
            raise ConfigError(f"[{section}] {e}") from e
    logger.info(f"Parsed scene with {len(primitives)} primitives")
    return SceneSpec(primitives=primitives, seed=seed)


def load_scene(path: Union[str, Path]) -> SceneSpec:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scene file not found: {path}")
    return parse_scene(path.read_text())


def format_scene(spec: SceneSpec) -> str:
    """Scene-file text that parses back to ``spec``."""
    def vec(values):
        return " ".join(f"{v:g}" for v in values)

    lines = ["[scene]", f"seed = {spec.seed}", ""]
    for p in spec.primitives:
        lines += [
            f"[{PRIMITIVE_PREFIX} {p.instance_id}]",
            f"kind = {p.kind.value}",
            f"center = {vec(p.center)}",
            f"rotation = {vec(p.rotation)}",
            f"size = {vec(p.size)}",
            f"radius = {p.radius:g}",
            f"class = {p.class_id}",
            f"instance = {p.instance_id}",
            f"density = {p.density:g}",
            f"noise = {p.noise:g}",
        ]
        if p.color is not None:
            lines.append(f"color = {vec(p.color)}")
        lines.append("")
    return "\n".join(lines)
