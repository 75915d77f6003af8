"""Named scenes used by tests and ``run.py synth --preset``.

Primitives of different classes are kept more than one neighbourhood radius
(0.1 m by default) apart, except in ``perpendicular_planes`` where the wall
stands on the floor edge.
"""

from typing import Callable, Dict

from synth.scenes import PrimitiveKind, PrimitiveSpec, SceneSpec


CLASS_COLORS = [
    (0.85, 0.25, 0.20),
    (0.20, 0.55, 0.85),
    (0.30, 0.75, 0.35),
    (0.90, 0.75, 0.20),
    (0.60, 0.35, 0.75),
]


def two_parallel_planes(density: float = 400.0, noise: float = 0.0, seed: int = 0,
                        gap: float = 0.5) -> SceneSpec:
    """Two horizontal 1 x 1 m planes, one above the other."""
    return SceneSpec(seed=seed, primitives=[
        PrimitiveSpec(PrimitiveKind.PLANE, class_id=0, instance_id=0, density=density, noise=noise,
                      center=(0.0, 0.0, 0.0), size=(1.0, 1.0, 0.0), color=CLASS_COLORS[0]),
        PrimitiveSpec(PrimitiveKind.PLANE, class_id=1, instance_id=1, density=density, noise=noise,
                      center=(0.0, 0.0, gap), size=(1.0, 1.0, 0.0), color=CLASS_COLORS[1]),
    ])


def perpendicular_planes(density: float = 900.0, noise: float = 0.0, seed: int = 0,
                         gap: float = 0.0) -> SceneSpec:
    """A 1 x 1 m floor and a 1 x 1 m wall standing at its x = -0.5 edge, ``gap`` apart."""
    return SceneSpec(seed=seed, primitives=[
        PrimitiveSpec(PrimitiveKind.PLANE, class_id=0, instance_id=0, density=density, noise=noise,
                      center=(0.0, 0.0, 0.0), size=(1.0, 1.0, 0.0), color=CLASS_COLORS[0]),
        PrimitiveSpec(PrimitiveKind.PLANE, class_id=1, instance_id=1, density=density, noise=noise,
                      center=(-0.5 - gap, 0.0, 0.5 + gap), rotation=(0.0, 90.0, 0.0),
                      size=(1.0, 1.0, 0.0), color=CLASS_COLORS[1]),
    ])


def tilted_planes(density: float = 900.0, noise: float = 0.002, seed: int = 0) -> SceneSpec:
    """Two noisy planes tilted against each other and the axes, 0.4 m apart."""
    return SceneSpec(seed=seed, primitives=[
        PrimitiveSpec(PrimitiveKind.PLANE, class_id=0, instance_id=0, density=density, noise=noise,
                      center=(0.0, 0.0, 0.0), rotation=(20.0, 10.0, 0.0), size=(1.0, 0.8, 0.0),
                      color=CLASS_COLORS[0]),
        PrimitiveSpec(PrimitiveKind.PLANE, class_id=1, instance_id=1, density=density, noise=noise,
                      center=(1.4, 0.3, 0.2), rotation=(-35.0, 25.0, 40.0), size=(0.9, 0.9, 0.0),
                      color=CLASS_COLORS[1]),
    ])


def five_primitives(density: float = 1600.0, noise: float = 0.001, seed: int = 0) -> SceneSpec:
    """Floor, wall, cube, sphere and flat box, one class each, about 6e4 points at the default density."""
    return SceneSpec(seed=seed, primitives=[
        PrimitiveSpec(PrimitiveKind.PLANE, class_id=0, instance_id=0, density=density, noise=noise,
                      center=(0.0, 0.0, 0.0), size=(3.0, 3.0, 0.0), color=CLASS_COLORS[0]),
        PrimitiveSpec(PrimitiveKind.PLANE, class_id=1, instance_id=1, density=density, noise=noise,
                      center=(-2.0, 0.0, 1.5), rotation=(0.0, 90.0, 0.0), size=(2.5, 2.5, 0.0),
                      color=CLASS_COLORS[1]),
        PrimitiveSpec(PrimitiveKind.BOX, class_id=2, instance_id=2, density=density, noise=noise,
                      center=(3.0, 0.0, 0.8), rotation=(0.0, 0.0, 30.0), size=(1.2, 1.2, 1.2),
                      color=CLASS_COLORS[2]),
        PrimitiveSpec(PrimitiveKind.SPHERE, class_id=3, instance_id=3, density=density, noise=noise,
                      center=(0.0, 3.5, 1.0), radius=0.8, color=CLASS_COLORS[3]),
        PrimitiveSpec(PrimitiveKind.BOX, class_id=4, instance_id=4, density=density, noise=noise,
                      center=(0.0, -3.2, 0.5), size=(1.5, 1.0, 0.6), color=CLASS_COLORS[4]),
    ])


PRESETS: Dict[str, Callable[..., SceneSpec]] = {
    "two_parallel_planes": two_parallel_planes,
    "perpendicular_planes": perpendicular_planes,
    "tilted_planes": tilted_planes,
    "five_primitives": five_primitives,
}


def preset(name: str, **kwargs) -> SceneSpec:
    try:
        return PRESETS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown preset '{name}'; expected one of {', '.join(PRESETS)}") from None
