"""Desk-scale versions of the reference experiments, emitted as plain config dicts."""

from __future__ import annotations

import math
from typing import Callable

from .config import ScenarioConfig, parse_scenario

TAN_10_DEG = math.tan(math.radians(10.0))


def twist_bar(
    youngs: float = 1e9,
    rate: float = math.pi / 2,
    resolution=(16, 4, 4),
    frames: int = 100,
) -> dict:
    """0.4 x 0.1 x 0.1 m ARAP bar; both end faces rotate in opposite senses about the bar axis.

    ``rate`` (rad/s) is the angular speed of each end, so the relative twist
    after ``t`` seconds is ``2 * rate * t``.
    """
    L, W = 0.4, 0.1
    axis_center = [0.0, W / 2, W / 2]
    eps = 1e-9
    return {
        "name": "twist-bar",
        "frames": frames,
        "gravity": [0.0, 0.0, 0.0],
        "meshes": [
            {
                "generate": {"type": "box", "size": [L, W, W], "resolution": list(resolution)},
                "material": {"type": "arap", "rho": 1000.0, "E": youngs, "nu": 0.45},
            }
        ],
        "pins": [
            {
                "select": {"type": "box", "min": [-eps, -1, -1], "max": [eps, 1, 1]},
                "motion": {"type": "rotate", "axis": [1, 0, 0], "center": axis_center, "rate": -rate},
            },
            {
                "select": {"type": "box", "min": [L - eps, -1, -1], "max": [L + eps, 1, 1]},
                "motion": {"type": "rotate", "axis": [1, 0, 0], "center": axis_center, "rate": rate},
            },
        ],
        "solver": {"h": 0.01, "lg_iters": 5, "cr_iters": 10},
        "output": {"directory": "out/twist-bar", "stride": 1, "log": "out/twist-bar/log.csv"},
    }


def stick_slide(mu: float = 0.177, preconditioner: str = "system", frames: int = 200, resolution: int = 2) -> dict:
    """Coarse stiff 0.1 m cube resting on a 10 degree slope.

    The slope is a half-space through the origin; the cube is rotated to sit
    flush on it.  The critical friction coefficient is ``tan(10 deg)``.
    """
    a = math.radians(10.0)
    half = 0.5 * a
    # rotation by -10 deg about y takes the cube's base normal (0, 0, 1) to the slope normal
    q = [math.cos(half), 0.0, -math.sin(half), 0.0]
    return {
        "name": "stick-slide",
        "frames": frames,
        "meshes": [
            {
                "generate": {"type": "box", "size": [0.1, 0.1, 0.1], "resolution": [resolution] * 3, "origin": [-0.05, -0.05, 0.0]},
                "material": {"type": "corotational", "rho": 1000.0, "E": 1e8, "nu": 0.3},
                "pose": {"rotation": q},
            }
        ],
        "obstacles": [
            {
                "name": "slope",
                "shape": {"type": "halfspace", "point": [0, 0, 0], "normal": [-math.sin(a), 0.0, math.cos(a)]},
                "mu": mu,
            }
        ],
        "solver": {
            "h": 0.01,
            "lg_iters": 10,
            "cr_iters": 24,
            "ncp_kind": "fb",
            "preconditioner": preconditioner,
            "warm_start": True,
        },
        "output": {"directory": "out/stick-slide", "stride": 10, "log": "out/stick-slide/log.csv"},
    }


def cloth_extension(material: str = "neohookean", resolution=(40, 20), stretch: float = 2.0, frames: int = 150) -> dict:
    """0.2 x 0.1 m sheet; the x = 0 edge is fixed and the x = 0.2 edge is pulled to ``stretch`` times the length in 1 s."""
    L, W = 0.2, 0.1
    eps = 1e-9
    return {
        "name": "cloth-extension",
        "frames": frames,
        "gravity": [0.0, 0.0, 0.0],
        "meshes": [
            {
                "generate": {"type": "cloth", "size": [L, W], "resolution": list(resolution)},
                "material": {"type": material, "rho": 1000.0, "E": 1e5, "nu": 0.45, "thickness": 1e-3},
            }
        ],
        "pins": [
            {"select": {"type": "box", "min": [-eps, -1, -1], "max": [eps, 1, 1]}, "motion": {"type": "static"}},
            {
                "select": {"type": "box", "min": [L - eps, -1, -1], "max": [L + eps, 1, 1]},
                "motion": {"type": "translate", "velocity": [(stretch - 1.0) * L, 0, 0], "duration": 1.0},
            },
        ],
        "solver": {"h": 0.01, "lg_iters": 5, "cr_iters": 10},
        "output": {"directory": "out/cloth-extension", "stride": 5, "log": "out/cloth-extension/log.csv"},
    }


def cloth_on_box(resolution=(31, 31), mu: float = 0.3, frames: int = 100) -> dict:
    """0.4 m square Neo-Hookean sheet dropped onto the sharp edges of a 0.2 m box."""
    return {
        "name": "cloth-on-box",
        "frames": frames,
        "meshes": [
            {
                "generate": {"type": "cloth", "size": [0.4, 0.4], "resolution": list(resolution), "origin": [-0.2, -0.2, 0.11]},
                "material": {"type": "neohookean", "rho": 1000.0, "E": 1e5, "nu": 0.4, "thickness": 1e-3},
            }
        ],
        "obstacles": [
            {"name": "box", "shape": {"type": "box", "half_extents": [0.1, 0.1, 0.1], "center": [0, 0, 0]}, "mu": mu},
        ],
        "solver": {"h": 0.01, "lg_iters": 5, "cr_iters": 10, "warm_start": True},
        "output": {"directory": "out/cloth-on-box", "stride": 1, "log": "out/cloth-on-box/log.csv"},
    }


def ball_between_cylinders(squeeze: float = 0.015, mu: float = 0.5, frames: int = 100, resolution: int = 8) -> dict:
    """Soft ball squeezed between two horizontal cylinders that close in over 0.5 s, then hold."""
    R, rc = 0.05, 0.02
    gap = R + rc
    speed = squeeze / 0.5

    def cylinder(side: float) -> dict:
        x = side * gap
        return {
            "name": "left" if side < 0 else "right",
            "shape": {"type": "cylinder", "a": [0.0, -0.1, 0.0], "b": [0.0, 0.1, 0.0], "radius": rc},
            "mu": mu,
            "motion": {
                "keyframes": [
                    {"frame": 0, "position": [x, 0, 0]},
                    {"frame": 50, "position": [x - side * speed * 0.5, 0, 0]},
                ]
            },
        }

    return {
        "name": "ball-between-cylinders",
        "frames": frames,
        "meshes": [
            {
                "generate": {"type": "ball", "radius": R, "resolution": resolution},
                "material": {"type": "neohookean", "rho": 1000.0, "E": 1e4, "nu": 0.4},
            }
        ],
        "obstacles": [cylinder(-1.0), cylinder(1.0)],
        "solver": {"h": 0.01, "lg_iters": 5, "cr_iters": 10},
        "output": {"directory": "out/ball-between-cylinders", "stride": 1, "log": "out/ball-between-cylinders/log.csv"},
    }


_CATALOG: dict[str, Callable[..., dict]] = {
    "twist-bar": twist_bar,
    "stick-slide": stick_slide,
    "cloth-extension": cloth_extension,
    "cloth-on-box": cloth_on_box,
    "ball-between-cylinders": ball_between_cylinders,
}


def builtin_scenarios() -> dict[str, Callable[..., dict]]:
    """Name -> generator of a config dict (keyword arguments tweak the scenario)."""
    return dict(_CATALOG)


def builtin_dict(name: str, **params) -> dict:
    try:
        gen = _CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(sorted(_CATALOG))}") from None
    return gen(**params)


def builtin_config(name: str, **params) -> ScenarioConfig:
    return parse_scenario(builtin_dict(name, **params))
