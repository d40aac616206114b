"""JSON scenario configs: parsing, validation and construction of a simulator."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..contact import Binding, Box, Capsule, HalfSpace, Motion, NcpKind, Obstacle, PreconditionerKind, Sphere, TriangleMeshShape
from ..fem import GRAVITY, FemModel, Material, MaterialKind, Mesh, ball_tet_mesh, box_tet_mesh, cloth_mesh, load_mesh, read_obj
from ..contact.obstacles import quat_to_matrix
from ..integrator import ContactSettings, Simulator, StepBudget

DEFAULT_H = 0.01
DEFAULT_LG_ITERS = 5
DEFAULT_CR_ITERS = 10


class ConfigError(ValueError):
    """Schema violation; ``path`` names the offending field, e.g. ``meshes[0].material.E``."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# -- low-level field readers -------------------------------------------------


def _get(d: dict, key: str, path: str, default=..., kind=None):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "required field is missing")
        return default
    value = d[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}" if path else key, f"expected {getattr(kind, '__name__', kind)}")
    return value


def _number(value, path: str, *, positive=False, nonneg=False, integer=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    if integer and int(value) != value:
        raise ConfigError(path, "must be an integer")
    if positive and not value > 0:
        raise ConfigError(path, "must be positive")
    if nonneg and value < 0:
        raise ConfigError(path, "must be non-negative")
    return int(value) if integer else float(value)


def _vector(value, path: str, n: int = 3) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ConfigError(path, f"expected a list of {n} numbers")
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)])


def _field(d, key, path, default=..., **kw):
    if default is not ... and isinstance(d, dict) and key not in d:
        return default
    return _number(_get(d, key, path), f"{path}.{key}" if path else key, **kw)


# -- typed config ---------------------------------------------------------------


@dataclass
class MeshSpec:
    mesh: Mesh
    material: Material
    source: dict  # the raw entry, kept for re-emission


@dataclass
class PinGroup:
    vertices: np.ndarray  # global indices
    motion: dict  # {"type": "static" | "translate" | "rotate", ...}


@dataclass
class SolverSpec:
    h: float = DEFAULT_H
    lg_iters: int = DEFAULT_LG_ITERS
    cr_iters: int = DEFAULT_CR_ITERS
    ncp_kind: NcpKind = NcpKind.FISCHER_BURMEISTER
    preconditioner: PreconditionerKind = PreconditionerKind.SYSTEM
    margin: float | None = None
    min_separation: float = 0.0
    warm_start: bool = False


@dataclass
class OutputSpec:
    directory: str | None = None
    stride: int = 1
    log: str | None = None


@dataclass
class ScenarioConfig:
    name: str
    meshes: list[MeshSpec]
    obstacles: list[Obstacle] = field(default_factory=list)
    pins: list[PinGroup] = field(default_factory=list)
    bindings: list[Binding] = field(default_factory=list)
    solver: SolverSpec = field(default_factory=SolverSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    gravity: np.ndarray = field(default_factory=lambda: np.array(GRAVITY, dtype=float))
    frames: int = 100
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def budget(self) -> StepBudget:
        return StepBudget(self.solver.lg_iters, self.solver.cr_iters, self.solver.h)

    @property
    def settings(self) -> ContactSettings:
        s = self.solver
        return ContactSettings(
            ncp_kind=s.ncp_kind,
            preconditioner=s.preconditioner,
            margin=s.margin,
            min_separation=s.min_separation,
            warm_start=s.warm_start,
        )

    def model(self) -> FemModel:
        pins = np.concatenate([g.vertices for g in self.pins]) if self.pins else None
        model, _ = FemModel.from_meshes([(m.mesh, m.material) for m in self.meshes], pins=pins)
        return model

    def pin_script(self, rest: np.ndarray, model: FemModel):
        """Callable ``frame -> (p, 3)`` targets, ordered like ``model.pins``."""
        order = model.pins
        groups = [(g.vertices, g.motion) for g in self.pins]
        h = self.solver.h

        def script(frame: int) -> np.ndarray:
            out = np.empty((rest.shape[0], 3))
            for verts, motion in groups:
                out[verts] = pin_motion(motion, rest[verts], frame * h)
            return out[order]

        return script

    def simulator(self, **overrides) -> Simulator:
        model = self.model()
        rest = model.mesh.vertices
        kwargs = dict(
            obstacles=self.obstacles,
            bindings=self.bindings,
            budget=self.budget,
            settings=self.settings,
            pin_script=self.pin_script(rest, model) if self.pins else None,
            gravity=self.gravity,
        )
        kwargs.update(overrides)
        return Simulator(model, **kwargs)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def pin_motion(motion: dict, rest: np.ndarray, t: float) -> np.ndarray:
    """Pin positions at time ``t`` for one pin group."""
    kind = motion.get("type", "static")
    if kind == "static":
        return rest.copy()
    if kind == "translate":
        v = np.asarray(motion["velocity"], dtype=float)
        duration = motion.get("duration")
        tt = t if duration is None else min(t, float(duration))
        return rest + tt * v
    if kind == "rotate":
        axis = np.asarray(motion["axis"], dtype=float)
        axis = axis / np.linalg.norm(axis)
        center = np.asarray(motion.get("center", (0.0, 0.0, 0.0)), dtype=float)
        duration = motion.get("duration")
        tt = t if duration is None else min(t, float(duration))
        angle = float(motion["rate"]) * tt
        half = 0.5 * angle
        R = quat_to_matrix(np.concatenate([[math.cos(half)], math.sin(half) * axis]))
        return (rest - center) @ R.T + center
    raise ValueError(f"unknown pin motion {kind!r}")


# -- parsing ----------------------------------------------------------------------


def _material(d, path) -> Material:
    kind = _get(d, "type", path, kind=str)
    try:
        kind = MaterialKind(kind)
    except ValueError:
        choices = ", ".join(k.value for k in MaterialKind)
        raise ConfigError(f"{path}.type", f"unknown material {kind!r} (choose from {choices})") from None
    nu = _field(d, "nu", path, 0.3)
    if not -1.0 < nu < 0.5:
        raise ConfigError(f"{path}.nu", "Poisson ratio must lie in (-1, 0.5)")
    return Material(
        kind,
        density=_field(d, "rho", path, positive=True),
        youngs=_field(d, "E", path, positive=True),
        poisson=nu,
        thickness=_field(d, "thickness", path, 1e-3, positive=True),
    )


def _generated_mesh(g, path) -> Mesh:
    kind = _get(g, "type", path, kind=str)
    if kind == "box":
        size = _vector(_get(g, "size", path), f"{path}.size")
        res = [int(_number(r, f"{path}.resolution[{i}]", positive=True, integer=True)) for i, r in enumerate(_get(g, "resolution", path, [2, 2, 2]))]
        return box_tet_mesh(tuple(size), tuple(res), tuple(_vector(_get(g, "origin", path, [0, 0, 0]), f"{path}.origin")))
    if kind == "ball":
        return ball_tet_mesh(
            _field(g, "radius", path, positive=True),
            int(_field(g, "resolution", path, 8, positive=True, integer=True)),
            tuple(_vector(_get(g, "center", path, [0, 0, 0]), f"{path}.center")),
        )
    if kind == "cloth":
        size = _get(g, "size", path)
        if not isinstance(size, list) or len(size) != 2:
            raise ConfigError(f"{path}.size", "expected two numbers")
        res = _get(g, "resolution", path, [10, 10])
        return cloth_mesh(
            tuple(_number(s, f"{path}.size[{i}]", positive=True) for i, s in enumerate(size)),
            tuple(int(_number(r, f"{path}.resolution[{i}]", positive=True, integer=True)) for i, r in enumerate(res)),
            tuple(_vector(_get(g, "origin", path, [0, 0, 0]), f"{path}.origin")),
        )
    raise ConfigError(f"{path}.type", f"unknown generator {kind!r} (choose from box, ball, cloth)")


def _pose(d, path) -> dict:
    out = {}
    if "translation" in d:
        out["translation"] = _vector(d["translation"], f"{path}.translation")
    if "rotation" in d:
        q = _vector(d["rotation"], f"{path}.rotation", 4)
        if np.linalg.norm(q) == 0:
            raise ConfigError(f"{path}.rotation", "quaternion must be non-zero")
        out["rotation"] = quat_to_matrix(q / np.linalg.norm(q))
    if "scale" in d:
        out["scale"] = _number(d["scale"], f"{path}.scale", positive=True)
    return out


def _mesh_entry(d, path, base: Path) -> MeshSpec:
    if "path" in d:
        p = base / _get(d, "path", path, kind=str)
        if not p.exists():
            raise ConfigError(f"{path}.path", f"file not found: {p}")
        mesh = load_mesh(p)
    elif "generate" in d:
        mesh = _generated_mesh(d["generate"], f"{path}.generate")
    else:
        raise ConfigError(f"{path}.path", "required field is missing (give 'path' or 'generate')")
    mesh = mesh.transformed(**_pose(_get(d, "pose", path, {}), f"{path}.pose"))
    return MeshSpec(mesh, _material(_get(d, "material", path), f"{path}.material"), d)


def _shape(d, path, base: Path):
    kind = _get(d, "type", path, kind=str)
    if kind == "halfspace":
        n = _vector(_get(d, "normal", path), f"{path}.normal")
        if np.linalg.norm(n) == 0:
            raise ConfigError(f"{path}.normal", "must be non-zero")
        return HalfSpace(_vector(_get(d, "point", path, [0, 0, 0]), f"{path}.point"), n)
    if kind == "sphere":
        return Sphere(_vector(_get(d, "center", path, [0, 0, 0]), f"{path}.center"), _field(d, "radius", path, positive=True))
    if kind in ("capsule", "cylinder"):
        return Capsule(
            _vector(_get(d, "a", path), f"{path}.a"),
            _vector(_get(d, "b", path), f"{path}.b"),
            _field(d, "radius", path, positive=True),
        )
    if kind == "box":
        return Box(
            _vector(_get(d, "half_extents", path), f"{path}.half_extents"),
            _vector(_get(d, "center", path, [0, 0, 0]), f"{path}.center"),
        )
    if kind == "mesh":
        p = base / _get(d, "path", path, kind=str)
        if not p.exists():
            raise ConfigError(f"{path}.path", f"file not found: {p}")
        V, F = read_obj(p)
        return TriangleMeshShape(V, F)
    raise ConfigError(f"{path}.type", f"unknown obstacle shape {kind!r}")


def _motion(d, path) -> Motion:
    keys = _get(d, "keyframes", path, [])
    if not keys:
        return Motion.static()
    frames, pos, quat = [], [], []
    for i, k in enumerate(keys):
        p = f"{path}.keyframes[{i}]"
        frames.append(_field(k, "frame", p))
        pos.append(_vector(_get(k, "position", p, [0, 0, 0]), f"{p}.position"))
        quat.append(_vector(_get(k, "quaternion", p, [1, 0, 0, 0]), f"{p}.quaternion", 4))
    try:
        return Motion.keyframes(frames, pos, quat)
    except ValueError as exc:
        raise ConfigError(f"{path}.keyframes", str(exc)) from None


def _selector(d, path, rest: np.ndarray) -> np.ndarray:
    kind = _get(d, "type", path, kind=str)
    if kind == "indices":
        idx = np.array([_number(v, f"{path}.indices[{i}]", nonneg=True, integer=True) for i, v in enumerate(_get(d, "indices", path, kind=list))], dtype=np.int64)
        if idx.size and idx.max() >= rest.shape[0]:
            raise ConfigError(f"{path}.indices", f"vertex index {int(idx.max())} out of range")
        return idx
    if kind == "box":
        lo = _vector(_get(d, "min", path), f"{path}.min")
        hi = _vector(_get(d, "max", path), f"{path}.max")
        return np.flatnonzero(np.all((rest >= lo) & (rest <= hi), axis=1))
    raise ConfigError(f"{path}.type", f"unknown selector {kind!r} (choose from indices, box)")


def _pin_motion_entry(d, path) -> dict:
    kind = _get(d, "type", path, "static", kind=str)
    if kind == "static":
        return {"type": "static"}
    out = {"type": kind}
    if kind == "translate":
        out["velocity"] = _vector(_get(d, "velocity", path), f"{path}.velocity").tolist()
    elif kind == "rotate":
        axis = _vector(_get(d, "axis", path), f"{path}.axis")
        if np.linalg.norm(axis) == 0:
            raise ConfigError(f"{path}.axis", "must be non-zero")
        out["axis"] = axis.tolist()
        out["center"] = _vector(_get(d, "center", path, [0, 0, 0]), f"{path}.center").tolist()
        out["rate"] = _field(d, "rate", path)
    else:
        raise ConfigError(f"{path}.type", f"unknown pin motion {kind!r} (choose from static, translate, rotate)")
    if "duration" in d:
        out["duration"] = _field(d, "duration", path, nonneg=True)
    return out


def _solver(d, path) -> SolverSpec:
    s = SolverSpec()
    s.h = _field(d, "h", path, DEFAULT_H, positive=True)
    s.lg_iters = _field(d, "lg_iters", path, DEFAULT_LG_ITERS, positive=True, integer=True)
    s.cr_iters = _field(d, "cr_iters", path, DEFAULT_CR_ITERS, positive=True, integer=True)
    kind = _get(d, "ncp_kind", path, "fb", kind=str)
    try:
        s.ncp_kind = NcpKind(kind)
    except ValueError:
        raise ConfigError(f"{path}.ncp_kind", f"unknown NCP function {kind!r} (choose from minmap, fb)") from None
    pre = _get(d, "preconditioner", path, "system", kind=str)
    try:
        s.preconditioner = PreconditionerKind(pre)
    except ValueError:
        raise ConfigError(f"{path}.preconditioner", f"unknown preconditioner {pre!r} (choose from system, mass)") from None
    margin = _get(d, "margin", path, None)
    s.margin = None if margin is None else _number(margin, f"{path}.margin", nonneg=True)
    s.min_separation = _field(d, "min_separation", path, 0.0, nonneg=True)
    s.warm_start = bool(_get(d, "warm_start", path, False, kind=bool))
    return s


def parse_scenario(data: dict, base_dir: str | Path = ".") -> ScenarioConfig:
    """Validate a decoded JSON document and build the typed config."""
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be an object")
    base = Path(base_dir)
    entries = _get(data, "meshes", "", kind=list)
    if not entries:
        raise ConfigError("meshes", "at least one mesh is required")
    meshes = [_mesh_entry(m, f"meshes[{i}]", base) for i, m in enumerate(entries)]
    if len({m.mesh.kind for m in meshes}) != 1:
        raise ConfigError("meshes", "all meshes must share one element kind (tet or tri)")
    rest = np.concatenate([m.mesh.vertices for m in meshes])

    obstacles = []
    for i, o in enumerate(_get(data, "obstacles", "", [], kind=list)):
        path = f"obstacles[{i}]"
        mu = _field(o, "mu", path, 0.0, nonneg=True)
        obstacles.append(
            Obstacle(_shape(_get(o, "shape", path), f"{path}.shape", base), _motion(_get(o, "motion", path, {}), f"{path}.motion"), mu, o.get("name", f"obstacle{i}"))
        )

    pins = []
    for i, g in enumerate(_get(data, "pins", "", [], kind=list)):
        path = f"pins[{i}]"
        verts = _selector(_get(g, "select", path), f"{path}.select", rest)
        pins.append(PinGroup(verts, _pin_motion_entry(_get(g, "motion", path, {}), f"{path}.motion")))
    if pins:
        allv = np.concatenate([g.vertices for g in pins])
        if np.unique(allv).size != allv.size:
            raise ConfigError("pins", "pin groups overlap")

    bindings = []
    for i, b in enumerate(_get(data, "bindings", "", [], kind=list)):
        path = f"bindings[{i}]"
        v = _field(b, "vertex", path, nonneg=True, integer=True)
        if v >= rest.shape[0]:
            raise ConfigError(f"{path}.vertex", f"vertex index {v} out of range")
        target = _vector(_get(b, "target", path, rest[v].tolist()), f"{path}.target")
        bindings.append(Binding(v, target, _field(b, "compliance", path, 0.0, nonneg=True)))

    out = _get(data, "output", "", {}, kind=dict)
    output = OutputSpec(
        directory=_get(out, "directory", "output", None),
        stride=_field(out, "stride", "output", 1, positive=True, integer=True),
        log=_get(out, "log", "output", None),
    )
    return ScenarioConfig(
        name=str(data.get("name", "scenario")),
        meshes=meshes,
        obstacles=obstacles,
        pins=pins,
        bindings=bindings,
        solver=_solver(_get(data, "solver", "", {}, kind=dict), "solver"),
        output=output,
        gravity=_vector(_get(data, "gravity", "", list(GRAVITY)), "gravity"),
        frames=_field(data, "frames", "", 100, nonneg=True, integer=True),
        raw=copy.deepcopy(data),
    )


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_scenario(data, path.parent)
