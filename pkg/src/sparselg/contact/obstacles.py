"""Rigid scripted obstacles with signed-distance queries.

Every shape is defined in its own local frame and placed by a pose script.
``signed_distance`` returns the distance and the outward unit normal at the
closest surface point, both in world coordinates; negative distances mean the
query point is inside the obstacle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation, Slerp


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix from a ``(w, x, y, z)`` quaternion."""
    q = np.asarray(q, dtype=float)
    return Rotation.from_quat(np.r_[q[1:], q[0]]).as_matrix()


@dataclass(frozen=True)
class Motion:
    """Piecewise-linear keyframed rigid pose; held constant outside the keyframe range.

    ``frames`` are integer frame indices, ``positions`` translations and
    ``quaternions`` orientations as ``(w, x, y, z)``; rotations are slerped.
    """

    frames: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray

    @classmethod
    def static(cls, position=(0.0, 0.0, 0.0), quaternion=(1.0, 0.0, 0.0, 0.0)) -> "Motion":
        return cls(np.array([0]), np.asarray([position], dtype=float), np.asarray([quaternion], dtype=float))

    @classmethod
    def keyframes(cls, frames, positions, quaternions=None) -> "Motion":
        frames = np.asarray(frames, dtype=float)
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        if quaternions is None:
            quaternions = np.tile([1.0, 0.0, 0.0, 0.0], (frames.size, 1))
        quaternions = np.asarray(quaternions, dtype=float).reshape(-1, 4)
        if not (frames.size == positions.shape[0] == quaternions.shape[0]) or frames.size == 0:
            raise ValueError("keyframe arrays must be non-empty and of equal length")
        if np.any(np.diff(frames) <= 0):
            raise ValueError("keyframe frames must be strictly increasing")
        norms = np.linalg.norm(quaternions, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero quaternion in motion script")
        return cls(frames, positions, quaternions / norms[:, None])

    def pose(self, frame: float) -> tuple[np.ndarray, np.ndarray]:
        """(rotation matrix, translation) at ``frame``."""
        f = float(np.clip(frame, self.frames[0], self.frames[-1]))
        if self.frames.size == 1:
            return quat_to_matrix(self.quaternions[0]), self.positions[0].copy()
        t = np.array([np.interp(f, self.frames, self.positions[:, i]) for i in range(3)])
        rots = Rotation.from_quat(self.quaternions[:, [1, 2, 3, 0]])
        R = Slerp(self.frames, rots)([f]).as_matrix()[0]
        return R, t


def _normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


class Shape:
    def local_sdf(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


@dataclass(frozen=True)
class HalfSpace(Shape):
    """Solid ``{p : n . (p - point) <= 0}``; the surface normal is ``n``."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if np.linalg.norm(n) == 0:
            raise ValueError("half-space normal must be non-zero")
        object.__setattr__(self, "normal", n / np.linalg.norm(n))
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))

    def local_sdf(self, p):
        d = (p - self.point) @ self.normal
        return d, np.broadcast_to(self.normal, p.shape).copy()


@dataclass(frozen=True)
class Sphere(Shape):
    center: np.ndarray
    radius: float

    def local_sdf(self, p):
        r = p - np.asarray(self.center, dtype=float)
        dist = np.linalg.norm(r, axis=1)
        n = _normalize(r)
        n[dist == 0] = (0.0, 0.0, 1.0)
        return dist - self.radius, n


@dataclass(frozen=True)
class Capsule(Shape):
    """Points within ``radius`` of the segment ``a``-``b``.  Long capsules stand in for cylinders."""

    a: np.ndarray
    b: np.ndarray
    radius: float

    def local_sdf(self, p):
        a = np.asarray(self.a, dtype=float)
        ab = np.asarray(self.b, dtype=float) - a
        t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
        r = p - (a + t[:, None] * ab)
        dist = np.linalg.norm(r, axis=1)
        n = _normalize(r)
        if np.any(dist == 0):
            # On the axis: pick any direction orthogonal to it.
            axis = ab / np.linalg.norm(ab)
            e = np.eye(3)[int(np.argmin(np.abs(axis)))]
            perp = _normalize(e - (e @ axis) * axis)
            n[dist == 0] = perp
        return dist - self.radius, n


@dataclass(frozen=True)
class Box(Shape):
    """Axis-aligned box (in its local frame) centred at ``center``."""

    half_extents: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def local_sdf(self, p):
        he = np.asarray(self.half_extents, dtype=float)
        q = p - np.asarray(self.center, dtype=float)
        a = np.abs(q) - he
        outside = np.maximum(a, 0.0)
        out_d = np.linalg.norm(outside, axis=1)
        in_d = np.minimum(a.max(axis=1), 0.0)
        dist = out_d + in_d
        sgn = np.where(q >= 0, 1.0, -1.0)
        n = _normalize(outside * sgn)
        inside = out_d == 0
        if np.any(inside):
            k = np.argmax(a[inside], axis=1)
            ni = np.zeros((k.size, 3))
            ni[np.arange(k.size), k] = sgn[inside][np.arange(k.size), k]
            n[inside] = ni
        return dist, n


@dataclass(frozen=True)
class TriangleMeshShape(Shape):
    """Closed, consistently wound triangle mesh.  Sign from the generalized winding number."""

    vertices: np.ndarray
    faces: np.ndarray

    def local_sdf(self, p):
        V = np.asarray(self.vertices, dtype=float)
        Fc = np.asarray(self.faces, dtype=np.int64)
        A, B, C = V[Fc[:, 0]], V[Fc[:, 1]], V[Fc[:, 2]]
        best_d = np.full(p.shape[0], np.inf)
        best_c = np.zeros_like(p)
        best_f = np.zeros(p.shape[0], dtype=np.int64)
        for f in range(Fc.shape[0]):
            c = closest_point_on_triangle(p, A[f], B[f], C[f])
            d = np.linalg.norm(p - c, axis=1)
            better = d < best_d
            best_d[better], best_c[better], best_f[better] = d[better], c[better], f
        wn = winding_number(p, A, B, C)
        sign = np.where(np.abs(wn) > 0.5, -1.0, 1.0)
        n = _normalize(p - best_c) * sign[:, None]
        face_n = _normalize(np.cross(B - A, C - A))
        tiny = best_d < 1e-14
        n[tiny] = face_n[best_f[tiny]]
        return sign * best_d, n


def winding_number(p, A, B, C) -> np.ndarray:
    a = A[None] - p[:, None]
    b = B[None] - p[:, None]
    c = C[None] - p[:, None]
    la, lb, lc = (np.linalg.norm(v, axis=2) for v in (a, b, c))
    det = np.einsum("pfi,pfi->pf", a, np.cross(b, c))
    den = la * lb * lc + lc * np.einsum("pfi,pfi->pf", a, b) + la * np.einsum("pfi,pfi->pf", b, c) + lb * np.einsum("pfi,pfi->pf", c, a)
    return (2.0 * np.arctan2(det, den)).sum(axis=1) / (4.0 * np.pi)


def closest_point_on_triangle(p, a, b, c) -> np.ndarray:
    """Closest points on triangle ``abc`` to each row of ``p`` (Ericson's region tests)."""
    ab, ac = b - a, c - a
    ap = p - a
    d1, d2 = ap @ ab, ap @ ac
    bp = p - b
    d3, d4 = bp @ ab, bp @ ac
    cp = p - c
    d5, d6 = cp @ ab, cp @ ac
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    out = np.empty_like(p)
    done = np.zeros(p.shape[0], dtype=bool)

    def put(mask, val):
        nonlocal done
        m = mask & ~done
        out[m] = val[m] if np.ndim(val) == 2 else val
        done |= m

    put((d1 <= 0) & (d2 <= 0), a)
    put((d3 >= 0) & (d4 <= d3), b)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = d1 / (d1 - d3)
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[:, None] * ab)
        put((d6 >= 0) & (d5 <= d6), np.broadcast_to(c, p.shape))
        w = d2 / (d2 - d6)
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[:, None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        put((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v, w = vb * denom, vc * denom
        put(np.ones(p.shape[0], dtype=bool), a + v[:, None] * ab + w[:, None] * ac)
    return out


@dataclass(frozen=True)
class Obstacle:
    shape: Shape
    motion: Motion = field(default_factory=Motion.static)
    mu: float = 0.0
    name: str = ""

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValueError(f"friction coefficient must be non-negative, got {self.mu}")

    def signed_distance(self, x: np.ndarray, frame: float) -> tuple[np.ndarray, np.ndarray]:
        R, t = self.motion.pose(frame)
        d, n = self.shape.local_sdf((np.asarray(x, dtype=float) - t) @ R)
        return d, n @ R.T

    def point_velocity(self, points: np.ndarray, frame: float, h: float) -> np.ndarray:
        """Velocity over ``[frame - 1, frame]`` of the material points now at ``points``."""
        R1, t1 = self.motion.pose(frame)
        R0, t0 = self.motion.pose(frame - 1)
        local = (points - t1) @ R1
        previous = local @ R0.T + t0
        return (points - previous) / h
