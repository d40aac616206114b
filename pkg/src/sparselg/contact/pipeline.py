"""Vertex-versus-obstacle detection and constraint linearization.

Rows of the stacked Jacobian are ordered ``[bilateral; normal; friction]``.
Each contact owns one normal row and two consecutive friction rows (``t1``
then ``t2``).  The constraint values are affine in the positions:

    y_b = J_b x - d_b
    y_n = J_n x - d_n
    h ydot_f = J_f x - (J_f x_t + h d_f)

so a single SpMV against ``J`` minus the precomputed ``y0`` gives all three.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..sparse import DimensionError, as_sparse
from .obstacles import Obstacle


@dataclass(frozen=True)
class ContactPair:
    vertex: int
    obstacle: int
    normal: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    gap: float  # signed distance minus minimum separation
    velocity: np.ndarray  # obstacle surface velocity at the contact
    mu: float


@dataclass(frozen=True)
class Binding:
    """Anchor a vertex to a target point along the given axes (``compliance`` = e_b)."""

    vertex: int
    target: np.ndarray
    compliance: float = 0.0
    axes: tuple = (0, 1, 2)

    def __post_init__(self):
        if not self.compliance >= 0:
            raise ValueError(f"binding compliance must be non-negative, got {self.compliance}")
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))


@dataclass(frozen=True)
class ConstraintSet:
    J: sp.csr_array  # stacked (n_b + 3 n_c) x n
    d_b: np.ndarray
    d_n: np.ndarray
    d_f: np.ndarray
    e_b: np.ndarray
    mu: np.ndarray  # per contact
    n_b: int
    n_c: int
    y0: np.ndarray
    pairs: tuple = field(default=(), repr=False)

    @property
    def n_rows(self) -> int:
        return self.n_b + 3 * self.n_c

    @property
    def n_dofs(self) -> int:
        return self.J.shape[1]

    @property
    def is_empty(self) -> bool:
        return self.n_rows == 0

    @property
    def sl_b(self) -> slice:
        return slice(0, self.n_b)

    @property
    def sl_n(self) -> slice:
        return slice(self.n_b, self.n_b + self.n_c)

    @property
    def sl_f(self) -> slice:
        return slice(self.n_b + self.n_c, self.n_rows)

    @property
    def J_b(self) -> sp.csr_array:
        return self.J[self.sl_b]

    @property
    def J_n(self) -> sp.csr_array:
        return self.J[self.sl_n]

    @property
    def J_f(self) -> sp.csr_array:
        return self.J[self.sl_f]


def orthonormal_tangents(n) -> tuple[np.ndarray, np.ndarray]:
    """Right-handed ``(t1, t2)`` with ``t2 = n x t1``.

    ``t1`` is the coordinate axis least aligned with ``n`` (first on ties),
    orthogonalised against ``n`` by one Gram-Schmidt step.
    """
    n = np.asarray(n, dtype=float)
    norm = np.linalg.norm(n, axis=-1)
    if np.any(norm == 0):
        raise ValueError("zero normal has no tangent frame")
    if np.any(np.abs(norm - 1.0) > 1e-9):
        raise ValueError("normal must have unit length")
    single = n.ndim == 1
    N = np.atleast_2d(n)
    axis = np.argmin(np.abs(N), axis=1)
    E = np.eye(3)[axis]
    t1 = E - np.einsum("ij,ij->i", E, N)[:, None] * N
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t1 -= np.einsum("ij,ij->i", t1, N)[:, None] * N  # second pass trims rounding
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(N, t1)
    return (t1[0], t2[0]) if single else (t1, t2)


def detect(
    x: np.ndarray,
    obstacles: Sequence[Obstacle],
    margin: float,
    *,
    frame: float = 0,
    h: float = 0.01,
    min_separation: float = 0.0,
    expansion: np.ndarray | None = None,
    skip: np.ndarray | None = None,
) -> list[ContactPair]:
    """One contact per vertex whose signed distance is within ``margin``.

    ``expansion`` optionally widens the margin per vertex (e.g. by the distance
    the vertex is predicted to travel this step).  Vertices in ``skip`` are
    ignored.  The nearest obstacle wins; ties go to the lower obstacle index.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    m = x.shape[0]
    if not obstacles or m == 0:
        return []
    dist = np.empty((len(obstacles), m))
    normals = np.empty((len(obstacles), m, 3))
    for k, ob in enumerate(obstacles):
        dist[k], normals[k] = ob.signed_distance(x, frame)
    best = np.argmin(dist, axis=0)
    cols = np.arange(m)
    d = dist[best, cols]
    limit = margin + (0.0 if expansion is None else np.asarray(expansion, dtype=float))
    hit = d <= limit
    if skip is not None and len(skip):
        hit[np.asarray(skip, dtype=np.int64)] = False
    verts = np.flatnonzero(hit)
    pairs = []
    if verts.size == 0:
        return pairs
    n = normals[best[verts], verts]
    t1, t2 = orthonormal_tangents(n)
    for i, v in enumerate(verts):
        ob = obstacles[best[v]]
        surface = x[v] - d[v] * n[i]
        vel = ob.point_velocity(surface[None], frame, h)[0]
        pairs.append(
            ContactPair(
                vertex=int(v),
                obstacle=int(best[v]),
                normal=n[i],
                t1=t1[i],
                t2=t2[i],
                gap=float(d[v] - min_separation),
                velocity=vel,
                mu=float(ob.mu),
            )
        )
    return pairs


def linearize(
    pairs: Sequence[ContactPair],
    bindings: Sequence[Binding],
    x_t: np.ndarray,
    h: float,
) -> ConstraintSet:
    """Stack bilateral, normal and friction rows for one time step."""
    x_t = np.asarray(x_t, dtype=float).ravel()
    n = x_t.size
    seen = set()
    unique = []
    for p in sorted(pairs, key=lambda p: (p.vertex, p.obstacle)):
        key = (p.vertex, p.obstacle)
        if key in seen:
            continue
        seen.add(key)
        unique.append(p)

    rows, cols, vals = [], [], []
    d_b, e_b = [], []
    r = 0
    for b in bindings:
        if not 0 <= b.vertex < n // 3:
            raise IndexError(f"binding vertex {b.vertex} out of range")
        for ax in b.axes:
            rows.append(r)
            cols.append(3 * b.vertex + ax)
            vals.append(1.0)
            d_b.append(b.target[ax])
            e_b.append(b.compliance)
            r += 1
    n_b = r
    n_c = len(unique)

    def add_row(row, vertex, direction):
        rows.extend([row] * 3)
        cols.extend(range(3 * vertex, 3 * vertex + 3))
        vals.extend(direction)

    d_n = np.empty(n_c)
    d_f = np.empty(2 * n_c)
    mu = np.empty(n_c)
    for j, p in enumerate(unique):
        add_row(n_b + j, p.vertex, p.normal)
        add_row(n_b + n_c + 2 * j, p.vertex, p.t1)
        add_row(n_b + n_c + 2 * j + 1, p.vertex, p.t2)
        xv = x_t[3 * p.vertex : 3 * p.vertex + 3]
        d_n[j] = p.normal @ xv - p.gap
        d_f[2 * j] = p.t1 @ p.velocity
        d_f[2 * j + 1] = p.t2 @ p.velocity
        mu[j] = p.mu
    n_rows = n_b + 3 * n_c
    J = as_sparse(sp.coo_array((vals, (rows, cols)), shape=(n_rows, n)))
    d_b = np.asarray(d_b, dtype=float)
    y0 = np.concatenate([d_b, d_n, J[n_b + n_c :] @ x_t + h * d_f])
    return ConstraintSet(
        J=J,
        d_b=d_b,
        d_n=d_n,
        d_f=d_f,
        e_b=np.asarray(e_b, dtype=float),
        mu=mu,
        n_b=n_b,
        n_c=n_c,
        y0=y0,
        pairs=tuple(unique),
    )


def gap_eval(cs: ConstraintSet, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(y_b, y_n, h ydot_f)`` at positions ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != cs.n_dofs:
        raise DimensionError(f"positions have {x.size} DOFs, constraint set expects {cs.n_dofs}")
    y = cs.J @ x - cs.y0
    return y[cs.sl_b], y[cs.sl_n], y[cs.sl_f]
