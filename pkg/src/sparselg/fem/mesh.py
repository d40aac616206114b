"""Simplicial meshes: procedural generators and OBJ / TetGen I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (m, 3) float
    elements: np.ndarray  # (E, 4) tetrahedra or (E, 3) triangles
    faces: np.ndarray  # (F, 3) surface triangles, outward for volumes

    @property
    def kind(self) -> str:
        return "tet" if self.elements.shape[1] == 4 else "tri"

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def transformed(self, rotation: np.ndarray | None = None, translation=None, scale: float = 1.0) -> "Mesh":
        V = self.vertices * scale
        if rotation is not None:
            V = V @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            V = V + np.asarray(translation, dtype=float)
        return Mesh(V, self.elements, self.faces)

    def mean_edge_length(self) -> float:
        k = self.elements.shape[1]
        pairs = [(a, b) for a in range(k) for b in range(a + 1, k)]
        E = np.concatenate([self.elements[:, [a, b]] for a, b in pairs])
        E = np.unique(np.sort(E, axis=1), axis=0)
        return float(np.linalg.norm(self.vertices[E[:, 0]] - self.vertices[E[:, 1]], axis=1).mean())


def _orient_tets(V: np.ndarray, T: np.ndarray) -> np.ndarray:
    e = V[T[:, 1:]] - V[T[:, :1]]
    flip = np.linalg.det(e) < 0
    T = T.copy()
    T[flip, 1], T[flip, 2] = T[flip, 2], T[flip, 1].copy()
    return T


def boundary_faces(V: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Faces used by exactly one tetrahedron, wound outward."""
    local = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])
    F = T[:, local].reshape(-1, 3)
    key = np.sort(F, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    F = F[counts[inv.ravel()] == 1]
    # Local faces above are outward for positively oriented tets.
    return F


def box_tet_mesh(size=(1.0, 1.0, 1.0), resolution=(2, 2, 2), origin=(0.0, 0.0, 0.0)) -> Mesh:
    """Regular grid of cubes, each split into six tetrahedra (Kuhn subdivision)."""
    nx, ny, nz = (int(r) for r in resolution)
    xs = np.linspace(0.0, size[0], nx + 1)
    ys = np.linspace(0.0, size[1], ny + 1)
    zs = np.linspace(0.0, size[2], nz + 1)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    V = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1) + np.asarray(origin, dtype=float)

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    corner = {}
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                corner[(dx, dy, dz)] = vid(I + dx, J + dy, K + dz)
    # Six tets around the main diagonal (0,0,0)-(1,1,1).
    paths = [
        ((1, 0, 0), (1, 1, 0)),
        ((1, 0, 0), (1, 0, 1)),
        ((0, 1, 0), (1, 1, 0)),
        ((0, 1, 0), (0, 1, 1)),
        ((0, 0, 1), (1, 0, 1)),
        ((0, 0, 1), (0, 1, 1)),
    ]
    tets = [np.stack([corner[(0, 0, 0)], corner[a], corner[b], corner[(1, 1, 1)]], axis=1) for a, b in paths]
    T = _orient_tets(V, np.concatenate(tets).astype(np.int64))
    return Mesh(V, T, boundary_faces(V, T))


def ball_tet_mesh(radius: float = 0.1, resolution: int = 8, center=(0.0, 0.0, 0.0)) -> Mesh:
    """Voxel ball: grid tets whose centroid lies inside the sphere, then compacted."""
    box = box_tet_mesh((2 * radius,) * 3, (resolution,) * 3, np.asarray(center, dtype=float) - radius)
    cent = box.vertices[box.elements].mean(axis=1)
    keep = np.linalg.norm(cent - np.asarray(center, dtype=float), axis=1) <= radius
    T = box.elements[keep]
    used = np.unique(T)
    remap = -np.ones(box.n_vertices, dtype=np.int64)
    remap[used] = np.arange(used.size)
    V = box.vertices[used]
    T = remap[T]
    return Mesh(V, T, boundary_faces(V, T))


def cloth_mesh(size=(1.0, 1.0), resolution=(10, 10), origin=(0.0, 0.0, 0.0)) -> Mesh:
    """Flat rectangular sheet in the plane z = origin[2], alternating diagonals."""
    nx, ny = (int(r) for r in resolution)
    xs = np.linspace(0.0, size[0], nx + 1)
    ys = np.linspace(0.0, size[1], ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    V = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1) + np.asarray(origin, dtype=float)

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    T = np.asarray(tris, dtype=np.int64)
    return Mesh(V, T, T)


def triangle_mesh(vertices, faces) -> Mesh:
    F = np.asarray(faces, dtype=np.int64)
    return Mesh(np.asarray(vertices, dtype=float), F, F)


def tet_mesh(vertices, tets) -> Mesh:
    V = np.asarray(vertices, dtype=float)
    T = _orient_tets(V, np.asarray(tets, dtype=np.int64))
    return Mesh(V, T, boundary_faces(V, T))


def read_obj(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append([float(t) for t in tok[1:4]])
            elif tok[0] == "f":
                idx = [int(t.split("/")[0]) for t in tok[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
    return np.asarray(verts, dtype=float).reshape(-1, 3), np.asarray(faces, dtype=np.int64).reshape(-1, 3)


def write_obj(path: str | Path, vertices: np.ndarray, faces: np.ndarray) -> None:
    with open(path, "w") as fh:
        for v in vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def _data_lines(path):
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                yield line.split()


def read_tetgen(node_path: str | Path, ele_path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a TetGen ``.node``/``.ele`` pair.

    The index base (0 or 1) is taken from the first point index in the
    ``.node`` file; element indices are shifted accordingly.
    """
    lines = _data_lines(node_path)
    n_points, dim = (int(t) for t in next(lines)[:2])
    if dim != 3:
        raise ValueError(f"{node_path}: expected 3D points, got dimension {dim}")
    ids, pts = [], []
    for _ in range(n_points):
        tok = next(lines)
        ids.append(int(tok[0]))
        pts.append([float(t) for t in tok[1:4]])
    base = min(ids) if ids else 0
    if base not in (0, 1):
        raise ValueError(f"{node_path}: point indices start at {base}, expected 0 or 1")
    V = np.zeros((n_points, 3))
    V[np.asarray(ids) - base] = pts

    lines = _data_lines(ele_path)
    n_tets, per = (int(t) for t in next(lines)[:2])
    if per != 4:
        raise ValueError(f"{ele_path}: only linear tetrahedra are supported, got {per} nodes")
    T = np.array([[int(t) for t in next(lines)[1:5]] for _ in range(n_tets)], dtype=np.int64).reshape(-1, 4)
    return V, T - base


def write_tetgen(stem: str | Path, vertices: np.ndarray, tets: np.ndarray, base: int = 1) -> tuple[Path, Path]:
    stem = Path(stem)
    node, ele = stem.with_suffix(".node"), stem.with_suffix(".ele")
    with open(node, "w") as fh:
        fh.write(f"{len(vertices)} 3 0 0\n")
        for i, v in enumerate(vertices):
            fh.write(f"{i + base} {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
    with open(ele, "w") as fh:
        fh.write(f"{len(tets)} 4 0\n")
        for i, t in enumerate(tets):
            fh.write(f"{i + base} {t[0] + base} {t[1] + base} {t[2] + base} {t[3] + base}\n")
    return node, ele


def load_mesh(path: str | Path) -> Mesh:
    """Load ``*.obj`` as a triangle mesh or ``*.node``/``*.ele`` as tetrahedra."""
    path = Path(path)
    if path.suffix == ".obj":
        V, F = read_obj(path)
        return triangle_mesh(V, F)
    if path.suffix in (".node", ".ele"):
        V, T = read_tetgen(path.with_suffix(".node"), path.with_suffix(".ele"))
        return tet_mesh(V, T)
    raise ValueError(f"unsupported mesh format: {path}")
