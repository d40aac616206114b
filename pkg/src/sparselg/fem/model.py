"""FEM model: rest data, lumped mass, the invariant global system and the RHS.

Positions are stored as ``(m, 3)`` arrays; the flat DOF index of vertex ``v``,
axis ``c`` is ``3 v + c``.  Each element's deformation gradient is a linear
function of its vertices,

    F_e[i, j] = sum_k x[elem[e, k], i] * B[e, k, j],

so ``sum_e w_e G_e^T G_e`` is the scalar stiffness ``L[a, b] = sum_e w_e
B[e, a, :] . B[e, b, :]`` replicated over the three axes (``kron(L, I3)``).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from ..sparse import SparseInverse, apply_inverse, as_sparse, factorize_and_invert, reorder_fill_reducing
from .local import LocalSolveStats, minimize_proximal, project_arap
from .materials import Material, MaterialKind, psi
from .mesh import Mesh

GRAVITY = np.array([0.0, 0.0, -9.81])


class DegenerateElementError(ValueError):
    pass


@dataclass(frozen=True)
class FemModel:
    mesh: Mesh
    materials: tuple[Material, ...]
    material_index: np.ndarray  # (E,) index into ``materials``
    Dm_inv: np.ndarray  # (E, d, d)
    measure: np.ndarray  # (E,) volume (tets) or area (triangles)
    rest_volume: np.ndarray  # (E,) measure, times thickness for triangles
    weight: np.ndarray  # (E,) w_e = 2 mu * rest volume
    mass: np.ndarray  # (m,) lumped vertex masses
    pins: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    B: np.ndarray = field(default=None, repr=False)  # (E, k, d) gradient coefficients

    @classmethod
    def from_mesh(cls, mesh: Mesh, material, pins=None, vertex_mass=None, material_index=None) -> "FemModel":
        """Precompute rest data.

        ``material`` is one :class:`Material` or a sequence selected per element
        by ``material_index``.  ``vertex_mass`` (scalar or per vertex) is added
        to the lumped mass.
        """
        materials = (material,) if isinstance(material, Material) else tuple(material)
        V = np.asarray(mesh.vertices, dtype=float)
        T = np.asarray(mesh.elements, dtype=np.int64)
        d = T.shape[1] - 1
        n_el = T.shape[0]
        index = np.zeros(n_el, dtype=np.int64) if material_index is None else np.asarray(material_index, dtype=np.int64)
        if index.shape != (n_el,) or (n_el and (index.min() < 0 or index.max() >= len(materials))):
            raise ValueError("material_index must give a valid material for every element")
        if n_el == 0:
            Dm_inv = np.zeros((0, d, d))
            measure = np.zeros(0)
        else:
            Dm = rest_shape_matrix(V, T)
            if d == 3:
                measure = np.linalg.det(Dm) / 6.0
            else:
                measure = 0.5 * np.abs(np.linalg.det(Dm))
            bad = np.flatnonzero(~(measure > 1e-300))
            if bad.size:
                raise DegenerateElementError(f"element {int(bad[0])} has non-positive rest measure {measure[bad[0]]:.3g}")
            Dm_inv = np.linalg.inv(Dm)
        mu = np.array([m.mu for m in materials])[index]
        density = np.array([m.density for m in materials])[index]
        thickness = np.array([m.thickness for m in materials])[index]
        rest_volume = measure * thickness if d == 2 else measure.copy()
        weight = 2.0 * mu * rest_volume
        mass = np.zeros(mesh.n_vertices)
        np.add.at(mass, T.ravel(), np.repeat(density * rest_volume / (d + 1), d + 1))
        if vertex_mass is not None:
            mass += np.broadcast_to(np.asarray(vertex_mass, dtype=float), mass.shape)
        B = np.empty((n_el, d + 1, d))
        B[:, 1:, :] = Dm_inv
        B[:, 0, :] = -Dm_inv.sum(axis=1)
        pins = np.zeros(0, dtype=np.int64) if pins is None else np.unique(np.asarray(pins, dtype=np.int64))
        if pins.size and (pins.min() < 0 or pins.max() >= mesh.n_vertices):
            raise ValueError("pin index out of range")
        unsupported = np.flatnonzero(mass <= 0)
        if unsupported.size:
            raise ValueError(f"vertex {int(unsupported[0])} belongs to no element and has zero mass")
        return cls(mesh, materials, index, Dm_inv, measure, rest_volume, weight, mass, pins, B)

    @classmethod
    def from_meshes(cls, parts, pins=None) -> tuple["FemModel", np.ndarray]:
        """Merge ``[(mesh, material), ...]`` of one element kind into a single model.

        Returns the model and the vertex offset of each part.
        """
        parts = list(parts)
        if not parts:
            raise ValueError("at least one mesh is required")
        kinds = {m.kind for m, _ in parts}
        if len(kinds) != 1:
            raise ValueError("cannot mix tetrahedral and triangle meshes in one model")
        offsets = np.cumsum([0] + [m.n_vertices for m, _ in parts])
        V = np.concatenate([m.vertices for m, _ in parts])
        T = np.concatenate([m.elements + o for (m, _), o in zip(parts, offsets)])
        Fc = np.concatenate([m.faces + o for (m, _), o in zip(parts, offsets)])
        index = np.concatenate([np.full(m.elements.shape[0], i) for i, (m, _) in enumerate(parts)])
        model = cls.from_mesh(Mesh(V, T, Fc), [mat for _, mat in parts], pins=pins, material_index=index)
        return model, offsets[:-1]

    @property
    def material(self) -> Material:
        return self.materials[0]

    @property
    def n_vertices(self) -> int:
        return self.mesh.n_vertices

    @property
    def n_dofs(self) -> int:
        return 3 * self.mesh.n_vertices

    @property
    def elements(self) -> np.ndarray:
        return self.mesh.elements

    @property
    def pinned_dofs(self) -> np.ndarray:
        return (3 * self.pins[:, None] + np.arange(3)).ravel()

    def with_weights(self, weight) -> "FemModel":
        w = np.broadcast_to(np.asarray(weight, dtype=float), self.weight.shape).copy()
        return replace(self, weight=w)

    def with_pins(self, pins) -> "FemModel":
        return replace(self, pins=np.unique(np.asarray(pins, dtype=np.int64)))

    def deformation_gradients(self, x: np.ndarray) -> np.ndarray:
        """``(E, 3, d)`` deformation gradients at positions ``x`` (``(m, 3)``)."""
        X = np.asarray(x, dtype=float).reshape(-1, 3)[self.elements]  # (E, k, 3)
        return np.einsum("eki,ekj->eij", X, self.B)

    def deformation_gradient(self, e: int, x: np.ndarray) -> np.ndarray:
        X = np.asarray(x, dtype=float).reshape(-1, 3)[self.elements[e]]
        return X.T @ self.B[e]

    def _groups(self):
        if len(self.materials) == 1:
            yield self.materials[0], slice(None)
            return
        for i, mat in enumerate(self.materials):
            yield mat, np.flatnonzero(self.material_index == i)

    def local_step(self, F: np.ndarray) -> tuple[np.ndarray, LocalSolveStats]:
        """Per-element projections ``p_e``.

        Dividing the local objective by the rest volume leaves the proximal
        weight ``2 mu`` for every element of a material.
        """
        p = np.empty_like(F)
        stats = LocalSolveStats()
        for mat, sel in self._groups():
            if mat.kind is MaterialKind.ARAP:
                p[sel] = project_arap(F[sel])
            else:
                p[sel], st = minimize_proximal(mat.kind, F[sel], mat.mu, mat.lam, 2.0 * mat.mu)
                stats = stats.merge(st)
        return p, stats

    def elastic_energy(self, x: np.ndarray) -> float:
        """``sum_e psi(F_e) vol_e``; for ARAP the distance-to-rotation energy."""
        if self.elements.shape[0] == 0:
            return 0.0
        F = self.deformation_gradients(x)
        total = 0.0
        for mat, sel in self._groups():
            total += float(np.dot(psi(mat.kind, F[sel], mat.mu, mat.lam), self.rest_volume[sel]))
        return total


def rest_shape_matrix(V: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Edge matrix ``D_m``: 3x3 for tets, 2x2 in an in-plane frame for triangles."""
    E = V[T[:, 1:]] - V[T[:, :1]]  # (E, d, 3), rows are edges
    if T.shape[1] == 4:
        return np.swapaxes(E, 1, 2)
    e1, e2 = E[:, 0], E[:, 1]
    l1 = np.linalg.norm(e1, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = e1 / l1[:, None]
        n = np.cross(e1, e2)
        n /= np.linalg.norm(n, axis=1)[:, None]
    v = np.cross(n, u)
    Dm = np.empty((T.shape[0], 2, 2))
    Dm[:, 0, 0] = l1
    Dm[:, 1, 0] = 0.0
    Dm[:, 0, 1] = np.einsum("ij,ij->i", e2, u)
    Dm[:, 1, 1] = np.einsum("ij,ij->i", e2, v)
    return np.nan_to_num(Dm)


def scalar_stiffness(model: FemModel) -> sp.csr_array:
    """``L[a, b] = sum_e w_e B[e, a, :] . B[e, b, :]`` over vertices."""
    m = model.n_vertices
    T = model.elements
    if T.shape[0] == 0:
        return sp.csr_array((m, m))
    local = np.einsum("e,eaj,ebj->eab", model.weight, model.B, model.B)
    k = T.shape[1]
    rows = np.repeat(T, k, axis=1).ravel()
    cols = np.tile(T, (1, k)).ravel()
    return as_sparse(sp.coo_array((local.ravel(), (rows, cols)), shape=(m, m)))


def elastic_matrix(model: FemModel) -> sp.csr_array:
    """``sum_e w_e G_e^T G_e`` on the flat DOFs."""
    return as_sparse(sp.kron(scalar_stiffness(model), sp.eye_array(3), format="csr"))


def mass_matrix(model: FemModel) -> sp.csr_array:
    return as_sparse(sp.diags_array(np.repeat(model.mass, 3)))


def build_full_system(model: FemModel, h: float) -> sp.csr_array:
    if not h > 0:
        raise ValueError(f"time step must be positive, got {h}")
    return as_sparse(mass_matrix(model) + h * h * elastic_matrix(model))


def build_system(model: FemModel, h: float) -> sp.csr_array:
    """``A = M + h^2 sum w G^T G`` with pinned rows and columns replaced by identity."""
    A = build_full_system(model, h)
    return _eliminate(A, model.pinned_dofs)


def _eliminate(A: sp.csr_array, dofs: np.ndarray) -> sp.csr_array:
    if dofs.size == 0:
        return A
    keep = np.ones(A.shape[0])
    keep[dofs] = 0.0
    S = sp.diags_array(keep)
    unit = sp.diags_array(1.0 - keep)
    A = as_sparse(S @ A @ S + unit)
    A.eliminate_zeros()
    return A


@dataclass(frozen=True)
class GlobalSystem:
    """Prefactored global system for one model and time step.

    ``A`` is the Dirichlet-reduced matrix and ``K`` its sparse inverse.
    ``coupling`` holds the free-row entries of the original matrix in the
    pinned columns; ``impose`` moves the pinned targets to the right-hand side.
    """

    A: sp.csr_array
    K: SparseInverse
    h: float
    pinned_dofs: np.ndarray
    coupling: sp.csr_array

    @classmethod
    def build(cls, model: FemModel, h: float) -> "GlobalSystem":
        full = build_full_system(model, h)
        dofs = model.pinned_dofs
        A = _eliminate(full, dofs)
        perm = reorder_fill_reducing(A)
        _, K = factorize_and_invert(A, perm)
        if dofs.size:
            free = np.ones(A.shape[0])
            free[dofs] = 0.0
            coupling = as_sparse(sp.diags_array(free) @ full[:, dofs])
        else:
            coupling = sp.csr_array((A.shape[0], 0))
        return cls(A, K, float(h), dofs, coupling)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def impose(self, b: np.ndarray, targets: np.ndarray | None) -> np.ndarray:
        """Substitute pinned targets (``(p, 3)`` positions) into a flat RHS."""
        if self.pinned_dofs.size == 0:
            return b
        q = np.asarray(targets, dtype=float).ravel()
        out = b - self.coupling @ q
        out[self.pinned_dofs] = q
        return out

    def solve(self, b: np.ndarray) -> np.ndarray:
        return apply_inverse(self.K, b)

    def checksum(self) -> str:
        hsh = hashlib.sha256()
        for M in (self.A, self.K.K, self.K.KT):
            for arr in (M.indptr, M.indices, M.data):
                hsh.update(np.ascontiguousarray(arr).tobytes())
        hsh.update(self.K.perm.tobytes())
        return hsh.hexdigest()


def predict(x_t, v_t, f_ext, h: float, mass) -> np.ndarray:
    """``s = x_t + h v_t + h^2 M^-1 f_ext`` on ``(m, 3)`` arrays."""
    x_t = np.asarray(x_t, dtype=float)
    m = np.asarray(mass, dtype=float).reshape(-1, *([1] * (x_t.ndim - 1)))
    return x_t + h * np.asarray(v_t, dtype=float) + (h * h) * np.asarray(f_ext, dtype=float) / m


def gravity_forces(model: FemModel, g=GRAVITY) -> np.ndarray:
    return model.mass[:, None] * np.asarray(g, dtype=float)[None, :]


def _scatter(model: FemModel) -> sp.csr_array:
    T = model.elements
    n = T.size
    return sp.csr_array((np.ones(n), (T.ravel(), np.arange(n))), shape=(model.n_vertices, n))


def assemble_rhs(model: FemModel, s: np.ndarray, projections: np.ndarray, h: float, scatter=None) -> np.ndarray:
    """Flat ``b = M s + h^2 sum_e w_e G_e^T p_e``."""
    s = np.asarray(s, dtype=float).reshape(-1, 3)
    b = model.mass[:, None] * s
    if model.elements.shape[0]:
        p = np.asarray(projections, dtype=float)
        contrib = np.einsum("e,ekj,ecj->ekc", model.weight, model.B, p).reshape(-1, 3)
        S = _scatter(model) if scatter is None else scatter
        b = b + (h * h) * (S @ contrib)
    return b.ravel()


def rhs_assembler(model: FemModel):
    """Closure over a cached scatter matrix for repeated RHS assembly."""
    S = _scatter(model)

    def assemble(s, projections, h):
        return assemble_rhs(model, s, projections, h, scatter=S)

    return assemble


def energy_eval(model: FemModel, x: np.ndarray, s: np.ndarray, h: float) -> float:
    """Implicit-Euler objective ``1/(2h^2) |x - s|_M^2 + sum_e psi(F_e) vol_e``."""
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    s = np.asarray(s, dtype=float).reshape(-1, 3)
    d = x - s
    inertia = 0.5 / (h * h) * float(np.dot(model.mass, np.einsum("ij,ij->i", d, d)))
    return inertia + model.elastic_energy(x)
