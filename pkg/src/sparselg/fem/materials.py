"""Isotropic elastic densities and their gradients, batched over elements.

All functions take deformation gradients of shape ``(..., 3, d)`` with
``d = 3`` for tetrahedra and ``d = 2`` for membrane triangles.  Densities
are per unit rest volume.

* ARAP:          mu |F - R(F)|^2
* corotational:  mu |F - R(F)|^2 + lam/2 (J - 1)^2
* Neo-Hookean:   mu/2 (tr F^T F - d) - mu log J + lam/2 log^2 J

``R(F)`` is the closest rotation (3x3) or closest matrix with orthonormal
columns (3x2), and ``J`` is ``det F`` for 3x3 and ``sqrt(det F^T F)`` for 3x2.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class MaterialKind(str, Enum):
    ARAP = "arap"
    COROTATIONAL = "corotational"
    NEOHOOKEAN = "neohookean"


@dataclass(frozen=True)
class Material:
    kind: MaterialKind
    density: float  # kg/m^3
    youngs: float  # Pa
    poisson: float
    # Only used by triangle meshes: converts areas into volumes.
    thickness: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "kind", MaterialKind(self.kind))
        if not 0.0 <= self.poisson < 0.5:
            raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {self.poisson}")
        if self.density <= 0 or self.youngs <= 0 or self.thickness <= 0:
            raise ValueError("density, Young's modulus and thickness must be positive")

    @property
    def mu(self) -> float:
        return self.youngs / (2.0 * (1.0 + self.poisson))

    @property
    def lam(self) -> float:
        nu = self.poisson
        return self.youngs * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))


def closest_rotation(F: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm (3x3), or nearest orthonormal-column matrix (3x2)."""
    U, _, Vt = np.linalg.svd(F, full_matrices=False)
    if F.shape[-1] == 3:
        d = np.sign(np.linalg.det(U @ Vt))
        d = np.where(d == 0, 1.0, d)
        U = U.copy()
        U[..., :, 2] *= d[..., None]
    return U @ Vt


def _gram(F):
    return np.swapaxes(F, -1, -2) @ F


def volume_ratio(F: np.ndarray) -> np.ndarray:
    if F.shape[-1] == 3:
        return np.linalg.det(F)
    return np.sqrt(np.maximum(np.linalg.det(_gram(F)), 0.0))


def volume_ratio_gradient(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(J, dJ/dF).  For 3x3 this is the cofactor matrix, valid for any sign of J."""
    if F.shape[-1] == 3:
        c0 = np.cross(F[..., :, 1], F[..., :, 2])
        c1 = np.cross(F[..., :, 2], F[..., :, 0])
        c2 = np.cross(F[..., :, 0], F[..., :, 1])
        cof = np.stack([c0, c1, c2], axis=-1)
        J = np.einsum("...i,...i->...", F[..., :, 0], c0)
        return J, cof
    C = _gram(F)
    detC = np.linalg.det(C)
    J = np.sqrt(np.maximum(detC, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        dJ = J[..., None, None] * (F @ np.linalg.inv(C))
    return J, dJ


def psi(kind: MaterialKind, F: np.ndarray, mu: float, lam: float) -> np.ndarray:
    """Energy density; ``inf`` where Neo-Hookean is undefined (J <= 0)."""
    kind = MaterialKind(kind)
    if kind is MaterialKind.NEOHOOKEAN:
        d = F.shape[-1]
        J = volume_ratio(F)
        with np.errstate(divide="ignore", invalid="ignore"):
            logJ = np.log(J)
            val = 0.5 * mu * (np.einsum("...ij,...ij->...", F, F) - d) - mu * logJ + 0.5 * lam * logJ**2
        return np.where(J > 0, val, np.inf)
    diff = F - closest_rotation(F)
    val = mu * np.einsum("...ij,...ij->...", diff, diff)
    if kind is MaterialKind.COROTATIONAL:
        val = val + 0.5 * lam * (volume_ratio(F) - 1.0) ** 2
    return val


def psi_gradient(kind: MaterialKind, F: np.ndarray, mu: float, lam: float) -> np.ndarray:
    kind = MaterialKind(kind)
    if kind is MaterialKind.NEOHOOKEAN:
        J, dJ = volume_ratio_gradient(F)
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = (lam * np.log(J) - mu) / J
        return mu * F + coef[..., None, None] * dJ
    grad = 2.0 * mu * (F - closest_rotation(F))
    if kind is MaterialKind.COROTATIONAL:
        J, dJ = volume_ratio_gradient(F)
        grad = grad + (lam * (J - 1.0))[..., None, None] * dJ
    return grad


def psi_and_gradient(kind: MaterialKind, F: np.ndarray, mu: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """``(psi(F), dpsi/dF)`` sharing one decomposition and one volume-ratio evaluation."""
    kind = MaterialKind(kind)
    J, dJ = volume_ratio_gradient(F)
    if kind is MaterialKind.NEOHOOKEAN:
        d = F.shape[-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            logJ = np.log(J)
            val = 0.5 * mu * (np.einsum("...ij,...ij->...", F, F) - d) - mu * logJ + 0.5 * lam * logJ**2
            grad = mu * F + ((lam * logJ - mu) / J)[..., None, None] * dJ
        return np.where(J > 0, val, np.inf), grad
    diff = F - closest_rotation(F)
    val = mu * np.einsum("...ij,...ij->...", diff, diff)
    grad = 2.0 * mu * diff
    if kind is MaterialKind.COROTATIONAL:
        val = val + 0.5 * lam * (J - 1.0) ** 2
        grad = grad + (lam * (J - 1.0))[..., None, None] * dJ
    return val, grad
