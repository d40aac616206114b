"""Per-element local projections.

ARAP projects onto rotations in closed form.  The corotational and
Neo-Hookean projections minimise

    (w/2) |p - F|^2 + psi(p)

with a small compiled L-BFGS solver, one element at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import ARAP, COROTATIONAL, NEOHOOKEAN, lbfgs_batch
from .materials import MaterialKind, closest_rotation, psi, psi_gradient

LBFGS_MEMORY = 8
LBFGS_MAX_ITERS = 32
LBFGS_GRAD_TOL = 1e-8  # relative to w
ARMIJO_C = 1e-4
MAX_HALVINGS = 40

_KIND_CODES = {MaterialKind.ARAP: ARAP, MaterialKind.COROTATIONAL: COROTATIONAL, MaterialKind.NEOHOOKEAN: NEOHOOKEAN}


@dataclass
class LocalSolveStats:
    max_residual: float = 0.0  # max |grad| / w over elements
    n_unconverged: int = 0
    iterations: int = 0

    def merge(self, other: "LocalSolveStats") -> "LocalSolveStats":
        return LocalSolveStats(
            max(self.max_residual, other.max_residual),
            self.n_unconverged + other.n_unconverged,
            max(self.iterations, other.iterations),
        )


def project_arap(F: np.ndarray) -> np.ndarray:
    """Closest rotation (or orthonormal 3x2 frame for membranes)."""
    return closest_rotation(np.asarray(F, dtype=float))


def project_corotational(F, mu: float, lam: float, w: float, *, return_stats: bool = False):
    return _project_generic(MaterialKind.COROTATIONAL, F, mu, lam, w, return_stats)


def project_neohookean(F, mu: float, lam: float, w: float, *, return_stats: bool = False):
    return _project_generic(MaterialKind.NEOHOOKEAN, F, mu, lam, w, return_stats)


def _project_generic(kind, F, mu, lam, w, return_stats):
    F = np.asarray(F, dtype=float)
    single = F.ndim == 2
    Fb = F[None] if single else F
    p, stats = minimize_proximal(kind, Fb, mu, lam, w)
    p = p[0] if single else p
    return (p, stats) if return_stats else p


def local_objective(kind, p, F, mu, lam, w):
    d = p - F
    f = 0.5 * w * np.einsum("eij,eij->e", d, d) + psi(kind, p, mu, lam)
    return f


def local_gradient(kind, p, F, mu, lam, w):
    return w * (p - F) + psi_gradient(kind, p, mu, lam)


def minimize_proximal(
    kind: MaterialKind,
    F: np.ndarray,
    mu: float,
    lam: float,
    w: float,
    max_iters: int = LBFGS_MAX_ITERS,
    memory: int = LBFGS_MEMORY,
) -> tuple[np.ndarray, LocalSolveStats]:
    """Per-element L-BFGS for ``argmin_p (w/2)|p - F|^2 + psi(p)`` over ``(E, 3, d)`` inputs.

    Each element starts from ``p = F`` (or its closest rotation when ``psi(F)``
    is undefined) and stops once ``|grad| <= 1e-8 w``.
    """
    F = np.ascontiguousarray(F, dtype=float)
    E = F.shape[0]
    if E == 0:
        return F.copy(), LocalSolveStats()
    code = _KIND_CODES[MaterialKind(kind)]
    tol = LBFGS_GRAD_TOL * w
    p, gnorm, failed, iters = lbfgs_batch(
        code, F, float(mu), float(lam), float(w), max_iters, memory, tol, ARMIJO_C, MAX_HALVINGS
    )
    stats = LocalSolveStats(
        max_residual=float(gnorm.max() / w),
        n_unconverged=int(np.count_nonzero((gnorm > tol) | failed)),
        iterations=int(iters.max()),
    )
    return p, stats
