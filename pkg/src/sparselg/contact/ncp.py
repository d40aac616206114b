"""Non-smooth constrained global step.

Within one local-global iteration the constraint rows ``[b; n; f]`` are
linearised around ``x^k``.  With indicators ``theta`` (so that the non-smooth
Jacobian is ``H = Theta J``) and compliances ``E``, the multiplier increment
solves

    (Theta D Theta + Ebar) dlam = (h_vec - Theta J A^-1 g) / h^2,

    g     = b + h^2 J^T Theta lam^k
    h_b   = d_b - e_b lam_b
    h_n   = -phi_n + theta_n J_n x^k
    h_f   = -h phi_f + theta_f J_f x^k
    Ebar  = diag(e_b / h^2, E_n / h^2, E_f / h)

followed by ``x^{k+1} = A^-1 (b + h^2 J^T Theta lam^{k+1})``.  ``D = J A^-1 J^T``
is formed once per frame from the sparse inverse.

Friction is handled per contact: the two tangent rows share one indicator,
one compliance and one preconditioner value, and magnitudes are Euclidean
norms of the 2-vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..sparse import DimensionError, SparseInverse, apply_inverse, as_sparse
from .pipeline import ConstraintSet, gap_eval

FB_FRICTION_EPS = 1e-12


class NcpKind(str, Enum):
    MINIMUM_MAP = "minmap"
    FISCHER_BURMEISTER = "fb"


class PreconditionerKind(str, Enum):
    SYSTEM = "system"  # diag(J A^-1 J^T)
    MASS = "mass"  # diag(J M^-1 J^T)


@dataclass(frozen=True)
class DelassusOperator:
    D: sp.csr_array
    diag: np.ndarray


@dataclass(frozen=True)
class Preconditioner:
    r: np.ndarray  # per row; bilateral rows carry 0
    r_n: np.ndarray  # per contact
    r_f: np.ndarray  # per contact, shared by its two tangent rows


@dataclass(frozen=True)
class LambdaState:
    lam: np.ndarray
    theta: np.ndarray
    E: np.ndarray


@dataclass
class ConstraintSolveInfo:
    cr_iters: int = 0
    cr_residual: float = 0.0
    cr_breakdown: bool = False
    max_phi_n: float = 0.0
    max_cone_violation: float = 0.0
    max_penetration: float = 0.0
    active_contacts: int = 0
    fb_singular: int = 0


def delassus(J, K: SparseInverse) -> DelassusOperator:
    """``D = (K P J^T)^T (K P J^T)``."""
    J = as_sparse(J)
    if J.shape[1] != K.n:
        raise DimensionError(f"Jacobian has {J.shape[1]} columns, system has {K.n} DOFs")
    JT = as_sparse(J.T)
    W = as_sparse(K.K @ JT[K.perm])
    D = as_sparse(W.T @ W)
    return DelassusOperator(D=D, diag=D.diagonal().copy())


def mass_delassus_diagonal(J, mass_dofs: np.ndarray) -> np.ndarray:
    """``diag(J M^-1 J^T)`` for a lumped mass given per DOF."""
    J = as_sparse(J)
    Jsq = J.multiply(J)
    return np.asarray(Jsq @ (1.0 / np.asarray(mass_dofs, dtype=float))).ravel()


def preconditioner(diag: np.ndarray | DelassusOperator, h: float, cs: ConstraintSet) -> Preconditioner:
    """``r_n = h^2 D_jj`` on normal rows, ``r_f = h D_jj`` on friction rows."""
    d = diag.diag if isinstance(diag, DelassusOperator) else np.asarray(diag, dtype=float)
    if d.size != cs.n_rows:
        raise DimensionError(f"diagonal has {d.size} entries, constraint set has {cs.n_rows} rows")
    d_n = d[cs.sl_n]
    d_f = d[cs.sl_f].reshape(-1, 2).mean(axis=1) if cs.n_c else np.zeros(0)
    r_n = h * h * d_n
    r_f = h * d_f
    r = np.concatenate([np.zeros(cs.n_b), r_n, np.repeat(r_f, 2)])
    return Preconditioner(r=r, r_n=r_n, r_f=r_f)


def ncp_value(kind: NcpKind, y, lam, r):
    kind = NcpKind(kind)
    y, lam, r = (np.asarray(a, dtype=float) for a in (y, lam, r))
    if kind is NcpKind.MINIMUM_MAP:
        return np.minimum(y, r * lam)
    return y + r * lam - np.sqrt(y * y + (r * lam) ** 2)


def _contact_norms(v2: np.ndarray) -> np.ndarray:
    return np.linalg.norm(v2.reshape(-1, 2), axis=1)


def indicators_and_compliance(kind, y_n, hydot_f, lam_n, lam_f, mu, r_n, r_f, h):
    """Indicators and compliances for normal rows and (per-row) friction rows.

    Returns ``(theta_n, theta_f, E_n, E_f, n_singular)`` where ``theta_f`` and
    ``E_f`` have one entry per friction row and ``n_singular`` counts FB
    friction rows whose compliance denominator vanished.
    """
    kind = NcpKind(kind)
    y_n = np.asarray(y_n, dtype=float)
    lam_n = np.asarray(lam_n, dtype=float)
    r_n = np.asarray(r_n, dtype=float)
    r_f = np.asarray(r_f, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if kind is NcpKind.MINIMUM_MAP:
        gate = y_n <= r_n * lam_n
        theta_n = gate.astype(float)
        E_n = np.where(gate, 0.0, r_n)
    else:
        s = np.sqrt(y_n * y_n + (r_n * lam_n) ** 2)
        safe = s > 0
        s1 = np.where(safe, s, 1.0)
        theta_n = np.where(safe, 1.0 - y_n / s1, 1.0)
        E_n = np.where(safe, (1.0 - r_n * lam_n / s1) * r_n, 0.0)

    a = _contact_norms(np.asarray(hydot_f, dtype=float)) / h  # |ydot_f|
    lf = _contact_norms(np.asarray(lam_f, dtype=float))
    # A frictionless contact behaves like an inactive one for the tangent rows.
    active = (lam_n > 0) & (mu > 0)
    slack = r_f * (mu * lam_n - lf)
    n_singular = 0
    if kind is NcpKind.MINIMUM_MAP:
        slide = a > slack
        with np.errstate(divide="ignore", invalid="ignore"):
            e_slide = (a - slack) / (mu * lam_n)
        E_c = np.where(slide, e_slide, 0.0)
    else:
        root = np.sqrt(a * a + slack * slack)
        den = a + r_f * mu * lam_n - root
        ok = den > FB_FRICTION_EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            E_c = np.where(ok, (root - slack) / np.where(ok, den, 1.0) * r_f, 0.0)
        n_singular = int(np.count_nonzero(active & ~ok))
    E_c = np.where(active, E_c, 1.0)
    theta_c = active.astype(float)
    return theta_n, np.repeat(theta_c, 2), E_n, np.repeat(E_c, 2), n_singular


def schur_apply(D: sp.csr_array, theta: np.ndarray, Ebar: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """``y -> (Theta D Theta + Ebar) y`` without forming the product."""

    def apply(y):
        return theta * (D @ (theta * y)) + Ebar * y

    return apply


def conjugate_residual(apply, rhs: np.ndarray, max_iters: int, tol: float = 1e-8, x0=None):
    """Conjugate Residual for symmetric systems.  Returns ``(x, iters, rel_residual, breakdown)``."""
    rhs = np.asarray(rhs, dtype=float)
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    r = rhs - apply(x) if x0 is not None else rhs.copy()
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(rhs), 0, 0.0, False
    rel = np.linalg.norm(r) / bnorm
    if rel <= tol:
        return x, 0, float(rel), False
    Ar = apply(r)
    p, Ap = r.copy(), Ar.copy()
    rAr = r @ Ar
    it = 0
    breakdown = False
    for it in range(1, max_iters + 1):
        ApAp = Ap @ Ap
        if not ApAp > 1e-300 or not abs(rAr) > 1e-300:
            breakdown = True
            it -= 1
            break
        alpha = rAr / ApAp
        x += alpha * p
        r -= alpha * Ap
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            break
        Ar = apply(r)
        rAr_new = r @ Ar
        beta = rAr_new / rAr
        rAr = rAr_new
        p = r + beta * p
        Ap = Ar + beta * Ap
    return x, it, float(rel), breakdown


def cone_violation(lam_n: np.ndarray, lam_f: np.ndarray, mu: np.ndarray) -> np.ndarray:
    return np.maximum(_contact_norms(lam_f) - mu * lam_n, 0.0)


def project_multipliers(cs: ConstraintSet, lam: np.ndarray, cone: bool = True) -> np.ndarray:
    """Clamp ``lam_n >= 0`` (zeroing paired friction); optionally scale friction into the cone."""
    lam = lam.copy()
    if cs.n_c == 0:
        return lam
    lam_n = lam[cs.sl_n]
    lam_f = lam[cs.sl_f].reshape(-1, 2)
    clamped = lam_n <= 0
    lam_n[clamped] = 0.0
    lam_f[clamped] = 0.0
    if cone:
        norm = np.linalg.norm(lam_f, axis=1)
        bound = cs.mu * lam_n
        over = norm > bound
        scale = np.where(over, bound / np.where(norm > 0, norm, 1.0), 1.0)
        lam_f *= scale[:, None]
    lam[cs.sl_n] = lam_n
    lam[cs.sl_f] = lam_f.ravel()
    return lam


def solve_constraints(
    cs: ConstraintSet,
    x_k: np.ndarray,
    lam: np.ndarray,
    b: np.ndarray,
    K: SparseInverse,
    D: DelassusOperator,
    pre: Preconditioner,
    kind: NcpKind,
    h: float,
    cr_iters: int,
    cr_tol: float = 1e-8,
    project: bool = True,
) -> tuple[np.ndarray, np.ndarray, ConstraintSolveInfo]:
    """One constrained global step.  Returns ``(lam_new, x_new, info)``.

    ``b`` is the (pin-substituted) RHS ``M s + h^2 sum w G^T p``.
    """
    info = ConstraintSolveInfo()
    if cs.is_empty:
        return lam, apply_inverse(K, b), info
    x_k = np.asarray(x_k, dtype=float).ravel()
    y_b, y_n, hyd_f = gap_eval(cs, x_k)
    lam_b, lam_n, lam_f = lam[cs.sl_b], lam[cs.sl_n], lam[cs.sl_f]
    theta_n, theta_f, E_n, E_f, n_sing = indicators_and_compliance(
        kind, y_n, hyd_f, lam_n, lam_f, cs.mu, pre.r_n, pre.r_f, h
    )
    info.fb_singular = n_sing
    theta = np.concatenate([np.ones(cs.n_b), theta_n, theta_f])
    Ebar = np.concatenate([cs.e_b / h**2, E_n / h**2, E_f / h])

    phi_n = ncp_value(kind, y_n, lam_n, pre.r_n)
    phi_f = theta_f * (hyd_f / h) + E_f * lam_f
    Jx = cs.J @ x_k
    h_vec = np.concatenate(
        [
            cs.d_b - cs.e_b * lam_b,
            -phi_n + theta_n * Jx[cs.sl_n],
            -h * phi_f + theta_f * Jx[cs.sl_f],
        ]
    )
    if not (np.all(np.isfinite(h_vec)) and np.all(np.isfinite(Ebar))):
        raise FloatingPointError("non-finite constraint residual")
    g = b + h * h * (cs.J.T @ (theta * lam))
    rhs = (h_vec - theta * (cs.J @ apply_inverse(K, g))) / (h * h)
    dlam, its, res, brk = conjugate_residual(schur_apply(D.D, theta, Ebar), rhs, cr_iters, cr_tol)
    info.cr_iters, info.cr_residual, info.cr_breakdown = its, res, brk
    lam_new = lam + dlam
    if project:
        lam_new = project_multipliers(cs, lam_new)
    x_new = apply_inverse(K, b + h * h * (cs.J.T @ (theta * lam_new)))
    if not np.all(np.isfinite(x_new)):
        raise FloatingPointError("non-finite positions after constraint correction")

    _, y_n1, _ = gap_eval(cs, x_new)
    ln1 = lam_new[cs.sl_n]
    if cs.n_c:
        info.max_phi_n = float(np.max(np.abs(ncp_value(NcpKind.FISCHER_BURMEISTER, y_n1, ln1, pre.r_n))))
        info.max_cone_violation = float(np.max(cone_violation(ln1, lam_new[cs.sl_f], cs.mu)))
        info.max_penetration = float(max(0.0, -np.min(y_n1)))
        info.active_contacts = int(np.count_nonzero(ln1 > 0))
    return lam_new, x_new, info
