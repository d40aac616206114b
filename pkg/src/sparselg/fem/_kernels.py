"""Compiled per-element kernels for the local step.

Material codes: 0 = ARAP, 1 = corotational, 2 = Neo-Hookean.  Matrices are
``3 x d`` with ``d`` in {2, 3}; flattening is row-major, matching numpy.
"""

from __future__ import annotations

import numba
import numpy as np

ARAP, COROTATIONAL, NEOHOOKEAN = 0, 1, 2


@numba.njit(cache=True)
def _rotation(P):
    d = P.shape[1]
    if d == 2:
        # Polar factor P C^-1/2 with the closed-form square root of a 2x2 SPD matrix.
        c00 = c01 = c11 = 0.0
        for i in range(3):
            c00 += P[i, 0] * P[i, 0]
            c01 += P[i, 0] * P[i, 1]
            c11 += P[i, 1] * P[i, 1]
        det = c00 * c11 - c01 * c01
        if det > 1e-30 * (c00 + c11) ** 2:
            sd = np.sqrt(det)
            t = np.sqrt(c00 + c11 + 2.0 * sd)
            s00, s01, s11 = (c00 + sd) / t, c01 / t, (c11 + sd) / t
            sdet = s00 * s11 - s01 * s01
            i00, i01, i11 = s11 / sdet, -s01 / sdet, s00 / sdet
            R = np.empty((3, 2))
            for i in range(3):
                R[i, 0] = P[i, 0] * i00 + P[i, 1] * i01
                R[i, 1] = P[i, 0] * i01 + P[i, 1] * i11
            return R
    elif np.linalg.det(P) > 1e-12 * max(1.0, np.sum(P * P)) ** 1.5:
        # Scaled Newton iteration for the polar factor; it is a rotation since det > 0.
        X = P.copy()
        for _ in range(50):
            cof = np.empty((3, 3))
            for i in range(3):
                i1, i2 = (i + 1) % 3, (i + 2) % 3
                cof[i, 0] = X[i1, 1] * X[i2, 2] - X[i2, 1] * X[i1, 2]
                cof[i, 1] = X[i1, 2] * X[i2, 0] - X[i2, 2] * X[i1, 0]
                cof[i, 2] = X[i1, 0] * X[i2, 1] - X[i2, 0] * X[i1, 1]
            det = X[0, 0] * cof[0, 0] + X[1, 0] * cof[1, 0] + X[2, 0] * cof[2, 0]
            zeta = abs(det) ** (-1.0 / 3.0)
            Xn = 0.5 * (zeta * X + cof / (zeta * det))  # X^-T = cof / det
            delta = np.sum((Xn - X) ** 2)
            X = Xn
            if delta < 1e-30:
                break
        return X
    U, _, Vt = np.linalg.svd(P)
    R = np.ascontiguousarray(U[:, :d]) @ Vt
    if d == 3 and np.linalg.det(R) < 0.0:
        U2 = U.copy()
        U2[:, 2] = -U2[:, 2]
        R = U2 @ Vt
    return R


@numba.njit(cache=True)
def _volume_ratio_grad(P, dJ):
    d = P.shape[1]
    if d == 3:
        for i in range(3):
            i1, i2 = (i + 1) % 3, (i + 2) % 3
            # column 0: cross(col1, col2), etc.
            dJ[i, 0] = P[i1, 1] * P[i2, 2] - P[i2, 1] * P[i1, 2]
            dJ[i, 1] = P[i1, 2] * P[i2, 0] - P[i2, 2] * P[i1, 0]
            dJ[i, 2] = P[i1, 0] * P[i2, 1] - P[i2, 0] * P[i1, 1]
        J = 0.0
        for i in range(3):
            J += P[i, 0] * dJ[i, 0]
        return J
    c00 = c01 = c11 = 0.0
    for i in range(3):
        c00 += P[i, 0] * P[i, 0]
        c01 += P[i, 0] * P[i, 1]
        c11 += P[i, 1] * P[i, 1]
    det = c00 * c11 - c01 * c01
    J = np.sqrt(det) if det > 0.0 else 0.0
    if J > 0.0:
        # J * P * C^-1
        i00, i01, i11 = c11 / det, -c01 / det, c00 / det
        for i in range(3):
            dJ[i, 0] = J * (P[i, 0] * i00 + P[i, 1] * i01)
            dJ[i, 1] = J * (P[i, 0] * i01 + P[i, 1] * i11)
    else:
        dJ[:, :] = 0.0
    return J


@numba.njit(cache=True)
def psi_grad_kernel(kind, P, mu, lam, grad):
    """Energy density at ``P``; writes its gradient into ``grad``.  ``inf`` if undefined."""
    d = P.shape[1]
    dJ = np.empty((3, d))
    J = _volume_ratio_grad(P, dJ)
    if kind == NEOHOOKEAN:
        if not J > 0.0:
            grad[:, :] = 0.0
            return np.inf
        logJ = np.log(J)
        tr = 0.0
        for i in range(3):
            for j in range(d):
                tr += P[i, j] * P[i, j]
        c = (lam * logJ - mu) / J
        for i in range(3):
            for j in range(d):
                grad[i, j] = mu * P[i, j] + c * dJ[i, j]
        return 0.5 * mu * (tr - d) - mu * logJ + 0.5 * lam * logJ * logJ
    R = _rotation(P)
    val = 0.0
    for i in range(3):
        for j in range(d):
            diff = P[i, j] - R[i, j]
            val += mu * diff * diff
            grad[i, j] = 2.0 * mu * diff
    if kind == COROTATIONAL:
        c = lam * (J - 1.0)
        val += 0.5 * lam * (J - 1.0) ** 2
        for i in range(3):
            for j in range(d):
                grad[i, j] += c * dJ[i, j]
    return val


@numba.njit(cache=True)
def _objective(kind, x, F, mu, lam, w, d, g):
    P = x.reshape(3, d)
    G = np.empty((3, d))
    val = psi_grad_kernel(kind, P, mu, lam, G)
    Gf = G.reshape(-1)
    f = val
    for i in range(x.size):
        diff = x[i] - F[i]
        f += 0.5 * w * diff * diff
        g[i] = w * diff + Gf[i]
    return f


@numba.njit(cache=True)
def lbfgs_batch(kind, F, mu, lam, w, max_iters, memory, tol, armijo_c, max_halvings):
    """Per-element L-BFGS on ``(w/2)|p - F|^2 + psi(p)``.

    Returns ``(p, grad_norm, failed, iterations)``.
    """
    E, _, d = F.shape
    n = 3 * d
    out = np.empty_like(F)
    gnorms = np.zeros(E)
    failed = np.zeros(E, dtype=np.bool_)
    iters = np.zeros(E, dtype=np.int64)
    S = np.zeros((memory, n))
    Y = np.zeros((memory, n))
    rho = np.zeros(memory)
    alpha = np.zeros(memory)
    g = np.empty(n)
    g_new = np.empty(n)
    for e in range(E):
        Fe = F[e].copy().reshape(-1)
        x = Fe.copy()
        f = _objective(kind, x, Fe, mu, lam, w, d, g)
        if not np.isfinite(f):
            x = _rotation(F[e].copy()).copy().reshape(-1)
            f = _objective(kind, x, Fe, mu, lam, w, d, g)
        S[:, :] = 0.0
        Y[:, :] = 0.0
        rho[:] = 0.0
        count = 0
        slot = 0
        gn = np.sqrt(np.sum(g * g))
        it = 0
        while gn > tol and it < max_iters:
            it += 1
            q = g.copy()
            m = min(count, memory)
            for j in range(m):
                k = (slot - 1 - j) % memory
                alpha[k] = rho[k] * np.dot(S[k], q)
                q -= alpha[k] * Y[k]
            gamma = 1.0 / w
            if m > 0:
                k = (slot - 1) % memory
                yy = np.dot(Y[k], Y[k])
                if yy > 0.0 and rho[k] > 0.0:
                    gamma = np.dot(S[k], Y[k]) / yy
            r = gamma * q
            for j in range(m - 1, -1, -1):
                k = (slot - 1 - j) % memory
                beta = rho[k] * np.dot(Y[k], r)
                r += S[k] * (alpha[k] - beta)
            direction = -r
            slope = np.dot(g, direction)
            if not slope < 0.0:
                direction = -g / w
                slope = np.dot(g, direction)
            t = 1.0
            accepted = False
            x_new = x.copy()
            f_new = f
            for _ in range(max_halvings):
                x_new = x + t * direction
                f_new = _objective(kind, x_new, Fe, mu, lam, w, d, g_new)
                if np.isfinite(f_new):
                    if f_new <= f + armijo_c * t * slope:
                        accepted = True
                        break
                    # Near the optimum the decrease drops below the rounding
                    # level of f; fall back to a gradient-norm decrease there.
                    if abs(f_new - f) <= 1e-13 * max(1.0, abs(f)) and np.sum(g_new * g_new) < gn * gn:
                        accepted = True
                        break
                t *= 0.5
            if not accepted:
                failed[e] = True
                break
            s_vec = x_new - x
            y_vec = g_new - g
            sy = np.dot(s_vec, y_vec)
            if sy > 1e-300:
                S[slot] = s_vec
                Y[slot] = y_vec
                rho[slot] = 1.0 / sy
                slot = (slot + 1) % memory
                count += 1
            x = x_new
            f = f_new
            g[:] = g_new
            gn = np.sqrt(np.sum(g * g))
        out[e] = x.reshape(3, d)
        gnorms[e] = gn
        iters[e] = it
    return out, gnorms, failed, iters
