"""Sparse Cholesky factorization and explicit inversion of the factor.

The factor is computed row by row (up-looking), with each row's pattern
found by walking the elimination tree.  ``invert_factor`` then builds
``K = L^-1`` column by column: column ``k`` of ``K`` is the solution of
``L z = e_k``, whose nonzeros are exactly ``k`` and its ancestors in the
elimination tree, so each column is a forward substitution along one
root path.  A global solve becomes ``x = P^T K^T K P b``: two SpMVs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from .matrix import DimensionError, SparseMatrix, as_sparse
from .ordering import is_permutation

ROOT = -1


class IndefiniteMatrixError(ValueError):
    """Raised when a pivot is not strictly positive."""

    def __init__(self, column: int, pivot: float):
        super().__init__(f"matrix is not positive definite: pivot {pivot:.6g} at column {column}")
        self.column = column
        self.pivot = pivot


class SingularFactorError(ValueError):
    pass


@dataclass(frozen=True)
class CholeskyFactor:
    """``P A P^T = L L^T`` with ``(P v) = v[perm]``."""

    L: SparseMatrix
    perm: np.ndarray
    parent: np.ndarray
    # Column-compressed copy of L, used by the inversion kernel.
    _csc: tuple = field(repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.L.shape[0]


@dataclass(frozen=True)
class SparseInverse:
    """``K = L^-1`` (lower triangular) together with the factor's permutation."""

    K: SparseMatrix
    perm: np.ndarray
    KT: SparseMatrix = field(repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.K.shape[0]


@numba.njit(cache=True)
def _etree_lower_rows(indptr, indices, n):
    # CSparse cs_etree on the lower triangle stored by rows.
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for p in range(indptr[k], indptr[k + 1]):
            i = indices[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent


@numba.njit(cache=True)
def _ereach(indptr, indices, k, parent, stack, path, mark, tag):
    # Pattern of row k of L (columns < k), returned in topological order in stack[top:n].
    n = parent.shape[0]
    top = n
    mark[k] = tag
    for p in range(indptr[k], indptr[k + 1]):
        i = indices[p]
        if i >= k:
            continue
        length = 0
        while mark[i] != tag:
            path[length] = i
            length += 1
            mark[i] = tag
            i = parent[i]
        while length > 0:
            top -= 1
            length -= 1
            stack[top] = path[length]
    return top


@numba.njit(cache=True)
def _symbolic_counts(indptr, indices, parent, n):
    counts = np.ones(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    path = np.empty(n, dtype=np.int64)
    mark = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        top = _ereach(indptr, indices, k, parent, stack, path, mark, k)
        for t in range(top, n):
            counts[stack[t]] += 1
    return counts


@numba.njit(cache=True)
def _numeric_cholesky(indptr, indices, data, parent, colptr, n):
    nnz = colptr[n]
    Li = np.empty(nnz, dtype=np.int64)
    Lx = np.empty(nnz, dtype=np.float64)
    nxt = colptr[:n].copy()
    x = np.zeros(n, dtype=np.float64)
    stack = np.empty(n, dtype=np.int64)
    path = np.empty(n, dtype=np.int64)
    mark = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        top = _ereach(indptr, indices, k, parent, stack, path, mark, k)
        x[k] = 0.0
        for p in range(indptr[k], indptr[k + 1]):
            if indices[p] <= k:
                x[indices[p]] = data[p]
        d = x[k]
        x[k] = 0.0
        for t in range(top, n):
            i = stack[t]
            lki = x[i] / Lx[colptr[i]]
            x[i] = 0.0
            for p in range(colptr[i] + 1, nxt[i]):
                x[Li[p]] -= Lx[p] * lki
            d -= lki * lki
            Li[nxt[i]] = k
            Lx[nxt[i]] = lki
            nxt[i] += 1
        if not d > 0.0:
            return Li, Lx, k, d
        Li[nxt[k]] = k
        Lx[nxt[k]] = np.sqrt(d)
        nxt[k] += 1
    return Li, Lx, -1, 0.0


@numba.njit(cache=True)
def _invert_lower_csc(colptr, Li, Lx, parent, n):
    depth = np.zeros(n, dtype=np.int64)
    for k in range(n - 1, -1, -1):
        depth[k] = 1 if parent[k] == -1 else depth[parent[k]] + 1
    Kp = np.zeros(n + 1, dtype=np.int64)
    for k in range(n):
        Kp[k + 1] = Kp[k] + depth[k]
    Ki = np.empty(Kp[n], dtype=np.int64)
    Kx = np.empty(Kp[n], dtype=np.float64)
    z = np.zeros(n, dtype=np.float64)
    for k in range(n):
        # Column k of L^-1 lives on the root path of k; walk it in increasing order.
        z[k] = 1.0
        j = k
        q = Kp[k]
        while j != -1:
            djj = Lx[colptr[j]]
            if djj == 0.0:
                return Kp, Ki, Kx, j
            zj = z[j] / djj
            z[j] = 0.0
            for p in range(colptr[j] + 1, colptr[j + 1]):
                z[Li[p]] -= Lx[p] * zj
            Ki[q] = j
            Kx[q] = zj
            q += 1
            j = parent[j]
    return Kp, Ki, Kx, -1


def _lower_rows(C: sp.csr_array):
    lower = sp.tril(C, format="csr")
    lower.sort_indices()
    return (
        lower.indptr.astype(np.int64),
        lower.indices.astype(np.int64),
        lower.data.astype(np.float64),
    )


def symbolic_nnz(A, perm: np.ndarray | None = None) -> int:
    """Number of stored entries of ``L`` (diagonal included) under ``perm``."""
    A = as_sparse(A)
    n = A.shape[0]
    if perm is not None:
        A = as_sparse(A[perm][:, perm])
    indptr, indices, _ = _lower_rows(A)
    parent = _etree_lower_rows(indptr, indices, n)
    return int(_symbolic_counts(indptr, indices, parent, n).sum())


def etree_height(parent: np.ndarray) -> int:
    """Number of edges on the longest leaf-to-root path."""
    n = parent.size
    depth = np.zeros(n, dtype=np.int64)
    for k in range(n - 1, -1, -1):
        depth[k] = 0 if parent[k] == ROOT else depth[parent[k]] + 1
    return int(depth.max()) if n else 0


def cholesky(A, perm: np.ndarray | None = None) -> CholeskyFactor:
    """Factor ``P A P^T = L L^T``.

    No pivoting or diagonal shifts; a non-positive pivot raises
    ``IndefiniteMatrixError`` carrying the failing (permuted) column.
    """
    A = as_sparse(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionError(f"cholesky needs a square matrix, got {A.shape}")
    perm = np.arange(n, dtype=np.int64) if perm is None else np.asarray(perm, dtype=np.int64)
    if not is_permutation(perm, n):
        raise ValueError("perm is not a permutation of range(n)")
    C = as_sparse(A[perm][:, perm])
    indptr, indices, data = _lower_rows(C)
    parent = _etree_lower_rows(indptr, indices, n)
    counts = _symbolic_counts(indptr, indices, parent, n)
    colptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=colptr[1:])
    Li, Lx, bad, pivot = _numeric_cholesky(indptr, indices, data, parent, colptr, n)
    if bad >= 0:
        raise IndefiniteMatrixError(int(bad), float(pivot))
    L_csc = sp.csc_array((Lx, Li, colptr), shape=(n, n))
    L = as_sparse(L_csc)
    return CholeskyFactor(L=L, perm=perm, parent=elimination_tree(L), _csc=(colptr, Li, Lx))


def elimination_tree(L) -> np.ndarray:
    """``parent[j]`` = smallest row ``i > j`` with a stored ``L[i, j]``; ``ROOT`` if none."""
    L = sp.csc_array(L)
    n, m = L.shape
    if n != m:
        raise DimensionError(f"elimination tree needs a square factor, got {L.shape}")
    L.sort_indices()
    col = np.repeat(np.arange(n), np.diff(L.indptr))
    below = L.indices > col
    parent = np.full(n, ROOT, dtype=np.int64)
    # Rows are sorted within each column, so the first strictly-lower entry is the minimum.
    first = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(first, col[below], L.indices[below])
    has = first < np.iinfo(np.int64).max
    parent[has] = first[has]
    return parent


def invert_factor(F: CholeskyFactor) -> SparseInverse:
    """Explicit ``K = L^-1``, visiting only each column's elimination-tree root path."""
    colptr, Li, Lx = F._csc
    n = F.n
    Kp, Ki, Kx, bad = _invert_lower_csc(colptr, Li, Lx, F.parent, n)
    if bad >= 0:
        raise SingularFactorError(f"zero diagonal in factor at column {bad}")
    # CSC arrays of K read as CSR are exactly K^T.
    KT = sp.csr_array((Kx, Ki, Kp), shape=(n, n))
    K = as_sparse(KT.T)
    return SparseInverse(K=K, perm=F.perm, KT=as_sparse(KT))


def apply_inverse(Kinv: SparseInverse, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` as ``x = P^T K^T K P b``.  ``b`` may have several columns."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != Kinv.n:
        raise DimensionError(f"right-hand side has {b.shape[0]} rows, system has {Kinv.n}")
    y = Kinv.K @ b[Kinv.perm]
    w = Kinv.KT @ y
    x = np.empty_like(w)
    x[Kinv.perm] = w
    return x


def ancestor_closure(parent: np.ndarray) -> sp.csr_array:
    """Boolean pattern {(i, j): i == j or i is an ancestor of j}."""
    n = parent.size
    rows, cols = [], []
    for j in range(n):
        i = j
        while i != ROOT:
            rows.append(i)
            cols.append(j)
            i = parent[i]
    return sp.csr_array((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def factorize_and_invert(A, perm: np.ndarray | None = None) -> tuple[CholeskyFactor, SparseInverse]:
    F = cholesky(A, perm)
    return F, invert_factor(F)
