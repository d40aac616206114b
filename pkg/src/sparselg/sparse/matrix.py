"""Compressed sparse row matrices and the two product kernels everything else uses.

Matrices are plain ``scipy.sparse.csr_array`` objects kept in canonical form
(sorted column indices, no duplicates, finite values).  ``as_sparse`` is the
single gate that enforces this.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

SparseMatrix = sp.csr_array


class DimensionError(ValueError):
    pass


def as_sparse(A, shape: tuple[int, int] | None = None) -> SparseMatrix:
    """Return ``A`` as a canonical CSR array.

    Accepts anything scipy can turn into a sparse array (dense arrays,
    other sparse formats).  Raises ``ValueError`` on NaN/Inf entries.
    """
    if sp.issparse(A):
        M = sp.csr_array(A, dtype=np.float64)
    else:
        M = sp.csr_array(np.atleast_2d(np.asarray(A, dtype=np.float64)))
    if shape is not None and M.shape != tuple(shape):
        raise DimensionError(f"expected shape {shape}, got {M.shape}")
    M.sum_duplicates()
    M.sort_indices()
    if not np.all(np.isfinite(M.data)):
        raise ValueError("sparse matrix holds non-finite entries")
    M.indptr = M.indptr.astype(np.int64, copy=False)
    M.indices = M.indices.astype(np.int64, copy=False)
    return M


def from_triplets(rows, cols, vals, shape: tuple[int, int]) -> SparseMatrix:
    """Assemble from COO triplets; duplicate (row, col) pairs are summed."""
    M = sp.coo_array(
        (np.asarray(vals, dtype=np.float64), (np.asarray(rows), np.asarray(cols))),
        shape=shape,
    )
    return as_sparse(M)


def identity(n: int) -> SparseMatrix:
    return as_sparse(sp.identity(n, format="csr"))


def transpose(A: SparseMatrix) -> SparseMatrix:
    return as_sparse(A.T)


def spmv(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """y = A x.  ``x`` may carry extra trailing columns (multiple right-hand sides)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != A.shape[1]:
        raise DimensionError(f"cannot multiply {A.shape} matrix by vector of length {x.shape[0]}")
    return A @ x


def spgemm(A: SparseMatrix, B: SparseMatrix) -> SparseMatrix:
    if A.shape[1] != B.shape[0]:
        raise DimensionError(f"inner dimensions differ: {A.shape} x {B.shape}")
    return as_sparse(A @ B)


def write_matrix_market(A: SparseMatrix, path: str | Path) -> None:
    """Debug dump in Matrix Market coordinate format (1-based indices)."""
    C = sp.coo_array(A)
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for i, j, v in zip(C.row, C.col, C.data):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def read_matrix_market(path: str | Path) -> SparseMatrix:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("%%MatrixMarket matrix coordinate real"):
            raise ValueError(f"unsupported Matrix Market header: {header.strip()}")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        n_rows, n_cols, nnz = (int(t) for t in line.split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    return from_triplets(data[:, 0].astype(int) - 1, data[:, 1].astype(int) - 1, data[:, 2], (n_rows, n_cols))
