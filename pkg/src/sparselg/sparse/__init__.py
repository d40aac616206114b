"""Sparse SPD linear algebra: ordering, Cholesky, explicit factor inverse, SpMV/SpGEMM."""

from .cholesky import (
    ROOT,
    CholeskyFactor,
    IndefiniteMatrixError,
    SingularFactorError,
    SparseInverse,
    ancestor_closure,
    apply_inverse,
    cholesky,
    elimination_tree,
    etree_height,
    factorize_and_invert,
    invert_factor,
    symbolic_nnz,
)
from .matrix import (
    DimensionError,
    SparseMatrix,
    as_sparse,
    from_triplets,
    identity,
    read_matrix_market,
    spgemm,
    spmv,
    transpose,
    write_matrix_market,
)
from .ordering import inverse_permutation, is_permutation, reorder_fill_reducing
