"""Fill-reducing symmetric orderings.

``reorder_fill_reducing`` runs a nested dissection on the adjacency graph of a
symmetric matrix: each connected piece is split by the middle level of a BFS
level structure rooted at a pseudo-peripheral node, the two halves are ordered
recursively and the separator goes last.  Small pieces fall back to a plain
minimum-degree elimination.  Disconnected components (e.g. the three
coordinate blocks of a vector FEM system) are ordered independently, so their
elimination trees never share ancestors.

Permutation convention: ``perm[k]`` is the original index placed at position
``k``, i.e. the permuted matrix is ``A[perm][:, perm]``.
"""

from __future__ import annotations

import heapq

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

LEAF_SIZE = 48


def adjacency(A) -> sp.csr_array:
    """Symmetric off-diagonal pattern of ``A`` as a 0/1 CSR array."""
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"ordering needs a square matrix, got {A.shape}")
    G = sp.csr_array(A, dtype=np.float64, copy=True)
    G.data = np.ones_like(G.data)
    G = (G + G.T).tocsr()
    G.setdiag(0)
    G.eliminate_zeros()
    G.data[:] = 1.0
    return G


def reorder_fill_reducing(A, leaf_size: int = LEAF_SIZE) -> np.ndarray:
    """Nested-dissection permutation of a square, structurally symmetric matrix."""
    G = adjacency(A)
    n = G.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    order: list[np.ndarray] = []
    _dissect(G, np.arange(n, dtype=np.int64), leaf_size, order)
    perm = np.concatenate(order)
    assert perm.size == n
    return perm


def inverse_permutation(perm: np.ndarray) -> np.ndarray:
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size, dtype=perm.dtype)
    return inv


def is_permutation(perm, n: int) -> bool:
    perm = np.asarray(perm)
    return perm.shape == (n,) and np.array_equal(np.sort(perm), np.arange(n))


def _dissect(G: sp.csr_array, nodes: np.ndarray, leaf_size: int, out: list) -> None:
    # G is the subgraph induced by `nodes` (local numbering).
    if nodes.size <= leaf_size:
        out.append(nodes[minimum_degree(G)])
        return
    n_comp, labels = connected_components(G, directed=False)
    if n_comp > 1:
        for c in range(n_comp):
            local = np.flatnonzero(labels == c)
            _dissect(G[local][:, local], nodes[local], leaf_size, out)
        return

    levels = _level_structure(G)
    depth = int(levels.max())
    if depth < 2:
        # Near-clique: dissection cannot help.
        out.append(nodes[minimum_degree(G)])
        return
    counts = np.bincount(levels)
    # Smallest level in the middle third keeps the separator thin.
    lo, hi = max(1, depth // 3), max(1, depth - depth // 3)
    mid = lo + int(np.argmin(counts[lo : hi + 1]))
    sep_mask = levels == mid
    upper = levels > mid
    # Separator nodes with no neighbour above the cut are not needed in it.
    touches_upper = (G @ upper.astype(np.float64)) > 0
    sep_mask &= touches_upper
    lower = ~sep_mask & ~upper

    for part in (np.flatnonzero(lower), np.flatnonzero(upper)):
        if part.size:
            _dissect(G[part][:, part], nodes[part], leaf_size, out)
    sep = np.flatnonzero(sep_mask)
    if sep.size:
        out.append(nodes[sep[minimum_degree(G[sep][:, sep])]])


def _level_structure(G: sp.csr_array) -> np.ndarray:
    """BFS levels from a pseudo-peripheral node (George-Liu search)."""
    root = 0
    levels = _bfs_levels(G, root)
    for _ in range(8):
        depth = levels.max()
        last = np.flatnonzero(levels == depth)
        degrees = np.diff(G.indptr)[last]
        cand = int(last[np.argmin(degrees)])
        cand_levels = _bfs_levels(G, cand)
        if cand_levels.max() <= depth:
            break
        root, levels = cand, cand_levels
    return levels


def _bfs_levels(G: sp.csr_array, root: int) -> np.ndarray:
    dist = shortest_path(G, directed=False, unweighted=True, indices=root)
    return dist.astype(np.int64)


def minimum_degree(G) -> np.ndarray:
    """Plain minimum-degree elimination order on an explicit elimination graph.

    Ties go to the smallest index, which keeps the result deterministic.
    Intended for small graphs only (leaves of the dissection).
    """
    G = sp.csr_array(G)
    n = G.shape[0]
    adj = [set(G.indices[G.indptr[i] : G.indptr[i + 1]].tolist()) - {i} for i in range(n)]
    heap = [(len(adj[i]), i) for i in range(n)]
    heapq.heapify(heap)
    done = np.zeros(n, dtype=bool)
    order = []
    while heap:
        deg, v = heapq.heappop(heap)
        if done[v] or deg != len(adj[v]):
            continue
        done[v] = True
        order.append(v)
        nbrs = adj[v]
        for u in nbrs:
            adj[u].discard(v)
            adj[u] |= nbrs - {u}
            heapq.heappush(heap, (len(adj[u]), u))
        adj[v] = set()
    return np.asarray(order, dtype=np.int64)
