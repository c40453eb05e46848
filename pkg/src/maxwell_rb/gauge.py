"""Tree-cotree gauge: spanning tree construction and the cotree system.

The free-edge graph is searched breadth-first from a virtual super-node
that merges all boundary vertices.  Each interior vertex is discovered
exactly once and its discovery edge joins the tree T, so |T| equals the
interior vertex count and the gradient incidence restricted to tree rows
is triangular with unit-modulus diagonal in discovery order.

The gauge operator H is the row restriction of the stiffness to cotree
edges, kept in global column order: every formula downstream uses H only
in products that are invariant under a consistent column permutation, so
nothing is gained by reordering columns.

Projection onto cotree coordinates solves the overdetermined system
H^T v_hat = B v in the least-squares sense through an in-place
Householder QR of the densified H^T; the factorization overwrites its
single N x |C| buffer, which keeps the mixed pipeline's dense footprint
small.  The least-squares residual reports whether the input vector was
gradient-free: eigenvectors of the ungauged pencil with nonzero
eigenvalue produce consistent systems, gradient fields do not.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import get_lapack_funcs

from .assembly import SystemPair
from .eigen import SPDFactor, factorize
from .errors import NumericsError, ProjectionError
from .mesh import CavityMesh

_CONSISTENCY_TOL = 1e-6


@dataclass(frozen=True)
class GaugeDecomposition:
    """Tree/cotree split of the free edges.

    ``tree`` lists tree edges in BFS discovery order; ``cotree`` is the
    ascending complement; ``parent_order`` lists interior vertex indices
    in the same discovery order as their tree edges.
    """

    tree: np.ndarray
    cotree: np.ndarray
    parent_order: np.ndarray
    n_free_edges: int

    def summary(self) -> dict:
        return {
            "n_free_edges": int(self.n_free_edges),
            "n_tree": int(self.tree.size),
            "n_cotree": int(self.cotree.size),
            "tree": [int(e) for e in self.tree],
            "cotree": [int(e) for e in self.cotree],
        }


@dataclass(frozen=True)
class CotreeSystem:
    """Dense gauged pencil; exists only on the classical comparison path."""

    A_hat: np.ndarray
    B_hat: np.ndarray


def build_tree(mesh: CavityMesh, grad=None) -> GaugeDecomposition:
    """Spanning tree of the free-edge graph rooted in the boundary.

    BFS starts from the super-node of all boundary vertices, visiting
    vertices in ascending id order and edges in ascending free-edge
    order, so the result is deterministic.
    """
    n = mesh.n_free_edges
    free_ids = mesh.free_edges
    tails = mesh.edges[free_ids, 0]
    heads = mesh.edges[free_ids, 1]

    adjacency = [[] for _ in range(mesh.vertices.shape[0])]
    for fe in range(n):
        adjacency[tails[fe]].append(fe)
        adjacency[heads[fe]].append(fe)

    visited = mesh.boundary_vertex.copy()
    tree_edges = []
    parent_vertices = []
    queue = deque()

    def sweep(vertex):
        for fe in adjacency[vertex]:
            other = heads[fe] if tails[fe] == vertex else tails[fe]
            if not visited[other]:
                visited[other] = True
                tree_edges.append(fe)
                parent_vertices.append(other)
                queue.append(other)

    for v in np.flatnonzero(mesh.boundary_vertex):
        sweep(v)
    while queue:
        sweep(queue.popleft())

    nv = mesh.n_interior_vertices
    if len(parent_vertices) != nv:
        raise NumericsError(
            "interior vertices disconnected from the boundary: reached %d of %d"
            % (len(parent_vertices), nv)
        )
    if grad is not None and grad.G.shape != (n, nv):
        raise NumericsError(
            "gradient operator shape %r inconsistent with mesh (%d, %d)"
            % (grad.G.shape, n, nv)
        )

    tree = np.array(tree_edges, dtype=np.int64)
    in_tree = np.zeros(n, dtype=bool)
    in_tree[tree] = True
    cotree = np.flatnonzero(~in_tree)
    parent_order = mesh.interior_vertex_index[np.array(parent_vertices, dtype=np.int64)]
    return GaugeDecomposition(
        tree=tree, cotree=cotree, parent_order=parent_order, n_free_edges=n
    )


def cotree_operator(sys: SystemPair, gauge: GaugeDecomposition) -> sp.csr_matrix:
    """H: rows of A at cotree edges, columns in global order (|C| x N)."""
    if sys.n != gauge.n_free_edges:
        raise NumericsError(
            "system size %d does not match gauge size %d" % (sys.n, gauge.n_free_edges)
        )
    return sys.A.tocsr()[gauge.cotree, :]


def build_cotree_system(sys: SystemPair, gauge: GaugeDecomposition,
                        factor: SPDFactor | None = None) -> CotreeSystem:
    """Dense gauged pencil (A_hat, B_hat) via W = B^{-1} H^T.

    A_hat = W^T A W and B_hat = H W; the mass inverse is never formed,
    only applied column-wise through the sparse factorization.
    """
    H = cotree_operator(sys, gauge)
    if factor is None:
        factor = factorize(sys.B)
    W = factor.solve(H.T.toarray())
    A_hat = W.T @ (sys.A @ W)
    B_hat = H @ W
    A_hat = 0.5 * (A_hat + A_hat.T)
    B_hat = 0.5 * (B_hat + B_hat.T)
    return CotreeSystem(A_hat=A_hat, B_hat=B_hat)


def upscale(gauge: GaugeDecomposition, sys: SystemPair, v_hat: np.ndarray,
            factor: SPDFactor | None = None) -> np.ndarray:
    """Transform cotree coordinates back to the full space: v = B^{-1} H^T v_hat."""
    H = cotree_operator(sys, gauge)
    if factor is None:
        factor = factorize(sys.B)
    return factor.solve(np.asarray(H.T @ v_hat))


class CotreeProjector:
    """Least-squares condensation of full vectors to cotree coordinates.

    Factors H^T once (in place) and then projects any number of vectors;
    reuse this when condensing several modes at the same parameter value.
    """

    def __init__(self, sys: SystemPair, gauge: GaugeDecomposition):
        self._H = cotree_operator(sys, gauge)
        self._B = sys.B
        self.n_cotree = gauge.cotree.size
        Ht = np.asfortranarray(self._H.T.toarray())
        geqrf, = get_lapack_funcs(("geqrf",), (Ht,))
        qr, tau, _, info = geqrf(Ht, overwrite_a=True)
        if info != 0:
            raise ProjectionError("QR factorization failed with info=%d" % info)
        self._qr = qr
        self._tau = tau
        self._ormqr, self._trtrs = get_lapack_funcs(("ormqr", "trtrs"), (qr,))
        # workspace query
        probe = np.zeros((qr.shape[0], 1), order="F")
        _, work, _ = self._ormqr("L", "T", qr, tau, probe, -1)
        self._lwork = int(work[0].real)

    def project(self, v: np.ndarray, check: bool = True):
        """Condense v (one column or a block); returns (v_hat, rel_residual).

        rel_residual is the least-squares consistency residual
        ||H^T v_hat - B v|| / ||B v|| per column; values above 1e-6 mean
        the input carried gradient components and raise ProjectionError
        when ``check`` is set.
        """
        single = v.ndim == 1
        rhs = np.asfortranarray(
            np.atleast_2d((self._B @ v).T).T.astype(float)
        )
        rhs_norms = np.linalg.norm(rhs, axis=0)
        cq, _, info = self._ormqr("L", "T", self._qr, self._tau, rhs, self._lwork)
        if info != 0:
            raise ProjectionError("orthogonal transform failed with info=%d" % info)
        m = self.n_cotree
        v_hat, info = self._trtrs(self._qr[:m, :], cq[:m], lower=0, trans=0)
        if info != 0:
            raise ProjectionError("triangular solve failed with info=%d" % info)
        tail = np.linalg.norm(cq[m:], axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(rhs_norms > 0, tail / rhs_norms, 0.0)
        if check and np.any(rel > _CONSISTENCY_TOL):
            worst = int(np.argmax(rel))
            raise ProjectionError(
                "cotree projection inconsistent (relative residual %.3e in "
                "column %d): input is not gradient-free" % (rel[worst], worst)
            )
        if single:
            return v_hat[:, 0], float(rel[0])
        return v_hat, rel


def project_to_cotree(gauge: GaugeDecomposition, sys: SystemPair, v: np.ndarray,
                      check: bool = True):
    """One-shot least-squares condensation; see CotreeProjector.project."""
    return CotreeProjector(sys, gauge).project(v, check=check)
