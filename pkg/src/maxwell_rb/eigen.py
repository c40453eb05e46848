"""Eigen- and linear-solver contracts.

Sparse path: shift-invert Lanczos at a shift placed just below the first
physical eigenvalue.  In shift-invert coordinates every eigenvalue above
the shift maps to a positive value and the gradient (zero) cluster maps
to negative values, so requesting the largest algebraic transformed
eigenvalues returns exactly the physical modes nearest the shift and the
nullspace never enters the Krylov window.

An alternative strategy deflates the gradient space explicitly by
composing the shifted solve with a B-orthogonal projector against
range(G); it is config-selectable and off by default.

Linear solves with the SPD mass matrix go through a sparse triangular
factorization in symmetric mode (diagonal pivoting on a symmetric
fill-reducing permutation), which doubles as the SPD check: any
non-positive pivot signals an indefinite matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigensolverError, FactorizationError


@dataclass(frozen=True)
class EigenSolution:
    """Sorted generalized eigenpairs with per-pair residual norms."""

    values: np.ndarray          # ascending
    vectors: np.ndarray         # columns, B-orthonormal when b_normalized
    residual_norms: np.ndarray  # ||A v - lambda B v||_2
    b_normalized: bool = True

    @property
    def count(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class SolverPolicy:
    """Shift, spectral cutoff and iteration limits for the sparse eigensolver.

    sigma must lie strictly below the smallest physical eigenvalue of
    every system it is used on; lambda_cut separates gradient modes
    (below) from physical modes (above).
    """

    sigma: float
    lambda_cut: float
    tol: float = 1e-10
    maxiter: int = 500
    window_pad: int = 10        # Krylov window is 2K + window_pad
    strategy: str = "shift-invert"
    seed: int = 0

    @classmethod
    def from_reference(cls, lambda_hat1: float, shift_fraction: float = 0.9,
                       cut_fraction: float = 0.1, **kwargs) -> "SolverPolicy":
        """Policy derived from the analytic first eigenvalue of the geometry."""
        return cls(
            sigma=shift_fraction * lambda_hat1,
            lambda_cut=cut_fraction * lambda_hat1,
            **kwargs,
        )


class SPDFactor:
    """Sparse factorization of an SPD matrix with a solve contract of
    1e-12 relative residual per right-hand-side column."""

    def __init__(self, B: sp.spmatrix):
        B = sp.csc_matrix(B)
        if B.shape[0] != B.shape[1]:
            raise FactorizationError("matrix is not square: %r" % (B.shape,))
        self.n = B.shape[0]
        try:
            self._lu = spla.splu(
                B,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:
            raise FactorizationError("sparse factorization failed: %s" % exc) from exc
        pivots = self._lu.U.diagonal()
        if not np.all(np.isfinite(pivots)) or np.any(pivots <= 0.0):
            raise FactorizationError(
                "matrix is not positive definite (min pivot %.3e)" % pivots.min()
            )

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve B x = rhs; rhs may carry multiple columns."""
        rhs = np.asarray(rhs, dtype=float)
        return self._lu.solve(rhs)


def factorize(B: sp.spmatrix) -> SPDFactor:
    return SPDFactor(B)


def solve_spd(factor: SPDFactor, rhs: np.ndarray) -> np.ndarray:
    return factor.solve(rhs)


class FactorCache:
    """Keeps the factorization of the current parameter value only."""

    def __init__(self):
        self._key = None
        self._factor = None

    def get(self, key, build) -> SPDFactor:
        if self._key != key or self._factor is None:
            self._factor = build()
            self._key = key
        return self._factor

    def clear(self):
        self._key = None
        self._factor = None


def _residuals(A, B, values, vectors):
    if values.size == 0:
        return np.zeros(0)
    AV = A @ vectors
    BV = B @ vectors
    return np.linalg.norm(AV - BV * values[None, :], axis=0)


def _b_normalize(B, vectors):
    BV = B @ vectors
    norms = np.sqrt(np.einsum("ij,ij->j", vectors, BV))
    return vectors / norms[None, :]


def solve_dense_gevp(A_d: np.ndarray, B_d: np.ndarray) -> EigenSolution:
    """Full spectrum of the dense symmetric pencil (A_d, B_d), B_d SPD.

    Vectors come back B_d-orthonormal; used for reduced and cotree
    systems and as the brute-force oracle in tests.
    """
    A_d = np.asarray(A_d, dtype=float)
    B_d = np.asarray(B_d, dtype=float)
    if A_d.shape[0] == 0:
        return EigenSolution(np.zeros(0), np.zeros((0, 0)), np.zeros(0))
    try:
        values, vectors = sla.eigh(A_d, B_d)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise FactorizationError("dense mass matrix is not SPD: %s" % exc) from exc
    res = np.linalg.norm(A_d @ vectors - (B_d @ vectors) * values[None, :], axis=0)
    return EigenSolution(values=values, vectors=vectors, residual_norms=res)


def _gradient_projector(B, grad):
    """B-orthogonal projector removing range(G) components."""
    G = grad.G if hasattr(grad, "G") else grad
    G = sp.csr_matrix(G)
    BG = (B @ G).toarray() if sp.issparse(G) else B @ G
    GtBG = G.T @ BG
    GtBG = np.asarray(GtBG.todense()) if sp.issparse(GtBG) else np.asarray(GtBG)
    chol = sla.cho_factor(GtBG)

    def project(x):
        coeff = sla.cho_solve(chol, BG.T @ x if BG.ndim == 2 else G.T @ (B @ x))
        return x - G @ coeff

    return project


def solve_sparse_gevp(A, B, K: int, policy: SolverPolicy, grad=None,
                      salt: int = 0) -> EigenSolution:
    """K smallest physical eigenpairs of the sparse pencil (A, B).

    Only eigenvalues strictly above policy.lambda_cut are returned;
    gradient modes are excluded by construction of the shift-invert
    window (or by explicit deflation when policy.strategy is "deflate").
    ``salt`` perturbs the deterministic start vector so sweeps over many
    parameter values stay reproducible yet independent.
    """
    if K < 0:
        raise EigensolverError("mode count must be >= 0, got %d" % K)
    n = A.shape[0]
    if K == 0:
        return EigenSolution(np.zeros(0), np.zeros((n, 0)), np.zeros(0))

    window = 2 * K + policy.window_pad
    if n < window + 5:
        # Krylov window would not fit; the dense path is cheap here.
        sol = solve_dense_gevp(
            A.toarray() if sp.issparse(A) else A,
            B.toarray() if sp.issparse(B) else B,
        )
        keep = sol.values > policy.lambda_cut
        values = sol.values[keep][:K]
        vectors = sol.vectors[:, keep][:, :K]
        if values.size < K:
            raise EigensolverError(
                "only %d eigenvalues above lambda_cut=%.3e in a %d-DoF system"
                % (values.size, policy.lambda_cut, n)
            )
        res = _residuals(A, B, values, vectors)
        return EigenSolution(values=values, vectors=vectors, residual_norms=res)

    rng = np.random.default_rng(np.random.SeedSequence([policy.seed, salt]))
    v0 = rng.standard_normal(n)

    A = A.tocsc() if sp.issparse(A) else A
    B = B.tocsc() if sp.issparse(B) else B

    try:
        if policy.strategy == "deflate":
            if grad is None:
                raise EigensolverError("deflation strategy requires the gradient operator")
            project = _gradient_projector(B, grad)
            shifted = (A - policy.sigma * B).tocsc()
            try:
                lu = spla.splu(shifted)
            except RuntimeError as exc:
                raise FactorizationError(
                    "shifted-system factorization failed: %s" % exc
                ) from exc
            op_inv = spla.LinearOperator(
                (n, n), matvec=lambda x: project(lu.solve(x)), dtype=float
            )
            values, vectors = spla.eigsh(
                A, k=window, M=B, sigma=policy.sigma, which="LA",
                OPinv=op_inv, v0=project(v0), tol=policy.tol,
                maxiter=policy.maxiter,
            )
        elif policy.strategy == "shift-invert":
            values, vectors = spla.eigsh(
                A, k=window, M=B, sigma=policy.sigma, which="LA",
                v0=v0, tol=policy.tol, maxiter=policy.maxiter,
            )
        else:
            raise EigensolverError("unknown solver strategy %r" % policy.strategy)
    except spla.ArpackNoConvergence as exc:
        raise EigensolverError(
            "sparse eigensolver did not converge within %d iterations: %s"
            % (policy.maxiter, exc)
        ) from exc

    order = np.argsort(values)
    values = values[order]
    vectors = vectors[:, order]
    keep = values > policy.lambda_cut
    values = values[keep]
    vectors = vectors[:, keep]
    if values.size < K:
        raise EigensolverError(
            "found %d eigenvalues above lambda_cut=%.3e, need %d; "
            "enlarge the Krylov window" % (values.size, policy.lambda_cut, K)
        )
    values = values[:K]
    vectors = _b_normalize(B, vectors[:, :K])
    res = _residuals(A, B, values, vectors)
    return EigenSolution(values=values, vectors=vectors, residual_norms=res)
