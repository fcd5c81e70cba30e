"""SPD factorizations and the Tikhonov normal-equation solve."""
from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DENSE_LIMIT = 400
CG_THRESHOLD = 250_000
CG_RTOL = 1e-12
TIKHONOV_DENSE_LIMIT = 2000


class NotPositiveDefinite(np.linalg.LinAlgError):
    def __init__(self, row, pivot):
        super().__init__(f"non-positive pivot {pivot:.3e} at row {row}")
        self.row = row
        self.pivot = pivot


class SpdFactorization:
    """Reusable solver for a symmetric positive definite matrix.

    Small matrices use dense Cholesky. Larger ones use SuperLU with a
    symmetric fill-reducing ordering and no pivoting, which is an LDL^T
    factorization in disguise; the diagonal of U is checked for positivity.
    Above ``cg_threshold`` unknowns, Jacobi-preconditioned CG is used.
    """

    def __init__(self, A, method="auto", cg_threshold=CG_THRESHOLD, dense_limit=DENSE_LIMIT):
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.n = n
        if method == "auto":
            method = "dense" if n <= dense_limit else ("cg" if n > cg_threshold else "sparse")
        self.method = method
        if n == 0:
            return
        if method == "dense":
            M = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
            try:
                self._chol = sla.cho_factor(M, lower=True)
            except np.linalg.LinAlgError:
                d = _first_bad_pivot_dense(M)
                raise NotPositiveDefinite(d[0], d[1]) from None
        elif method == "sparse":
            A = sp.csc_matrix(A)
            lu = spla.splu(
                A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
            if not np.array_equal(lu.perm_r, lu.perm_c):
                raise NotPositiveDefinite(int(np.flatnonzero(lu.perm_r != lu.perm_c)[0]), float("nan"))
            piv = lu.U.diagonal()
            bad = np.flatnonzero(~(piv > 0))
            if len(bad):
                k = bad[0]
                raise NotPositiveDefinite(int(np.argsort(lu.perm_c)[k]), float(piv[k]))
            self._lu = lu
        elif method == "cg":
            self._A = sp.csr_matrix(A)
            d = self._A.diagonal()
            if np.any(d <= 0):
                k = int(np.flatnonzero(d <= 0)[0])
                raise NotPositiveDefinite(k, float(d[k]))
            self._Dinv = 1.0 / d
            self.maxiter = int(20 * np.sqrt(n)) + 1
        else:
            raise ValueError(f"unknown factorization method {method!r}")

    def _cg(self, b):
        P = spla.LinearOperator((self.n, self.n), matvec=lambda x: self._Dinv * x)
        x, info = spla.cg(self._A, b, rtol=CG_RTOL, atol=0.0, maxiter=self.maxiter, M=P)
        if info > 0:
            log.warning("CG hit its iteration cap (%d) before reaching rtol %.0e", self.maxiter, CG_RTOL)
        return x

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, matrix has {self.n}")
        if self.n == 0:
            return np.zeros_like(b)
        if self.method == "dense":
            return sla.cho_solve(self._chol, b)
        if self.method == "sparse":
            return self._lu.solve(b)
        if b.ndim == 1:
            return self._cg(b)
        return np.column_stack([self._cg(b[:, j]) for j in range(b.shape[1])])


def _first_bad_pivot_dense(M):
    # Plain right-looking Cholesky, only run after LAPACK has failed.
    M = np.array(M, dtype=float)
    n = len(M)
    for k in range(n):
        p = M[k, k]
        if not p > 0:
            return k, p
        M[k + 1:, k] /= np.sqrt(p)
        M[k + 1:, k + 1:] -= np.outer(M[k + 1:, k], M[k + 1:, k])
        M[k, k] = np.sqrt(p)
    return n - 1, float("nan")


def factor_spd(A, method="auto", **kw) -> SpdFactorization:
    return SpdFactorization(A, method=method, **kw)


def solve_many(factor: SpdFactorization, B):
    """Solve for every right-hand side; accepts a list of vectors or an (n, k) array."""
    if isinstance(B, (list, tuple)):
        if not B:
            return []
        X = factor.solve(np.column_stack(B))
        return [X[:, j] for j in range(X.shape[1])]
    return factor.solve(B)


def solve_tikhonov_system(W, C, alpha, rhs, method="auto", dense_limit=TIKHONOV_DENSE_LIMIT, factor=None):
    """Solve (W^T W + alpha C) f = rhs.

    ``method="woodbury"`` factors alpha*C once and solves the N x N
    capacitance system I + W (alpha C)^{-1} W^T; ``"dense"`` forms the full
    matrix. ``"auto"`` picks dense below ``dense_limit`` unknowns.
    ``factor`` may carry a factorization of C (not alpha*C) for reuse.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    W = np.atleast_2d(np.asarray(W, dtype=float))
    rhs = np.asarray(rhs, dtype=float)
    m2 = W.shape[1]
    if C.shape != (m2, m2) or rhs.shape != (m2,):
        raise ValueError(f"inconsistent shapes W {W.shape}, C {C.shape}, rhs {rhs.shape}")
    if method == "auto":
        method = "dense" if m2 < dense_limit else "woodbury"
    if method == "dense":
        Cd = C.toarray() if sp.issparse(C) else np.asarray(C, dtype=float)
        B = W.T @ W + alpha * Cd
        return sla.cho_solve(sla.cho_factor(B, lower=True), rhs)
    if method != "woodbury":
        raise ValueError(f"unknown method {method!r}")
    if factor is None:
        factor = factor_spd(C)
    # (alpha C)^{-1} v = C^{-1} v / alpha
    sol = factor.solve(np.column_stack([rhs, W.T])) / alpha
    y, Z = sol[:, 0], sol[:, 1:]
    cap = np.eye(W.shape[0]) + W @ Z
    try:
        t = sla.solve(cap, W @ y, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"capacitance solve failed: {exc}") from exc
    return y - Z @ t
