"""Tikhonov-regularized source reconstruction from region-average data."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .assemble import Space, assemble_form
from .element import BIHARMONIC, H1, MASS
from .forward import FemFunction, ForwardModel, measurement_matrix
from .linalg import SpdFactorization, factor_spd, solve_tikhonov_system

REGULARIZER_FORMS = {0: MASS, 1: H1, 2: BIHARMONIC}
DEFAULT_ALPHAS = (1e-3, 1e-5, 1e-7)


def assemble_regularizer(space: Space, k: int) -> sp.csr_matrix:
    """Penalty matrix on the free dofs of the source space.

    k=0: L2 mass; k=1: gradient form on the clamped space; k=2: the plate
    form of the element (Laplacian product for BFS, piecewise Hessian for Morley).
    """
    if k not in REGULARIZER_FORMS:
        raise ValueError(f"regularization k must be 0, 1 or 2, got {k!r}")
    return assemble_form(space, REGULARIZER_FORMS[k])


@dataclass
class InverseProblem:
    W: np.ndarray  # (N, m2)
    C: sp.spmatrix  # (m2, m2), SPD
    m: np.ndarray  # (N,)
    alpha: float
    space: Optional[Space] = None
    C_factor: Optional[SpdFactorization] = None

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.m = np.asarray(self.m, dtype=float).reshape(-1)
        N, m2 = self.W.shape
        if self.C.shape != (m2, m2):
            raise ValueError(f"C has shape {self.C.shape}, expected {(m2, m2)}")
        if self.m.shape != (N,):
            raise ValueError(f"m has length {len(self.m)}, expected {N}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.space is not None and self.space.ndof != m2:
            raise ValueError("source space size does not match W")


def reconstruct_coefficients(ip: InverseProblem, method="auto") -> np.ndarray:
    return solve_tikhonov_system(ip.W, ip.C, ip.alpha, ip.W.T @ ip.m, method=method, factor=ip.C_factor)


def reconstruct(ip: InverseProblem, method="auto"):
    """Regularized source f with (W^T W + alpha C) f = W^T m.

    Returns a FemFunction when the problem carries its source space,
    otherwise the coefficient vector.
    """
    coef = reconstruct_coefficients(ip, method)
    if ip.space is None:
        return coef
    return FemFunction(ip.space, coef)


def misfit(ip: InverseProblem, coef) -> float:
    return float(np.linalg.norm(ip.W @ coef - ip.m))


def penalty(ip: InverseProblem, coef) -> float:
    return float(coef @ (ip.C @ coef))


def add_noise(m, delta: float, seed: int) -> np.ndarray:
    """m plus a seeded random perturbation of Euclidean norm exactly ``delta``."""
    m = np.asarray(m, dtype=float)
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    if delta == 0:
        return m.copy()
    n = np.random.default_rng(seed).standard_normal(m.shape)
    return m + n * (delta / np.linalg.norm(n))


def alpha_rule(delta: float, c: float = 1.0) -> float:
    """Regularization parameter c * delta^(2/3) for noise level delta."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    return float(c * delta ** (2.0 / 3.0))


def power_iteration(L, rtol=1e-8, maxiter=10_000) -> float:
    x = np.ones(L.shape[0])
    lam = 0.0
    for _ in range(maxiter):
        y = L @ x
        new = float(x @ y / (x @ x))
        x = y / np.linalg.norm(y)
        # stop well inside rtol: the Rayleigh quotient error is below the step size
        if abs(new - lam) <= 1e-2 * rtol * abs(new):
            return new
        lam = new
    return lam


def reconstruction_basis_diagnostics(model: ForwardModel, k: int, alpha: float, m=None, C=None) -> dict:
    """Discrete reconstruction basis eta_i and the Gram matrix L of the penalty form.

    ``L`` uses C eta_i = (T_h phi_i, psi) (the i-th row of W); ``L_direct`` uses
    the region average of the source basis itself. ``span_residual`` is the
    C-norm distance of the reconstruction from span{eta_i}, relative to its C-norm.
    """
    if C is None:
        C = assemble_regularizer(model.ftau, k)
    fac = factor_spd(C)
    W = model.W
    E = fac.solve(W.T)  # (m2, N)
    L = E.T @ (C @ E)
    M_tau = measurement_matrix(model.ms, model.ftau)
    E_direct = fac.solve(M_tau.T)
    L_direct = E_direct.T @ (C @ E_direct)
    if m is None:
        m = np.ones(W.shape[0])
    ip = InverseProblem(W, C, m, alpha, model.ftau, fac)
    f = reconstruct_coefficients(ip)
    d = np.linalg.solve(L, E.T @ (C @ f))
    r = f - E @ d
    fnorm = np.sqrt(f @ (C @ f))
    span_residual = float(np.sqrt(max(r @ (C @ r), 0.0)) / fnorm) if fnorm > 0 else 0.0
    return {
        "eta": E,
        "L": L,
        "L_direct": L_direct,
        "L_difference": float(np.max(np.abs(L - L_direct))),
        "lambda_max": power_iteration(L),
        "span_residual": span_residual,
        "coefficients": d,
    }
