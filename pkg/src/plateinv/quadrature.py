"""Quadrature rules on the reference square [0,1]^2 and triangle (0,0),(1,0),(0,1)."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

RECT = "rect"
TRI = "tri"


@dataclass(frozen=True)
class Quadrature:
    points: np.ndarray  # (nq, 2) reference coordinates
    weights: np.ndarray  # (nq,), sum = reference measure
    exact_degree: int
    kind: str

    def __len__(self):
        return len(self.weights)


def gauss_legendre_01(n: int):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _rect_rule(degree: int) -> Quadrature:
    n = max(1, -(-(degree + 1) // 2))
    x, w = gauss_legendre_01(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return Quadrature(pts, W.ravel(), 2 * n - 1, RECT)


def _tri_closed_form(degree: int):
    if degree == 1:
        return np.array([[1 / 3, 1 / 3]]), np.array([0.5]), 1
    if degree == 2:
        a, b = 1 / 6, 2 / 3
        pts = np.array([[a, a], [b, a], [a, b]])
        return pts, np.full(3, 1 / 6), 2
    if degree <= 5:
        # 7-point Radon rule
        s = np.sqrt(15.0)
        a1, a2 = (6 - s) / 21, (6 + s) / 21
        w1, w2 = (155 - s) / 1200, (155 + s) / 1200
        pts = [[1 / 3, 1 / 3]]
        wts = [9 / 40]
        for a, w in ((a1, w1), (a2, w2)):
            pts += [[a, a], [1 - 2 * a, a], [a, 1 - 2 * a]]
            wts += [w] * 3
        return np.array(pts), 0.5 * np.array(wts), 5
    return None


def _tri_symmetrized_product(degree: int):
    # Collapsed (Duffy) Gauss-Jacobi x Gauss-Legendre product, averaged over the
    # six permutations of barycentric coordinates so the rule is fully symmetric.
    n = max(1, -(-(degree + 1) // 2))
    xu, wu = roots_jacobi(n, 1.0, 0.0)  # weight (1 - t) on [-1, 1]
    u = 0.5 * (xu + 1.0)
    wu = wu / 4.0  # dt = 2 du and (1 - t) = 2 (1 - u)
    v, wv = gauss_legendre_01(n)
    U, V = np.meshgrid(u, v, indexing="ij")
    x = U.ravel()
    y = (V * (1.0 - U)).ravel()
    w = np.outer(wu, wv).ravel()
    lam = np.column_stack([1.0 - x - y, x, y])
    pts, wts = [], []
    for perm in permutations(range(3)):
        lp = lam[:, perm]
        pts.append(lp[:, 1:])
        wts.append(w / 6.0)
    return np.vstack(pts), np.concatenate(wts), 2 * n - 1


@lru_cache(maxsize=None)
def quadrature_rule(kind: str, degree: int) -> Quadrature:
    """Return a rule exact for polynomials of total degree ``degree`` (per axis for rectangles).

    Rectangles get tensor Gauss-Legendre; triangles get the centroid, 3-point,
    7-point (degree 5) rules or a symmetrized collapsed product rule above that.
    Requests between available triangle degrees are rounded up, never down.
    """
    if degree < 0:
        raise ValueError(f"quadrature degree must be >= 0, got {degree}")
    if kind == RECT:
        return _rect_rule(degree)
    if kind != TRI:
        raise ValueError(f"unknown cell kind {kind!r}")
    closed = _tri_closed_form(max(degree, 1))
    if closed is not None:
        pts, wts, exact = closed
    else:
        pts, wts, exact = _tri_symmetrized_product(degree)
    return Quadrature(np.ascontiguousarray(pts), wts, exact, TRI)
