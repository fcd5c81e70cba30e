"""Independent reference computations used by the tests.

Nothing here imports the package's element or quadrature code.
"""
from functools import lru_cache

import numpy as np
import sympy as sp

x, y = sp.symbols("x y")

# 1D cubic Hermite basis on [0, 1]: value/slope at 0, value/slope at 1
H1D = [
    1 - 3 * x**2 + 2 * x**3,
    x - 2 * x**2 + x**3,
    3 * x**2 - 2 * x**3,
    -(x**2) + x**3,
]


def bfs_shapes_unit():
    """The 16 BFS shapes on [0,1]^2 as sympy expressions, in package dof order.

    Corners bottom-left, bottom-right, top-right, top-left; per corner
    (value, dx, dy, dxy).
    """
    Hx = [h.subs(x, x) for h in H1D]
    Hy = [h.subs(x, y) for h in H1D]
    out = []
    for a, b in [(0, 0), (1, 0), (1, 1), (0, 1)]:
        vx, sx = (Hx[0], Hx[1]) if a == 0 else (Hx[2], Hx[3])
        vy, sy = (Hy[0], Hy[1]) if b == 0 else (Hy[2], Hy[3])
        out += [vx * vy, sx * vy, vx * sy, sx * sy]
    return out


def _shape_factors():
    """(x-factor, y-factor) index into H1D for each BFS shape, in package order."""
    out = []
    for a, b in [(0, 0), (1, 0), (1, 1), (0, 1)]:
        vx, sx = (0, 1) if a == 0 else (2, 3)
        vy, sy = (0, 1) if b == 0 else (2, 3)
        out += [(vx, vy), (sx, vy), (vx, sy), (sx, sy)]
    return out


@lru_cache(maxsize=None)
def _hermite_gram(p, q):
    """Exact 1D integrals of d^p H_i * d^q H_j over [0, 1]."""
    G = np.zeros((4, 4))
    for i in range(4):
        for j in range(4):
            G[i, j] = float(sp.integrate(sp.diff(H1D[i], x, p) * sp.diff(H1D[j], x, q), (x, 0, 1)))
    return G


def bfs_local_matrix_unit(form):
    """Unit-cell mass / gradient / Laplacian-product matrices via exact 1D Hermite integrals."""
    G = {(p, q): _hermite_gram(p, q) for p in range(3) for q in range(3)}
    fac = _shape_factors()
    K = np.zeros((16, 16))
    for i, (ix, iy) in enumerate(fac):
        for j, (jx, jy) in enumerate(fac):
            def t(px, py, qx, qy):
                return G[(px, qx)][ix, jx] * G[(py, qy)][iy, jy]

            if form == "mass":
                K[i, j] = t(0, 0, 0, 0)
            elif form == "h1":
                K[i, j] = t(1, 0, 1, 0) + t(0, 1, 0, 1)
            else:
                K[i, j] = t(2, 0, 2, 0) + t(0, 2, 0, 2) + t(2, 0, 0, 2) + t(0, 2, 2, 0)
    return K


MONOMIALS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def morley_vandermonde(P, normals=None):
    """Coefficients (6 x 6) of Morley shapes in raw monomials 1, x, y, x^2, xy, y^2."""
    P = np.asarray(P, dtype=float)
    if normals is None:
        t = np.roll(P, -1, axis=0) - P
        t /= np.linalg.norm(t, axis=1, keepdims=True)
        normals = np.column_stack([t[:, 1], -t[:, 0]])
    D = np.zeros((6, 6))
    for i in range(3):
        for j, (a, b) in enumerate(MONOMIALS):
            D[i, j] = P[i, 0] ** a * P[i, 1] ** b
    for e in range(3):
        m = 0.5 * (P[e] + P[(e + 1) % 3])
        for j, (a, b) in enumerate(MONOMIALS):
            gx = a * m[0] ** (a - 1) * m[1] ** b if a else 0.0
            gy = b * m[0] ** a * m[1] ** (b - 1) if b else 0.0
            D[3 + e, j] = normals[e][0] * gx + normals[e][1] * gy
    return np.linalg.solve(D, np.eye(6))


def monomial_values(X, Y):
    return np.stack([X**a * Y**b for a, b in MONOMIALS], -1)


def tensor_gauss(f, x0, x1, y0, y1, n=12):
    g, w = np.polynomial.legendre.leggauss(n)
    gx = 0.5 * (x1 - x0) * (g + 1) + x0
    gy = 0.5 * (y1 - y0) * (g + 1) + y0
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    W = np.outer(w, w) * 0.25 * (x1 - x0) * (y1 - y0)
    return float(np.sum(W * f(X, Y)))


def brute_force_boundary_edges(cells):
    """Edge -> number of cells containing it, by explicit enumeration."""
    count = {}
    for c in cells:
        k = len(c)
        for j in range(k):
            e = tuple(sorted((int(c[j]), int(c[(j + 1) % k]))))
            count[e] = count.get(e, 0) + 1
    return count


def dense_cholesky_ok(A):
    try:
        np.linalg.cholesky(A)
        return True
    except np.linalg.LinAlgError:
        return False
