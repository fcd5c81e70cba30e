"""Bogner-Fox-Schmit rectangle and Morley triangle: shape functions, dofs, local forms.

Local dof order
---------------
BFS: corner c in (bottom-left, bottom-right, top-right, top-left), and for each
corner (value, d/dx, d/dy, d2/dxdy); local index ``4*c + q``. Derivative dofs
are physical derivatives, so shape functions carry the cell edge lengths.

Morley: values at the three vertices, then normal derivatives at the midpoints
of edges (v0,v1), (v1,v2), (v2,v0). The normal of each edge is supplied by the
caller (the mesh fixes one orientation per global edge).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .quadrature import RECT, TRI, gauss_legendre_01, quadrature_rule

BFS = "bfs"
MORLEY = "morley"
CELL_KIND = {BFS: RECT, MORLEY: TRI}
N_LOCAL = {BFS: 16, MORLEY: 6}

BIHARMONIC = "biharmonic"
H1 = "h1"
MASS = "mass"
FORMS = (BIHARMONIC, H1, MASS)

# bilinear forms are integrated exactly for the polynomial integrands involved
FORM_DEGREE = {BFS: 7, MORLEY: 5}
LOAD_DEGREE = 10


class DofKind(Enum):
    VALUE = "value"
    DX = "dx"
    DY = "dy"
    DXY = "dxy"
    EDGE_NORMAL = "edge_normal"


@dataclass(frozen=True)
class LocalDof:
    kind: DofKind
    entity: int  # local vertex or local edge

    def index(self, element: str) -> int:
        if element == BFS:
            order = [DofKind.VALUE, DofKind.DX, DofKind.DY, DofKind.DXY]
            if self.kind not in order or not 0 <= self.entity < 4:
                raise ValueError(f"{self} is not a BFS dof")
            return 4 * self.entity + order.index(self.kind)
        if element == MORLEY:
            if self.kind is DofKind.VALUE and 0 <= self.entity < 3:
                return self.entity
            if self.kind is DofKind.EDGE_NORMAL and 0 <= self.entity < 3:
                return 3 + self.entity
            raise ValueError(f"{self} is not a Morley dof")
        raise ValueError(f"unknown element {element!r}")


def local_dofs(element: str) -> list[LocalDof]:
    if element == BFS:
        return [LocalDof(k, c) for c in range(4) for k in (DofKind.VALUE, DofKind.DX, DofKind.DY, DofKind.DXY)]
    if element == MORLEY:
        return [LocalDof(DofKind.VALUE, i) for i in range(3)] + [
            LocalDof(DofKind.EDGE_NORMAL, j) for j in range(3)
        ]
    raise ValueError(f"unknown element {element!r}")


def _check_deriv(deriv):
    dx, dy = deriv
    if dx < 0 or dy < 0 or dx + dy > 2:
        raise ValueError(f"derivative order {deriv} not supported (max total order 2)")
    return int(dx), int(dy)


# ---------------------------------------------------------------------------
# Bogner-Fox-Schmit


def _hermite_1d(t, d):
    """Reference cubic Hermite functions on [0,1] and their d-th derivatives.

    Order: value at 0, slope at 0, value at 1, slope at 1.
    """
    one = np.ones_like(t)
    if d == 0:
        return np.stack([1 - 3 * t**2 + 2 * t**3, t - 2 * t**2 + t**3, 3 * t**2 - 2 * t**3, -(t**2) + t**3], -1)
    if d == 1:
        return np.stack([-6 * t + 6 * t**2, 1 - 4 * t + 3 * t**2, 6 * t - 6 * t**2, -2 * t + 3 * t**2], -1)
    if d == 2:
        return np.stack([-6 + 12 * t, -4 + 6 * t, 6 - 12 * t, -2 + 6 * t], -1)
    return np.stack([12 * one, 6 * one, -12 * one, 6 * one], -1)


def _hermite_phys(t, length, d):
    H = _hermite_1d(t, d)
    L = length[..., None]
    scale = np.concatenate([np.ones_like(L), L, np.ones_like(L), L], axis=-1)
    return H * scale / L**d


# (value index, slope index) of the 1D table for corner coordinate 0 or 1
_END = {0: (0, 1), 1: (2, 3)}
_CORNERS = [(0, 0), (1, 0), (1, 1), (0, 1)]
_BFS_X = []
_BFS_Y = []
for _a, _b in _CORNERS:
    vx, sx = _END[_a]
    vy, sy = _END[_b]
    _BFS_X += [vx, sx, vx, sx]
    _BFS_Y += [vy, vy, sy, sy]
_BFS_X = np.array(_BFS_X)
_BFS_Y = np.array(_BFS_Y)


def bfs_tabulate(x0, y0, hx, hy, X, Y, deriv=(0, 0)):
    """All 16 BFS shape functions (or a partial derivative) at physical points.

    Geometry arrays and point arrays broadcast together; output has a trailing
    axis of length 16.
    """
    dx, dy = deriv
    x0, y0, hx, hy, X, Y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x0, y0, hx, hy, X, Y)))
    fx = _hermite_phys((X - x0) / hx, hx, dx)
    fy = _hermite_phys((Y - y0) / hy, hy, dy)
    return fx[..., _BFS_X] * fy[..., _BFS_Y]


def _as_rect(rect):
    rect = np.asarray(rect, dtype=float)
    if rect.shape == (4,):
        return rect
    if rect.shape == (4, 2):
        lo, hi = rect.min(axis=0), rect.max(axis=0)
        return np.array([lo[0], lo[1], hi[0] - lo[0], hi[1] - lo[1]])
    raise ValueError("rectangle must be (x0, y0, hx, hy) or a 4x2 vertex array")


def bfs_basis(rect, point, dof, deriv=(0, 0)) -> float:
    """Value of one BFS shape function (or derivative) at a physical point."""
    deriv = _check_deriv(deriv)
    x0, y0, hx, hy = _as_rect(rect)
    i = dof.index(BFS) if isinstance(dof, LocalDof) else int(dof)
    return float(bfs_tabulate(x0, y0, hx, hy, point[0], point[1], deriv)[..., i])


def bfs_dof_values(rect, func):
    """Apply the 16 BFS dof functionals to ``func(x, y, deriv)``."""
    x0, y0, hx, hy = _as_rect(rect)
    out = np.empty(16)
    for c, (a, b) in enumerate(_CORNERS):
        x, y = x0 + a * hx, y0 + b * hy
        for q, d in enumerate([(0, 0), (1, 0), (0, 1), (1, 1)]):
            out[4 * c + q] = func(x, y, d)
    return out


# ---------------------------------------------------------------------------
# Morley

_MONO = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def _mono_tab(xi, eta, deriv):
    dx, dy = deriv
    cols = []
    for px, py in _MONO:
        if px < dx or py < dy:
            cols.append(np.zeros_like(xi))
            continue
        cx = 1.0
        for k in range(dx):
            cx *= px - k
        cy = 1.0
        for k in range(dy):
            cy *= py - k
        cols.append(cx * cy * xi ** (px - dx) * eta ** (py - dy))
    return np.stack(cols, -1)


def outward_normals(P):
    """Outward unit normals of edges (v0,v1), (v1,v2), (v2,v0) of CCW triangles."""
    P = np.asarray(P, dtype=float)
    t = np.roll(P, -1, axis=-2) - P
    t /= np.linalg.norm(t, axis=-1, keepdims=True)
    return np.stack([t[..., 1], -t[..., 0]], -1)


@dataclass(frozen=True)
class MorleyData:
    coeffs: np.ndarray  # (nc, 6, 6): shape k = sum_j mono_j * coeffs[j, k]
    center: np.ndarray  # (nc, 2)
    scale: np.ndarray  # (nc,)


def morley_data(P, normals=None) -> MorleyData:
    """Invert the dof-functional matrix of each triangle in a scaled monomial basis."""
    P = np.asarray(P, dtype=float).reshape(-1, 3, 2)
    if normals is None:
        normals = outward_normals(P)
    normals = np.asarray(normals, dtype=float).reshape(-1, 3, 2)
    e1, e2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if np.any(np.abs(area) < 1e-14):
        raise ValueError("degenerate triangle (area < 1e-14)")
    center = P.mean(axis=1)
    scale = np.max(np.linalg.norm(P - np.roll(P, -1, axis=1), axis=2), axis=1)
    S = scale[:, None]
    xi = (P[..., 0] - center[:, 0:1]) / S
    eta = (P[..., 1] - center[:, 1:2]) / S
    D = np.empty((len(P), 6, 6))
    D[:, :3, :] = _mono_tab(xi, eta, (0, 0))
    mid = 0.5 * (P + np.roll(P, -1, axis=1))
    mxi = (mid[..., 0] - center[:, 0:1]) / S
    meta = (mid[..., 1] - center[:, 1:2]) / S
    gx = _mono_tab(mxi, meta, (1, 0)) / scale[:, None, None]
    gy = _mono_tab(mxi, meta, (0, 1)) / scale[:, None, None]
    D[:, 3:, :] = normals[..., 0:1] * gx + normals[..., 1:2] * gy
    return MorleyData(np.linalg.inv(D), center, scale)


def morley_tabulate(data: MorleyData, cells, X, Y, deriv=(0, 0)):
    """All six Morley shape functions of cells ``cells`` at physical points."""
    cells = np.asarray(cells)
    c = data.center[cells]
    s = data.scale[cells]
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    xi = (X - c[..., 0]) / s
    eta = (Y - c[..., 1]) / s
    mono = _mono_tab(xi, eta, deriv) / (s ** (deriv[0] + deriv[1]))[..., None]
    return np.einsum("...j,...jk->...k", mono, data.coeffs[cells])


def morley_basis(tri, point, dof, deriv=(0, 0), normals=None) -> float:
    """Value of one Morley shape function (or derivative) at a physical point.

    ``normals`` defaults to the outward normals of the triangle.
    """
    deriv = _check_deriv(deriv)
    data = morley_data(np.asarray(tri, dtype=float)[None], None if normals is None else np.asarray(normals)[None])
    i = dof.index(MORLEY) if isinstance(dof, LocalDof) else int(dof)
    return float(morley_tabulate(data, 0, point[0], point[1], deriv)[..., i])


def morley_dof_values(tri, func, normals=None):
    """Apply the six Morley dof functionals to ``func(x, y, deriv)``."""
    P = np.asarray(tri, dtype=float)
    n = outward_normals(P) if normals is None else np.asarray(normals, dtype=float)
    out = np.empty(6)
    for i in range(3):
        out[i] = func(P[i, 0], P[i, 1], (0, 0))
    for j in range(3):
        m = 0.5 * (P[j] + P[(j + 1) % 3])
        out[3 + j] = n[j, 0] * func(m[0], m[1], (1, 0)) + n[j, 1] * func(m[0], m[1], (0, 1))
    return out


def morley_interpolate(tri, func, normals=None, edge_points=3):
    """Morley interpolant dofs of ``func(x, y, deriv)``.

    Vertex values, and the edge mean of the normal derivative (Gauss on each
    edge), which gives the integral-mean property of the Hessian. For
    quadratics this coincides with the midpoint dof values.
    """
    P = np.asarray(tri, dtype=float)
    n = outward_normals(P) if normals is None else np.asarray(normals, dtype=float)
    g, w = gauss_legendre_01(edge_points)
    out = np.empty(6)
    for i in range(3):
        out[i] = func(P[i, 0], P[i, 1], (0, 0))
    for j in range(3):
        a, b = P[j], P[(j + 1) % 3]
        X, Y = a[0] + g * (b[0] - a[0]), a[1] + g * (b[1] - a[1])
        dn = n[j, 0] * np.asarray(func(X, Y, (1, 0))) + n[j, 1] * np.asarray(func(X, Y, (0, 1)))
        out[3 + j] = float(np.sum(w * dn))
    return out


# ---------------------------------------------------------------------------
# Cell batches


class CellBatch:
    """Geometry and shape-function tables for a batch of cells of one element family."""

    def __init__(self, element: str, P, normals=None):
        if element not in CELL_KIND:
            raise ValueError(f"unknown element {element!r}")
        self.element = element
        self.P = np.asarray(P, dtype=float)
        nv = self.P.shape[1]
        if (element == BFS) != (nv == 4):
            raise ValueError(f"element {element!r} does not match {nv}-vertex cells")
        if element == BFS:
            lo = self.P[:, 0]
            hi = self.P[:, 2]
            self.rect = (lo[:, 0], lo[:, 1], hi[:, 0] - lo[:, 0], hi[:, 1] - lo[:, 1])
            if np.any(self.rect[2] <= 0) or np.any(self.rect[3] <= 0):
                raise ValueError("BFS cells must be axis-aligned, CCW from the bottom-left corner")
            self.morley = None
        else:
            self.morley = morley_data(self.P, normals)

    @classmethod
    def from_mesh(cls, mesh, element: str) -> "CellBatch":
        if CELL_KIND.get(element) != mesh.cell_kind:
            raise ValueError(f"element {element!r} cannot live on {mesh.cell_kind} cells")
        key = ("cells", element)
        if key not in mesh.cache:
            normals = mesh.edge_normals[mesh.cell_edges] if element == MORLEY else None
            mesh.cache[key] = cls(element, mesh.cell_coords(), normals)
        return mesh.cache[key]

    @property
    def n_cells(self) -> int:
        return len(self.P)

    @property
    def nloc(self) -> int:
        return N_LOCAL[self.element]

    def areas(self):
        if self.element == BFS:
            return self.rect[2] * self.rect[3]
        e1, e2 = self.P[:, 1] - self.P[:, 0], self.P[:, 2] - self.P[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def tabulate(self, cells, X, Y, deriv=(0, 0)):
        """Shape functions of ``cells`` at physical points; cells broadcasts against X, Y."""
        cells = np.asarray(cells)
        if self.element == BFS:
            x0, y0, hx, hy = (a[cells] for a in self.rect)
            return bfs_tabulate(x0, y0, hx, hy, X, Y, deriv)
        return morley_tabulate(self.morley, cells, X, Y, deriv)

    def quadrature(self, degree: int, cells=None):
        """Physical quadrature points X, Y and weights W, each (ncells, nq)."""
        q = quadrature_rule(CELL_KIND[self.element], degree)
        idx = np.arange(self.n_cells) if cells is None else np.asarray(cells)
        s, t = q.points[:, 0], q.points[:, 1]
        if self.element == BFS:
            x0, y0, hx, hy = (a[idx][:, None] for a in self.rect)
            return x0 + hx * s, y0 + hy * t, (hx * hy) * q.weights
        P = self.P[idx]
        v0, e1, e2 = P[:, 0], P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
        X = v0[:, 0:1] + e1[:, 0:1] * s + e2[:, 0:1] * t
        Y = v0[:, 1:2] + e1[:, 1:2] * s + e2[:, 1:2] * t
        jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        return X, Y, jac[:, None] * q.weights

    def local_matrices(self, form: str, degree=None):
        """(ncells, nloc, nloc) local matrices of ``form``.

        The BFS biharmonic form is the Laplacian product; the Morley one is the
        full Hessian contraction, integrated piecewise.
        """
        if form not in FORMS:
            raise ValueError(f"unknown form {form!r}")
        degree = FORM_DEGREE[self.element] if degree is None else degree
        X, Y, W = self.quadrature(degree)
        cells = np.arange(self.n_cells)[:, None]
        if form == MASS:
            v = self.tabulate(cells, X, Y)
            return np.einsum("cq,cqi,cqj->cij", W, v, v)
        if form == H1:
            gx = self.tabulate(cells, X, Y, (1, 0))
            gy = self.tabulate(cells, X, Y, (0, 1))
            return np.einsum("cq,cqi,cqj->cij", W, gx, gx) + np.einsum("cq,cqi,cqj->cij", W, gy, gy)
        hxx = self.tabulate(cells, X, Y, (2, 0))
        hyy = self.tabulate(cells, X, Y, (0, 2))
        if self.element == BFS:
            lap = hxx + hyy
            return np.einsum("cq,cqi,cqj->cij", W, lap, lap)
        hxy = self.tabulate(cells, X, Y, (1, 1))
        return (
            np.einsum("cq,cqi,cqj->cij", W, hxx, hxx)
            + 2 * np.einsum("cq,cqi,cqj->cij", W, hxy, hxy)
            + np.einsum("cq,cqi,cqj->cij", W, hyy, hyy)
        )

    def local_loads(self, f, degree=LOAD_DEGREE, cells=None):
        """(ncells, nloc) integrals of f times each shape function."""
        X, Y, W = self.quadrature(degree, cells)
        idx = np.arange(self.n_cells) if cells is None else np.asarray(cells)
        vals = np.asarray(f(X, Y), dtype=float) * np.ones_like(X)
        bad = ~np.isfinite(vals)
        if bad.any():
            i = np.argwhere(bad)[0]
            raise ValueError(f"source is not finite at quadrature point ({X[tuple(i)]!r}, {Y[tuple(i)]!r})")
        phi = self.tabulate(idx[:, None], X, Y)
        return np.einsum("cq,cq,cqi->ci", W, vals, phi)


def local_matrix(element: str, cell, form: str, normals=None, degree=None) -> np.ndarray:
    """Local matrix of one cell given its CCW vertices (BFS: from the bottom-left corner)."""
    return CellBatch(element, np.asarray(cell, dtype=float)[None], normals).local_matrices(form, degree)[0]


def local_load(element: str, cell, f, degree=LOAD_DEGREE, normals=None) -> np.ndarray:
    return CellBatch(element, np.asarray(cell, dtype=float)[None], normals).local_loads(f, degree)[0]
