"""Discrete forward map (plate solve) and the region-average measurement operator."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import shapely

from .assemble import Space, assemble_coupling, assemble_form, assemble_load
from .element import BIHARMONIC, FORM_DEGREE, LOAD_DEGREE
from .linalg import factor_spd, solve_many
from .mesh import Domain, Mesh, ancestor_cells, locate_points
from .quadrature import RECT, TRI, gauss_legendre_01, quadrature_rule

MEASURE_DEGREE = 7
EXACT_DEGREE = 12

# derivative multi-indices and multiplicities making up |D^k v|^2
NORM_TERMS = {
    0: [((0, 0), 1.0)],
    1: [((1, 0), 1.0), ((0, 1), 1.0)],
    2: [((2, 0), 1.0), ((1, 1), 2.0), ((0, 2), 1.0)],
}


@dataclass(frozen=True, eq=False)
class FemFunction:
    space: Space
    coefficients: np.ndarray  # free dofs; clamped dofs are zero

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    @property
    def element(self) -> str:
        return self.space.element

    @cached_property
    def global_coefficients(self) -> np.ndarray:
        return self.space.dofmap.to_global(self.coefficients)

    def evaluate_cells(self, cells, X, Y, deriv=(0, 0)):
        """Evaluate on known cells; ``cells`` broadcasts against X and Y."""
        cells = np.asarray(cells)
        phi = self.space.cells.tabulate(cells, X, Y, deriv)
        coef = self.global_coefficients[self.space.dofmap.cell_to_global[cells]]
        return np.sum(phi * coef, axis=-1)

    def __call__(self, x, y, deriv=(0, 0)):
        """Point evaluation; on shared edges the lowest-index cell wins."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        pts = np.column_stack([x.ravel(), y.ravel()])
        cells = locate_points(self.mesh, pts)
        if np.any(cells < 0):
            i = int(np.flatnonzero(cells < 0)[0])
            raise ValueError(f"point {tuple(pts[i])} lies outside the mesh")
        return self.evaluate_cells(cells, pts[:, 0], pts[:, 1], deriv).reshape(x.shape)

    def __add__(self, other):
        self._check_same(other)
        return FemFunction(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other):
        self._check_same(other)
        return FemFunction(self.space, self.coefficients - other.coefficients)

    def __mul__(self, c):
        return FemFunction(self.space, c * self.coefficients)

    __rmul__ = __mul__

    def _check_same(self, other):
        if not isinstance(other, FemFunction) or other.space is not self.space:
            raise ValueError("arithmetic needs functions from the same space")


@dataclass(frozen=True)
class MeasurementSet:
    """Averaging regions, each an axis-aligned box (x0, x1, y0, y1)."""

    regions: tuple

    def __post_init__(self):
        regs = tuple(tuple(float(v) for v in r) for r in self.regions)
        if not regs:
            raise ValueError("need at least one measurement region")
        for r in regs:
            if len(r) != 4 or not (r[1] > r[0] and r[3] > r[2]) or not np.all(np.isfinite(r)):
                raise ValueError(f"malformed region {r}: expected x0 < x1, y0 < y1")
        object.__setattr__(self, "regions", regs)

    @property
    def N(self) -> int:
        return len(self.regions)

    def areas(self) -> np.ndarray:
        return np.array([(x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in self.regions])

    def check_inside(self, domain: Domain):
        for r in self.regions:
            if not domain.contains_box(r):
                raise ValueError(f"measurement region {r} is not contained in the {domain.name} domain")


DEFAULT_REGIONS = {
    "square": ((0.25, 0.5, 0.25, 0.5), (0.5, 0.75, 0.5, 0.75)),
    "lshape": ((-0.75, -0.25, 0.25, 0.75),),
}


def default_measurements(domain_name: str) -> MeasurementSet:
    return MeasurementSet(DEFAULT_REGIONS[domain_name])


def region_quadrature(mesh: Mesh, box, degree=MEASURE_DEGREE):
    """Quadrature of box intersected with each cell: (cells, X, Y, W), rows per piece."""
    a0, a1, b0, b1 = box
    P = mesh.cell_coords()
    lo, hi = P.min(axis=1), P.max(axis=1)
    cand = np.flatnonzero((lo[:, 0] < a1) & (hi[:, 0] > a0) & (lo[:, 1] < b1) & (hi[:, 1] > b0))
    if mesh.cell_kind == RECT:
        x0 = np.maximum(lo[cand, 0], a0)
        x1 = np.minimum(hi[cand, 0], a1)
        y0 = np.maximum(lo[cand, 1], b0)
        y1 = np.minimum(hi[cand, 1], b1)
        q = quadrature_rule(RECT, degree)
        dx, dy = (x1 - x0)[:, None], (y1 - y0)[:, None]
        X = x0[:, None] + dx * q.points[:, 0]
        Y = y0[:, None] + dy * q.points[:, 1]
        return cand, X, Y, dx * dy * q.weights
    q = quadrature_rule(TRI, degree)
    polys = shapely.intersection(shapely.polygons(P[cand]), shapely.box(a0, b0, a1, b1))
    cells, tris = [], []
    for c, poly in zip(cand, polys):
        if poly.is_empty or poly.area <= 0:
            continue
        ring = np.asarray(poly.exterior.coords)[:-1]
        for i in range(1, len(ring) - 1):
            tri = np.array([ring[0], ring[i], ring[i + 1]])
            e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
            if abs(e1[0] * e2[1] - e1[1] * e2[0]) > 1e-15:
                cells.append(c)
                tris.append(tri)
    if not tris:
        return np.array([], dtype=np.int64), np.zeros((0, len(q))), np.zeros((0, len(q))), np.zeros((0, len(q)))
    T = np.array(tris)
    v0, e1, e2 = T[:, 0], T[:, 1] - T[:, 0], T[:, 2] - T[:, 0]
    s, t = q.points[:, 0], q.points[:, 1]
    X = v0[:, 0:1] + e1[:, 0:1] * s + e2[:, 0:1] * t
    Y = v0[:, 1:2] + e1[:, 1:2] * s + e2[:, 1:2] * t
    jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return np.array(cells), X, Y, jac[:, None] * q.weights


def measurement_matrix(ms: MeasurementSet, space: Space, degree=MEASURE_DEGREE) -> np.ndarray:
    """Dense N x ndof matrix of region averages of the free basis functions."""
    M = np.zeros((ms.N, space.ndof))
    c2f = space.dofmap.cell_to_free()
    for i, box in enumerate(ms.regions):
        cells, X, Y, W = region_quadrature(space.mesh, box, degree)
        area = (box[1] - box[0]) * (box[3] - box[2])
        if abs(W.sum() - area) > 1e-12 * max(area, 1.0):
            raise ValueError(f"measurement region {box} is not contained in the mesh domain")
        if len(cells) == 0:
            continue
        local = np.einsum("cq,cqi->ci", W, space.cells.tabulate(cells[:, None], X, Y)) / area
        dofs = c2f[cells]
        keep = dofs >= 0
        M[i] = np.bincount(dofs[keep], weights=local[keep], minlength=space.ndof)
    return M


def _box_average_exact(func, box, domain: Optional[Domain], degree=EXACT_DEGREE, sub=8):
    if domain is not None and not domain.contains_box(box):
        raise ValueError(f"measurement region {box} is not contained in the {domain.name} domain")
    a0, a1, b0, b1 = box
    # split along the grid lines of the domain pieces so the integrand is smooth on each part
    xs = {a0, a1}
    ys = {b0, b1}
    if domain is not None:
        for x0, x1, y0, y1 in domain.pieces:
            xs |= {v for v in (x0, x1) if a0 < v < a1}
            ys |= {v for v in (y0, y1) if b0 < v < b1}
    xs, ys = sorted(xs), sorted(ys)
    n = max(1, -(-(degree + 1) // 2))
    g, w = gauss_legendre_01(n)
    total = 0.0
    for xa, xb in zip(xs[:-1], xs[1:]):
        for ya, yb in zip(ys[:-1], ys[1:]):
            ex = np.linspace(xa, xb, sub + 1)
            ey = np.linspace(ya, yb, sub + 1)
            X = (ex[:-1, None] + np.diff(ex)[:, None] * g[None]).ravel()
            Y = (ey[:-1, None] + np.diff(ey)[:, None] * g[None]).ravel()
            WX = (np.diff(ex)[:, None] * w[None]).ravel()
            WY = (np.diff(ey)[:, None] * w[None]).ravel()
            XX, YY = np.meshgrid(X, Y, indexing="ij")
            total += float(np.sum(np.outer(WX, WY) * func(XX, YY)))
    return total / ((a1 - a0) * (b1 - b0))


def apply_measurement(ms: MeasurementSet, v, domain: Optional[Domain] = None, degree=None) -> np.ndarray:
    """Region averages of ``v``: a FemFunction, or a callable ``v(x, y)`` on ``domain``."""
    if isinstance(v, FemFunction):
        out = np.empty(ms.N)
        for i, box in enumerate(ms.regions):
            cells, X, Y, W = region_quadrature(v.mesh, box, degree or MEASURE_DEGREE)
            area = (box[1] - box[0]) * (box[3] - box[2])
            if abs(W.sum() - area) > 1e-12 * max(area, 1.0):
                raise ValueError(f"measurement region {box} is not contained in the mesh domain")
            out[i] = np.sum(W * v.evaluate_cells(cells[:, None], X, Y)) / area
        return out
    return np.array([_box_average_exact(v, box, domain, degree or EXACT_DEGREE) for box in ms.regions])


class ForwardModel:
    """Plate stiffness, its factorization and the measurement operator on one mesh.

    ``ftau_element`` is the element of the source space (same mesh).
    """

    def __init__(self, mesh: Mesh, element: str, ms: MeasurementSet, ftau_element: Optional[str] = None,
                 load_degree=LOAD_DEGREE, singular_point=None, singular_degree=14, factor_method="auto"):
        self.space = Space.create(mesh, element)
        self.ftau = Space.create(mesh, ftau_element or element)
        self.ms = ms
        self.load_degree = load_degree
        self.singular_point = singular_point
        self.singular_degree = singular_degree
        self.A = assemble_form(self.space, BIHARMONIC)
        self.factor = factor_spd(self.A, method=factor_method)
        self.M = measurement_matrix(ms, self.space)

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    @cached_property
    def S(self):
        return assemble_coupling(self.space, self.ftau)

    @cached_property
    def W(self) -> np.ndarray:
        return build_W(self)

    def load(self, f) -> np.ndarray:
        return assemble_load(self.space, f, self.load_degree, self.singular_point, self.singular_degree)

    def solve(self, f) -> FemFunction:
        if isinstance(f, FemFunction):
            rhs = self.S @ f.coefficients
        else:
            rhs = self.load(f)
        return FemFunction(self.space, self.factor.solve(rhs))

    def measure(self, u: FemFunction) -> np.ndarray:
        return self.M @ u.coefficients


def solve_forward(mesh: Mesh, element: str, f, **kw) -> FemFunction:
    """Galerkin plate solution u_h for the source ``f(x, y)``."""
    space = Space.create(mesh, element)
    A = assemble_form(space, BIHARMONIC)
    rhs = assemble_load(space, f, **kw)
    return FemFunction(space, factor_spd(A).solve(rhs))


def build_W(model: ForwardModel, method="adjoint") -> np.ndarray:
    """N x m2 matrix of measurements of the forward solutions of each source basis function.

    ``"columns"`` solves A beta_k = S[:, k] for every k; ``"adjoint"`` uses the
    symmetry of A and solves only N systems, W = (A^{-1} M^T)^T S.
    """
    if method == "columns":
        S = model.S.toarray()
        B = solve_many(model.factor, S)
        return model.M @ B
    if method != "adjoint":
        raise ValueError(f"unknown method {method!r}")
    Y = solve_many(model.factor, model.M.T)
    return np.asarray((model.S.T @ Y).T)


def _eval_on_mesh(v, target: Mesh, cells, X, Y, deriv):
    if isinstance(v, FemFunction):
        if v.mesh is target:
            return v.evaluate_cells(cells, X, Y, deriv)
        anc = ancestor_cells(target, v.mesh)
        return v.evaluate_cells(anc[cells], X, Y, deriv)
    return v(X, Y, deriv)


def fem_norm(v, k: int, w=None, degree=None) -> float:
    """Piecewise L2 norm of the k-th derivative tensor of ``v`` (or of ``v - w``).

    ``v``/``w`` are FemFunctions on nested meshes, or ``w`` a callable
    ``w(x, y, deriv)``. The integral runs over the finer mesh's cells.
    """
    if k not in NORM_TERMS:
        raise ValueError(f"k must be 0, 1 or 2, got {k}")
    fine = v
    if isinstance(w, FemFunction) and w.mesh.n_cells > v.mesh.n_cells:
        fine = w
    mesh = fine.mesh
    if degree is None:
        degree = FORM_DEGREE[fine.element] if (w is None or isinstance(w, FemFunction)) else EXACT_DEGREE
    X, Y, W = fine.space.cells.quadrature(degree)
    cells = np.arange(mesh.n_cells)[:, None]
    total = 0.0
    for deriv, mult in NORM_TERMS[k]:
        d = _eval_on_mesh(v, mesh, cells, X, Y, deriv)
        if w is not None:
            d = d - _eval_on_mesh(w, mesh, cells, X, Y, deriv)
        total += mult * float(np.sum(W * d * d))
    return float(np.sqrt(total))
