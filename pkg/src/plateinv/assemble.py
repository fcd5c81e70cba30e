"""Global dof numbering with clamped-boundary elimination, and sparse assembly."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .element import BFS, CELL_KIND, FORM_DEGREE, LOAD_DEGREE, CellBatch
from .mesh import Mesh
from .quadrature import gauss_legendre_01

CONSTRAINED = -1


@dataclass(frozen=True, eq=False)
class DofMap:
    n_total: int
    n_free: int
    cell_to_global: np.ndarray  # (nc, nloc)
    free_index: np.ndarray  # (n_total,), CONSTRAINED for clamped dofs
    free_dofs: np.ndarray  # (n_free,) global ids of free dofs

    def cell_to_free(self) -> np.ndarray:
        return self.free_index[self.cell_to_global]

    def to_global(self, coefficients) -> np.ndarray:
        out = np.zeros(self.n_total)
        out[self.free_dofs] = coefficients
        return out


def build_dof_map(mesh: Mesh, element: str) -> DofMap:
    """Number dofs deterministically and drop every dof fixed by the clamped condition.

    BFS: four dofs per vertex, all four fixed on boundary vertices.
    Morley: one dof per vertex and per edge, fixed on boundary vertices/edges.
    """
    if CELL_KIND.get(element) != mesh.cell_kind:
        raise ValueError(f"element {element!r} does not match {mesh.cell_kind} mesh")
    key = ("dofmap", element)
    if key in mesh.cache:
        return mesh.cache[key]
    if element == BFS:
        c2g = (4 * mesh.cells[:, :, None] + np.arange(4)[None, None, :]).reshape(mesh.n_cells, 16)
        n_total = 4 * mesh.n_vertices
        constrained = np.repeat(mesh.boundary_vertex, 4)
    else:
        c2g = np.hstack([mesh.cells, mesh.n_vertices + mesh.cell_edges])
        n_total = mesh.n_vertices + mesh.n_edges
        constrained = np.concatenate([mesh.boundary_vertex, mesh.boundary_edge])
    free = np.flatnonzero(~constrained)
    free_index = np.full(n_total, CONSTRAINED, dtype=np.int64)
    free_index[free] = np.arange(len(free))
    dm = DofMap(n_total, len(free), c2g, free_index, free)
    mesh.cache[key] = dm
    return dm


@dataclass(frozen=True, eq=False)
class Space:
    """A finite element space: mesh, element family and its clamped dof map."""

    mesh: Mesh
    element: str
    dofmap: DofMap

    @classmethod
    def create(cls, mesh: Mesh, element: str) -> "Space":
        return cls(mesh, element, build_dof_map(mesh, element))

    @property
    def cells(self) -> CellBatch:
        return CellBatch.from_mesh(self.mesh, self.element)

    @property
    def ndof(self) -> int:
        return self.dofmap.n_free


def _scatter_matrix(local, rows_free, cols_free, shape):
    R = np.broadcast_to(rows_free[:, :, None], local.shape)
    C = np.broadcast_to(cols_free[:, None, :], local.shape)
    keep = (R >= 0) & (C >= 0)
    A = sp.coo_matrix((local[keep], (R[keep], C[keep])), shape=shape)
    return A.tocsr()


def assemble_form(space: Space, form: str, degree=None) -> sp.csr_matrix:
    """Assembled form restricted to free dofs (symmetrised to remove rounding asymmetry)."""
    local = space.cells.local_matrices(form, degree)
    cf = space.dofmap.cell_to_free()
    n = space.ndof
    A = _scatter_matrix(local, cf, cf, (n, n))
    A = (0.5 * (A + A.T)).tocsr()
    A.sum_duplicates()
    return A


def cells_touching(mesh: Mesh, point, tol=1e-12) -> np.ndarray:
    d = np.linalg.norm(mesh.cell_coords() - np.asarray(point, dtype=float), axis=2)
    return np.flatnonzero(np.any(d < tol, axis=1))


def assemble_load(space: Space, f, degree=LOAD_DEGREE, singular_point=None, singular_degree=14) -> np.ndarray:
    """Free-dof load vector of ``f``; cells touching ``singular_point`` use ``singular_degree``."""
    cells = space.cells
    local = np.zeros((cells.n_cells, cells.nloc))
    special = np.array([], dtype=np.int64)
    if singular_point is not None:
        special = cells_touching(space.mesh, singular_point)
    regular = np.setdiff1d(np.arange(cells.n_cells), special)
    if len(regular):
        local[regular] = cells.local_loads(f, degree, regular)
    if len(special):
        local[special] = cells.local_loads(f, max(singular_degree, degree), special)
    cf = space.dofmap.cell_to_free()
    keep = cf >= 0
    return np.bincount(cf[keep], weights=local[keep], minlength=space.ndof)


def assemble_coupling(trial: Space, test: Space, degree=None) -> sp.csr_matrix:
    """Mixed mass matrix S[i, j] = integral of phi_i (trial) times psi_j (test)."""
    if trial.mesh is not test.mesh:
        raise ValueError("trial and test spaces must share one mesh")
    a, b = trial.cells, test.cells
    if degree is None:
        degree = max(FORM_DEGREE[trial.element], FORM_DEGREE[test.element])
    X, Y, W = a.quadrature(degree)
    idx = np.arange(a.n_cells)[:, None]
    local = np.einsum("cq,cqi,cqj->cij", W, a.tabulate(idx, X, Y), b.tabulate(idx, X, Y))
    return _scatter_matrix(local, trial.dofmap.cell_to_free(), test.dofmap.cell_to_free(), (trial.ndof, test.ndof))


def interpolate(space: Space, func) -> np.ndarray:
    """Free-dof coefficients of the canonical interpolant of ``func(x, y, deriv)``.

    Clamped dofs are dropped, so ``func`` should satisfy the boundary condition
    for the result to be its interpolant.
    """
    return interpolate_global(space, func)[space.dofmap.free_dofs]


def interpolate_global(space: Space, func) -> np.ndarray:
    """Global coefficients (boundary dofs included) of the interpolant of ``func``.

    Morley uses vertex values and edge means of the normal derivative.
    """
    mesh = space.mesh
    g = np.zeros(space.dofmap.n_total)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    if space.element == BFS:
        for q, d in enumerate([(0, 0), (1, 0), (0, 1), (1, 1)]):
            g[q::4] = func(x, y, d)
    else:
        g[: mesh.n_vertices] = func(x, y, (0, 0))
        # edge means of the normal derivative (3-point Gauss along each edge)
        a, b = mesh.vertices[mesh.edges[:, 0]], mesh.vertices[mesh.edges[:, 1]]
        t, w = gauss_legendre_01(3)
        X = a[:, 0:1] + t * (b[:, 0:1] - a[:, 0:1])
        Y = a[:, 1:2] + t * (b[:, 1:2] - a[:, 1:2])
        n = mesh.edge_normals
        dn = n[:, 0:1] * func(X, Y, (1, 0)) + n[:, 1:2] * func(X, Y, (0, 1))
        g[mesh.n_vertices:] = dn @ w
    return g


def write_matrix(A, path) -> None:
    """Dump a sparse matrix as "row col value" lines, 1-based."""
    A = sp.coo_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"% {A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")

