"""Structured meshes of the unit square and the L-shaped domain, with red refinement."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .quadrature import RECT, TRI

_KEY_DIGITS = 12


@dataclass(frozen=True)
class Domain:
    """A polygonal domain given as a union of disjoint axis-aligned boxes (x0, x1, y0, y1)."""

    name: str
    pieces: tuple

    @property
    def area(self) -> float:
        return float(sum((x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in self.pieces))

    def overlap_area(self, box) -> float:
        a0, a1, b0, b1 = box
        total = 0.0
        for x0, x1, y0, y1 in self.pieces:
            dx = min(a1, x1) - max(a0, x0)
            dy = min(b1, y1) - max(b0, y0)
            if dx > 0 and dy > 0:
                total += dx * dy
        return total

    def contains_box(self, box, tol=1e-12) -> bool:
        a0, a1, b0, b1 = box
        area = (a1 - a0) * (b1 - b0)
        return area > 0 and abs(self.overlap_area(box) - area) <= tol * max(area, 1.0)

    def contains(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        for x0, x1, y0, y1 in self.pieces:
            inside |= (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        return inside


SQUARE = Domain("square", ((0.0, 1.0, 0.0, 1.0),))
LSHAPE = Domain(
    "lshape",
    ((-1.0, 0.0, 0.0, 1.0), (0.0, 1.0, 0.0, 1.0), (-1.0, 0.0, -1.0, 0.0)),
)
DOMAINS = {"square": SQUARE, "lshape": LSHAPE}


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray  # (nv, 2)
    cells: np.ndarray  # (nc, 4) or (nc, 3), counterclockwise
    cell_kind: str
    edges: np.ndarray  # (ne, 2) with edges[:, 0] < edges[:, 1]
    cell_edges: np.ndarray  # (nc, nloc); local edge j joins local vertices j and j+1
    edge_midpoints: np.ndarray
    edge_normals: np.ndarray  # unit, globally oriented (see _edge_normals)
    boundary_vertex: np.ndarray
    boundary_edge: np.ndarray
    level: int = 0
    domain: Optional[Domain] = None
    parent: Optional[np.ndarray] = None  # parent cell index in parent_mesh
    parent_mesh: Optional["Mesh"] = None
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def cell_coords(self) -> np.ndarray:
        return self.vertices[self.cells]

    def cell_areas(self) -> np.ndarray:
        P = self.cell_coords()
        x, y = P[..., 0], P[..., 1]
        return 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)

    def cell_diameters(self) -> np.ndarray:
        P = self.cell_coords()
        k = P.shape[1]
        d = np.zeros(self.n_cells)
        for i in range(k):
            for j in range(i + 1, k):
                d = np.maximum(d, np.linalg.norm(P[:, i] - P[:, j], axis=1))
        return d

    def centroids(self) -> np.ndarray:
        return self.cell_coords().mean(axis=1)

    def rect_geometry(self):
        """(x0, y0, hx, hy) per cell; only meaningful for rectangles."""
        P = self.cell_coords()
        x0, y0 = P[:, 0, 0], P[:, 0, 1]
        return x0, y0, P[:, 2, 0] - x0, P[:, 2, 1] - y0


def mesh_size(mesh: Mesh) -> float:
    if mesh.n_cells == 0:
        raise ValueError("empty mesh")
    return float(mesh.cell_diameters().max())


def _dedupe_vertices(vertices, cells):
    keys = np.round(vertices, _KEY_DIGITS) + 0.0  # normalise -0.0
    order = np.lexsort((keys[:, 1], keys[:, 0]))
    sk = keys[order]
    new = np.ones(len(sk), dtype=bool)
    new[1:] = np.any(sk[1:] != sk[:-1], axis=1)
    uid = np.cumsum(new) - 1
    remap = np.empty(len(vertices), dtype=np.int64)
    remap[order] = uid
    return sk[new], remap[cells]


def _edge_normals(vertices, edges):
    # Tangent runs from the lower to the higher global vertex index; the
    # normal is that tangent rotated clockwise. Depends only on global data,
    # so both cells sharing an edge see the same normal.
    t = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    t /= np.linalg.norm(t, axis=1)[:, None]
    return np.column_stack([t[:, 1], -t[:, 0]])


def _build(vertices, cells, kind, level=0, domain=None, parent=None, parent_mesh=None):
    vertices = np.asarray(vertices, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    vertices, cells = _dedupe_vertices(vertices, cells)
    P = vertices[cells]
    x, y = P[..., 0], P[..., 1]
    signed = 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
    if np.any(np.abs(signed) < 1e-14):
        raise ValueError("degenerate cell in mesh construction")
    flip = signed < 0
    cells[flip] = cells[flip][:, ::-1]
    nloc = cells.shape[1]
    if kind == RECT:
        # start at the bottom-left corner
        P = vertices[cells]
        start = np.argmin(P[..., 0] + P[..., 1], axis=1)
    else:
        start = np.argmin(cells, axis=1)
    idx = (start[:, None] + np.arange(nloc)[None, :]) % nloc
    cells = np.take_along_axis(cells, idx, axis=1)

    cen = np.round(vertices[cells].mean(axis=1), _KEY_DIGITS)
    corder = np.lexsort((cells[:, 0], cen[:, 1], cen[:, 0]))
    cells = cells[corder]
    if parent is not None:
        parent = np.asarray(parent)[corder]

    loc = np.stack([cells, np.roll(cells, -1, axis=1)], axis=2).reshape(-1, 2)
    loc.sort(axis=1)
    edges, inv, counts = np.unique(loc, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    if np.any(counts > 2):
        raise ValueError("non-manifold mesh: edge shared by more than two cells")
    cell_edges = inv.reshape(len(cells), nloc)
    boundary_edge = counts == 1
    boundary_vertex = np.zeros(len(vertices), dtype=bool)
    boundary_vertex[edges[boundary_edge].ravel()] = True
    mid = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    return Mesh(
        vertices=vertices,
        cells=cells,
        cell_kind=kind,
        edges=edges,
        cell_edges=cell_edges,
        edge_midpoints=mid,
        edge_normals=_edge_normals(vertices, edges),
        boundary_vertex=boundary_vertex,
        boundary_edge=boundary_edge,
        level=level,
        domain=domain,
        parent=parent,
        parent_mesh=parent_mesh,
    )


def _grid_rects(x0, y0, side, n):
    h = side / n
    verts, cells = [], []
    for i in range(n):
        for j in range(n):
            a, b = x0 + i * h, y0 + j * h
            base = len(verts)
            verts += [(a, b), (a + h, b), (a + h, b + h), (a, b + h)]
            cells.append([base, base + 1, base + 2, base + 3])
    return verts, cells


def _grid_crisscross(x0, y0, side, n):
    h = side / n
    verts, cells = [], []
    for i in range(n):
        for j in range(n):
            a, b = x0 + i * h, y0 + j * h
            base = len(verts)
            verts += [(a, b), (a + h, b), (a + h, b + h), (a, b + h), (a + h / 2, b + h / 2)]
            c = base + 4
            cells += [[base, base + 1, c], [base + 1, base + 2, c], [base + 2, base + 3, c], [base + 3, base, c]]
    return verts, cells


def _grid_diagonal(x0, y0, side, n):
    h = side / n
    verts, cells = [], []
    for i in range(n):
        for j in range(n):
            a, b = x0 + i * h, y0 + j * h
            base = len(verts)
            verts += [(a, b), (a + h, b), (a + h, b + h), (a, b + h)]
            cells += [[base, base + 1, base + 2], [base, base + 2, base + 3]]
    return verts, cells


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    return int(n)


def _from_pieces(domain, n, builder, kind):
    verts, cells = [], []
    for x0, x1, y0, y1 in domain.pieces:
        v, c = builder(x0, y0, x1 - x0, n)
        cells += [[k + len(verts) for k in cell] for cell in c]
        verts += v
    return _build(verts, cells, kind, domain=domain)


def unit_square_rect_mesh(n: int) -> Mesh:
    """n x n axis-aligned rectangles on (0,1)^2."""
    return _from_pieces(SQUARE, _check_n(n), _grid_rects, RECT)


def square_crisscross_mesh(n: int) -> Mesh:
    """Each of the n x n cells of (0,1)^2 split by both diagonals into 4 triangles."""
    return _from_pieces(SQUARE, _check_n(n), _grid_crisscross, TRI)


def lshape_mesh(kind: str, n: int, layout: str = "diagonal") -> Mesh:
    """Mesh of (-1,1)^2 minus [0,1)x(-1,0], each unit quadrant split into n x n cells.

    For triangles, ``layout="diagonal"`` splits every cell along its
    south-west/north-east diagonal (six triangles at n=1, h = sqrt(2));
    ``layout="crisscross"`` uses four triangles per cell instead.
    """
    n = _check_n(n)
    if kind == RECT:
        return _from_pieces(LSHAPE, n, _grid_rects, RECT)
    if kind != TRI:
        raise ValueError(f"unknown cell kind {kind!r}")
    builders = {"diagonal": _grid_diagonal, "crisscross": _grid_crisscross}
    if layout not in builders:
        raise ValueError(f"unknown triangle layout {layout!r}")
    return _from_pieces(LSHAPE, n, builders[layout], TRI)


def red_refine(mesh: Mesh) -> Mesh:
    """Quadrisect every cell through its edge midpoints."""
    P = mesh.cell_coords()
    nc = mesh.n_cells
    if mesh.cell_kind == RECT:
        v0, v1, v2, v3 = (P[:, i] for i in range(4))
        m01, m12, m23, m30 = (v0 + v1) / 2, (v1 + v2) / 2, (v2 + v3) / 2, (v3 + v0) / 2
        c = (v0 + v2) / 2
        children = [
            (v0, m01, c, m30),
            (m01, v1, m12, c),
            (c, m12, v2, m23),
            (m30, c, m23, v3),
        ]
    else:
        v0, v1, v2 = (P[:, i] for i in range(3))
        m01, m12, m20 = (v0 + v1) / 2, (v1 + v2) / 2, (v2 + v0) / 2
        children = [(v0, m01, m20), (m01, v1, m12), (m20, m12, v2), (m01, m12, m20)]
    nloc = len(children[0])
    # stack as (nc, 4 children, nloc, 2)
    pts = np.stack([np.stack(ch, axis=1) for ch in children], axis=1)
    verts = pts.reshape(-1, 2)
    cells = np.arange(len(verts)).reshape(-1, nloc)
    parent = np.repeat(np.arange(nc), 4)
    return _build(
        verts, cells, mesh.cell_kind, level=mesh.level + 1, domain=mesh.domain,
        parent=parent, parent_mesh=mesh,
    )


def refine_times(mesh: Mesh, times: int) -> Mesh:
    for _ in range(times):
        mesh = red_refine(mesh)
    return mesh


def ancestor_cells(fine: Mesh, coarse: Mesh) -> np.ndarray:
    """Index of the ``coarse`` cell containing each ``fine`` cell (nested meshes only)."""
    idx = np.arange(fine.n_cells)
    m = fine
    while m is not coarse:
        if m.parent_mesh is None:
            raise ValueError("meshes are not related by refinement")
        idx = m.parent[idx]
        m = m.parent_mesh
    return idx


def locate_points(mesh: Mesh, points, tol=1e-12) -> np.ndarray:
    """Lowest-index cell containing each point, or -1 if none."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.full(len(points), -1, dtype=np.int64)
    P = mesh.cell_coords()
    if mesh.cell_kind == RECT:
        lo, hi = P[:, 0], P[:, 2]
    else:
        lo, hi = P.min(axis=1), P.max(axis=1)
    for start in range(0, len(points), 256):
        q = points[start:start + 256]
        inside = np.all((q[:, None, :] >= lo[None] - tol) & (q[:, None, :] <= hi[None] + tol), axis=2)
        if mesh.cell_kind == TRI:
            for i in range(3):
                a, b = P[:, i], P[:, (i + 1) % 3]
                cross = (b[:, 0] - a[:, 0])[None] * (q[:, None, 1] - a[None, :, 1]) - (
                    b[:, 1] - a[:, 1]
                )[None] * (q[:, None, 0] - a[None, :, 0])
                inside &= cross >= -tol
        hit = inside.any(axis=1)
        out[start:start + 256][hit] = np.argmax(inside[hit], axis=1)
    return out


def write_mesh(mesh: Mesh, path) -> None:
    """Plain-text dump: header "rect|tri nv nc", vertex lines, cell lines."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.cell_kind} {mesh.n_vertices} {mesh.n_cells}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for c in mesh.cells:
            fh.write(" ".join(str(int(i)) for i in c) + "\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        kind, nv, nc = fh.readline().split()
        nv, nc = int(nv), int(nc)
        verts = [tuple(map(float, fh.readline().split())) for _ in range(nv)]
        cells = [tuple(map(int, fh.readline().split())) for _ in range(nc)]
    return _build(verts, cells, kind)
