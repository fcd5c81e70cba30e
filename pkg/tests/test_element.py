import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from plateinv.element import (
    BFS,
    BIHARMONIC,
    H1,
    MASS,
    MORLEY,
    DofKind,
    LocalDof,
    bfs_basis,
    bfs_dof_values,
    bfs_tabulate,
    local_dofs,
    local_load,
    local_matrix,
    morley_basis,
    morley_data,
    morley_dof_values,
    morley_interpolate,
    morley_tabulate,
)

UNIT_RECT = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
UNIT_TRI = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)

coef = st.floats(min_value=-2, max_value=2, allow_nan=False)
corner = st.floats(min_value=-1, max_value=1, allow_nan=False)
side = st.floats(min_value=0.1, max_value=2, allow_nan=False)


@st.composite
def rectangles(draw):
    x0, y0, hx, hy = draw(corner), draw(corner), draw(side), draw(side)
    return np.array([[x0, y0], [x0 + hx, y0], [x0 + hx, y0 + hy], [x0, y0 + hy]])


@st.composite
def triangles(draw):
    P = draw(arrays(float, (3, 2), elements=st.floats(-1, 1, allow_nan=False)))
    e1, e2 = P[1] - P[0], P[2] - P[0]
    area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
    lens = [np.linalg.norm(P[i] - P[(i + 1) % 3]) for i in range(3)]
    from hypothesis import assume

    assume(abs(area) > 0.05 * max(lens) ** 2)
    return P if area > 0 else P[[0, 2, 1]]


def poly_func(c, terms):
    """Polynomial sum c_k x^a y^b and its partials, as func(x, y, deriv)."""

    def f(x, y, deriv=(0, 0)):
        dx, dy = deriv
        total = 0.0
        for ck, (a, b) in zip(c, terms):
            if a < dx or b < dy:
                continue
            cx = np.prod([a - i for i in range(dx)]) if dx else 1.0
            cy = np.prod([b - i for i in range(dy)]) if dy else 1.0
            total = total + ck * cx * cy * np.asarray(x, float) ** (a - dx) * np.asarray(y, float) ** (b - dy)
        return total

    return f


BICUBIC = [(a, b) for a in range(4) for b in range(4)]
QUADRATIC = oracles.MONOMIALS


def test_dof_layout():
    assert len(local_dofs(BFS)) == 16 and len(local_dofs(MORLEY)) == 6
    assert LocalDof(DofKind.DXY, 2).index(BFS) == 11
    assert LocalDof(DofKind.EDGE_NORMAL, 1).index(MORLEY) == 4
    with pytest.raises(ValueError):
        LocalDof(DofKind.EDGE_NORMAL, 0).index(BFS)
    with pytest.raises(ValueError):
        LocalDof(DofKind.DX, 0).index(MORLEY)


@given(rectangles())
def test_bfs_duality(rect):
    D = np.array([bfs_dof_values(rect, lambda x, y, d, j=j: bfs_basis(rect, (x, y), j, d)) for j in range(16)]).T
    assert np.max(np.abs(D - np.eye(16))) < 1e-10


@given(triangles())
def test_morley_duality(tri):
    D = np.array([morley_dof_values(tri, lambda x, y, d, j=j: morley_basis(tri, (x, y), j, d)) for j in range(6)]).T
    assert np.max(np.abs(D - np.eye(6))) < 1e-10


def test_bfs_value_shape_at_own_corner():
    for c, P in enumerate(UNIT_RECT):
        i = LocalDof(DofKind.VALUE, c).index(BFS)
        assert bfs_basis(UNIT_RECT, P, i) == pytest.approx(1.0)
        assert bfs_basis(UNIT_RECT, P, i, (1, 0)) == pytest.approx(0.0, abs=1e-14)
        assert bfs_basis(UNIT_RECT, P, i, (0, 1)) == pytest.approx(0.0, abs=1e-14)


@given(rectangles(), st.floats(0, 1), st.floats(0, 1))
def test_bfs_value_shapes_partition_unity(rect, s, t):
    pt = rect[0] + np.array([s, t]) * (rect[2] - rect[0])
    vals = [bfs_basis(rect, pt, LocalDof(DofKind.VALUE, c).index(BFS)) for c in range(4)]
    assert sum(vals) == pytest.approx(1.0, abs=1e-12)


def test_bfs_against_symbolic_shapes():
    shapes = oracles.bfs_shapes_unit()
    x, y = oracles.x, oracles.y
    rng = np.random.default_rng(1)
    pts = rng.random((5, 2))
    for deriv in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]:
        tab = bfs_tabulate(0, 0, 1, 1, pts[:, 0], pts[:, 1], deriv)
        for j, s in enumerate(shapes):
            fn = sp.lambdify((x, y), sp.diff(s, x, deriv[0], y, deriv[1]))
            assert np.allclose(tab[:, j], fn(pts[:, 0], pts[:, 1]), atol=1e-13)
    # second x-derivative of the Dx shape of corner 0 at the centre: (-4 + 6x) * H0(y) -> -1 * 0.5
    val = bfs_basis(UNIT_RECT, (0.5, 0.5), LocalDof(DofKind.DX, 0).index(BFS), (2, 0))
    assert val == pytest.approx(-0.5)


@given(rectangles(), arrays(float, 16, elements=coef))
def test_bfs_reproduces_bicubics(rect, c):
    f = poly_func(c, BICUBIC)
    dofs = bfs_dof_values(rect, f)
    rng = np.random.default_rng(0)
    st_ = rng.random((20, 2))
    pts = rect[0] + st_ * (rect[2] - rect[0])
    x0, y0 = rect[0]
    hx, hy = rect[2] - rect[0]
    for deriv in [(0, 0), (1, 0), (2, 0), (1, 1)]:
        tab = bfs_tabulate(x0, y0, hx, hy, pts[:, 0], pts[:, 1], deriv)
        assert np.max(np.abs(tab @ dofs - f(pts[:, 0], pts[:, 1], deriv))) < 1e-10


@given(triangles(), arrays(float, 6, elements=coef))
def test_morley_reproduces_quadratics(tri, c):
    f = poly_func(c, QUADRATIC)
    dofs = morley_dof_values(tri, f)
    data = morley_data(tri[None])
    rng = np.random.default_rng(0)
    lam = rng.dirichlet(np.ones(3), 20)
    pts = lam @ tri
    for deriv in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1)]:
        tab = morley_tabulate(data, 0, pts[:, 0], pts[:, 1], deriv)
        assert np.max(np.abs(tab @ dofs - f(pts[:, 0], pts[:, 1], deriv))) < 1e-10


def test_morley_against_vandermonde_oracle():
    C = oracles.morley_vandermonde(UNIT_TRI)
    bary = np.array([1 / 3, 1 / 3])
    want = oracles.monomial_values(bary[0], bary[1]) @ C
    got = [morley_basis(UNIT_TRI, bary, j) for j in range(6)]
    assert np.allclose(got, want, atol=1e-13)


def test_morley_vertex_shape_duality():
    for i in range(3):
        for j in range(3):
            assert morley_basis(UNIT_TRI, UNIT_TRI[j], i) == pytest.approx(float(i == j), abs=1e-13)


@given(triangles())
def test_morley_hessian_constant(tri):
    lam = np.array([[0.2, 0.3, 0.5], [0.6, 0.1, 0.3]])
    a, b = lam @ tri
    for j in range(6):
        for d in [(2, 0), (1, 1), (0, 2)]:
            assert morley_basis(tri, a, j, d) == pytest.approx(morley_basis(tri, b, j, d), abs=1e-9)


@given(triangles())
def test_morley_integral_mean_hessian(tri):
    # v = x^3 + y^3: Hessian (6x, 0, 6y), whose cell average is 6 * centroid
    def v(x, y, deriv=(0, 0)):
        return {
            (0, 0): x**3 + y**3,
            (1, 0): 3 * x**2,
            (0, 1): 3 * y**2,
        }[tuple(deriv)]

    dofs = morley_interpolate(tri, v)
    data = morley_data(tri[None])
    c = tri.mean(axis=0)
    hxx = morley_tabulate(data, 0, c[0], c[1], (2, 0)) @ dofs
    hxy = morley_tabulate(data, 0, c[0], c[1], (1, 1)) @ dofs
    hyy = morley_tabulate(data, 0, c[0], c[1], (0, 2)) @ dofs
    assert abs(hxx - 6 * c[0]) < 1e-10
    assert abs(hxy) < 1e-10
    assert abs(hyy - 6 * c[1]) < 1e-10


@pytest.mark.parametrize("form", [MASS, H1, BIHARMONIC])
def test_bfs_unit_cell_matrices_vs_symbolic(form):
    K = local_matrix(BFS, UNIT_RECT, form)
    assert np.allclose(K, oracles.bfs_local_matrix_unit(form), rtol=1e-12, atol=1e-12)


def test_bfs_mass_row_sums_are_shape_integrals():
    K = local_matrix(BFS, UNIT_RECT, MASS)
    x, y = oracles.x, oracles.y
    ints = [float(sp.integrate(s, (x, 0, 1), (y, 0, 1))) for s in oracles.bfs_shapes_unit()]
    value_rows = [LocalDof(DofKind.VALUE, c).index(BFS) for c in range(4)]
    # sum of all value-shape columns = 1 + (derivative shapes do not enter), so pair with all shapes
    ones = np.zeros(16)
    ones[value_rows] = 1.0
    assert np.allclose(K @ ones, ints, atol=1e-14)


@pytest.mark.parametrize("element,cell", [(BFS, UNIT_RECT), (MORLEY, UNIT_TRI)])
@pytest.mark.parametrize("form", [MASS, H1, BIHARMONIC])
def test_local_matrices_symmetric(element, cell, form):
    K = local_matrix(element, cell * 0.7 + 0.1, form)
    assert np.allclose(K, K.T, atol=1e-12 * np.abs(K).max())
    if form == MASS:
        assert np.all(np.linalg.eigvalsh(K) > 0)


@given(triangles(), arrays(float, 6, elements=coef))
def test_morley_interpolate_matches_dofs_on_quadratics(tri, c):
    f = poly_func(c, QUADRATIC)
    assert np.allclose(morley_interpolate(tri, f), morley_dof_values(tri, f), atol=1e-12)


@given(triangles(), arrays(float, 3, elements=coef))
def test_morley_biharmonic_kills_linears(tri, c):
    f = poly_func(c, QUADRATIC[:3])
    K = local_matrix(MORLEY, tri, BIHARMONIC)
    assert np.max(np.abs(K @ morley_dof_values(tri, f))) < 1e-9 * max(1.0, np.abs(K).max())


def test_load_zero_and_quadrature_consistency():
    assert np.all(local_load(BFS, UNIT_RECT, lambda x, y: 0 * x) == 0)
    f = lambda x, y: np.exp(x + y)
    assert np.allclose(local_load(BFS, UNIT_RECT, f, 10), local_load(BFS, UNIT_RECT, f, 12), atol=1e-10)


def test_morley_unit_load_vs_oracle():
    C = oracles.morley_vandermonde(UNIT_TRI)
    # integrals of monomials over the unit right triangle: a! b! / (a+b+2)!
    from math import factorial

    mono = np.array([factorial(a) * factorial(b) / factorial(a + b + 2) for a, b in oracles.MONOMIALS])
    assert np.allclose(local_load(MORLEY, UNIT_TRI, lambda x, y: 1.0 + 0 * x), mono @ C, atol=1e-14)


def test_bad_inputs():
    with pytest.raises(ValueError):
        bfs_basis(UNIT_RECT, (0.5, 0.5), 0, (3, 0))
    with pytest.raises(ValueError):
        morley_data(np.array([[[0, 0], [1, 1], [2, 2]]], float))
    with pytest.raises(ValueError):
        local_matrix(BFS, UNIT_RECT, "stokes")
    with pytest.raises(ValueError):
        local_load(BFS, UNIT_RECT, lambda x, y: np.full_like(x, np.nan))
