import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from plateinv.assemble import Space, assemble_form
from plateinv.cases import case_square_poly, get_case
from plateinv.element import BFS, BIHARMONIC, H1, MASS, MORLEY
from plateinv.forward import FemFunction, ForwardModel, MeasurementSet, default_measurements, fem_norm
from plateinv.inverse import (
    InverseProblem,
    add_noise,
    alpha_rule,
    assemble_regularizer,
    misfit,
    penalty,
    power_iteration,
    reconstruct,
    reconstruct_coefficients,
    reconstruction_basis_diagnostics,
)
from plateinv.mesh import lshape_mesh, square_crisscross_mesh, unit_square_rect_mesh
from plateinv.quadrature import RECT, TRI

ALPHA_GRID = [1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1]

SETUPS = {
    "square-bfs": (unit_square_rect_mesh(4), BFS, "square-poly"),
    "square-morley": (square_crisscross_mesh(4), MORLEY, "square-poly"),
    "lshape-bfs": (lshape_mesh(RECT, 4), BFS, "lshape-singular"),
    "lshape-morley": (lshape_mesh(TRI, 2), MORLEY, "lshape-singular"),
}
_models = {}


def setup(name):
    if name not in _models:
        mesh, element, case = SETUPS[name]
        c = get_case(case)
        fm = ForwardModel(mesh, element, default_measurements(c.domain.name), singular_point=c.singular_point)
        _models[name] = (fm, fm.measure(fm.solve(c.f)))
    return _models[name]


@pytest.mark.parametrize("k", [0, 1, 2])
def test_regularizer_forms(k):
    space = Space.create(unit_square_rect_mesh(3), BFS)
    want = assemble_form(space, [MASS, H1, BIHARMONIC][k])
    assert abs(assemble_regularizer(space, k) - want).max() == 0


def test_morley_plate_regularizer_is_stiffness():
    fm, _ = setup("square-morley")
    assert abs(assemble_regularizer(fm.ftau, 2) - fm.A).max() == 0


def test_bad_regularizer_kind():
    with pytest.raises(ValueError):
        assemble_regularizer(Space.create(unit_square_rect_mesh(3), BFS), 3)


def test_problem_validation():
    C = sp.identity(3, format="csr")
    with pytest.raises(ValueError):
        InverseProblem(np.ones((2, 3)), C, np.ones(2), 0.0)
    with pytest.raises(ValueError):
        InverseProblem(np.ones((2, 3)), C, np.ones(3), 1.0)
    with pytest.raises(ValueError):
        InverseProblem(np.ones((2, 4)), C, np.ones(2), 1.0)


def test_zero_data_zero_source():
    fm, _ = setup("square-bfs")
    f = reconstruct(InverseProblem(fm.W, assemble_regularizer(fm.ftau, 0), np.zeros(2), 1e-5, fm.ftau))
    assert isinstance(f, FemFunction) and np.all(f.coefficients == 0)


@pytest.mark.parametrize("name", list(SETUPS))
@pytest.mark.parametrize("k", [0, 1, 2])
def test_tikhonov_monotone_in_alpha(name, k):
    fm, m = setup(name)
    C = assemble_regularizer(fm.ftau, k)
    mis, pen = [], []
    for a in ALPHA_GRID:
        ip = InverseProblem(fm.W, C, m, a)
        f = reconstruct_coefficients(ip)
        mis.append(misfit(ip, f))
        pen.append(penalty(ip, f))
    assert all(mis[i] <= mis[i + 1] * (1 + 1e-9) for i in range(len(mis) - 1)), mis
    assert all(pen[i] >= pen[i + 1] * (1 - 1e-9) for i in range(len(pen) - 1)), pen


@pytest.mark.parametrize("name", list(SETUPS))
@pytest.mark.parametrize("k", [0, 1, 2])
def test_span_residual(name, k):
    fm, m = setup(name)
    d = reconstruction_basis_diagnostics(fm, k, 1e-5, m)
    assert d["span_residual"] < 1e-8
    L = d["L"]
    assert np.abs(L - L.T).max() <= 1e-12 * np.abs(L).max()
    assert np.linalg.eigvalsh(L).min() > 0
    assert d["lambda_max"] == pytest.approx(np.linalg.eigvalsh(L).max(), rel=1e-8)
    assert np.isfinite(d["L_difference"])


def test_single_region_gram_is_positive_scalar():
    fm = ForwardModel(unit_square_rect_mesh(4), BFS, MeasurementSet(((0.25, 0.5, 0.25, 0.5),)))
    d = reconstruction_basis_diagnostics(fm, 0, 1e-5)
    assert d["L"].shape == (1, 1) and d["L"][0, 0] > 0


@given(c=st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-6), k=st.sampled_from([0, 1, 2]))
def test_reconstruction_scales_with_data(c, k):
    fm, m = setup("square-bfs")
    C = assemble_regularizer(fm.ftau, k)
    f1 = reconstruct_coefficients(InverseProblem(fm.W, C, m, 1e-5))
    fc = reconstruct_coefficients(InverseProblem(fm.W, C, c * m, 1e-5))
    assert np.linalg.norm(fc - c * f1) <= 1e-11 * np.linalg.norm(c * f1)


@pytest.mark.parametrize("alpha", [1e-7, 1e-5, 1e-3])
def test_alpha_continuity(alpha):
    fm, m = setup("square-morley")
    C = assemble_regularizer(fm.ftau, 0)
    f = reconstruct_coefficients(InverseProblem(fm.W, C, m, alpha))
    g = reconstruct_coefficients(InverseProblem(fm.W, C, m, alpha * (1 + 1e-6)))
    cn = lambda v: np.sqrt(v @ (C @ v))
    assert cn(f - g) < 1e-4 * cn(f)


def test_square_poly_self_convergence_near_fourth_order():
    from plateinv.study import run_study

    rep = run_study(case="square-poly", element=BFS, k=0, alphas=(1e-3,), levels=5)
    orders = [r.order_f[0] for r in rep.rows[:3]]
    assert min(orders) > 3.5, orders


@given(st.floats(0, 10), st.integers(0, 2**32 - 1))
def test_noise_norm_and_determinism(delta, seed):
    m = np.array([0.3, -1.2, 5.0])
    md = add_noise(m, delta, seed)
    assert abs(np.linalg.norm(md - m) - delta) <= 1e-14 * max(1.0, delta)
    assert np.array_equal(md, add_noise(m, delta, seed))


def test_noise_zero_is_identity_and_negative_rejected():
    m = np.array([1.0, 2.0])
    assert np.array_equal(add_noise(m, 0.0, 5), m)
    with pytest.raises(ValueError):
        add_noise(m, -1.0, 0)


def test_alpha_rule_values():
    assert alpha_rule(1e-6) == pytest.approx(1e-4, rel=1e-12)
    assert alpha_rule(8e-3) == pytest.approx(4e-2, rel=1e-12)
    assert alpha_rule(1e-6, c=3.0) == pytest.approx(3e-4, rel=1e-12)


@given(st.floats(1e-12, 1e3))
def test_alpha_rule_halving(delta):
    assert alpha_rule(delta / 2) / alpha_rule(delta) == pytest.approx(2 ** (-2 / 3), rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, -1e-3])
def test_alpha_rule_rejects(bad):
    with pytest.raises(ValueError):
        alpha_rule(bad)


def test_power_iteration():
    assert power_iteration(np.diag([1.0, 5.0, 2.0])) == pytest.approx(5.0, rel=1e-8)


def test_reconstruction_error_shrinks_with_alpha_for_exact_data():
    # m is exact for some f in span; smaller alpha fits the data better
    fm, m = setup("square-bfs")
    C = assemble_regularizer(fm.ftau, 0)
    res = [misfit(InverseProblem(fm.W, C, m, a), reconstruct_coefficients(InverseProblem(fm.W, C, m, a)))
           for a in (1e-3, 1e-7)]
    assert res[1] < res[0]
    assert fem_norm(reconstruct(InverseProblem(fm.W, C, m, 1e-5, fm.ftau)), 0) > 0
