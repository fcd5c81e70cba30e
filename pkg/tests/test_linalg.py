import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from plateinv.assemble import Space, assemble_form
from plateinv.forward import ForwardModel, MeasurementSet
from plateinv.element import BFS, MORLEY
from plateinv.inverse import assemble_regularizer
from plateinv.linalg import NotPositiveDefinite, factor_spd, solve_many, solve_tikhonov_system
from plateinv.mesh import square_crisscross_mesh, unit_square_rect_mesh


def random_spd(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    return B.T @ B + np.eye(n)


@pytest.mark.parametrize("method", ["dense", "sparse", "cg"])
def test_identity(method):
    b = np.arange(5.0)
    assert np.allclose(factor_spd(sp.identity(5, format="csr"), method=method).solve(b), b)


@pytest.mark.parametrize("method", ["dense", "sparse", "cg"])
def test_two_by_two(method):
    A = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(factor_spd(A, method=method).solve([3.0, 3.0]), [1.0, 1.0], atol=1e-12)


@pytest.mark.parametrize("method", ["dense", "sparse"])
@given(seed=st.integers(0, 10_000))
def test_random_spd_residual(method, seed):
    A = random_spd(50, seed)
    b = np.random.default_rng(seed + 1).standard_normal(50)
    x = factor_spd(sp.csr_matrix(A), method=method).solve(b)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) < 1e-10


def test_roundtrip_solve_of_product():
    A = sp.csr_matrix(random_spd(50, 3))
    x = np.random.default_rng(4).standard_normal(50)
    fac = factor_spd(A)
    assert np.linalg.norm(fac.solve(A @ x) - x) / np.linalg.norm(x) < 1e-10


def test_cg_on_plate_matrix():
    A = assemble_form(Space.create(unit_square_rect_mesh(8), BFS), "biharmonic")
    b = np.ones(A.shape[0])
    x = factor_spd(A, method="cg").solve(b)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) < 1e-10


@pytest.mark.parametrize("method", ["dense", "sparse"])
def test_indefinite_reports_row(method):
    A = np.diag([1.0, 2.0, -1.0, 3.0])
    with pytest.raises(NotPositiveDefinite) as info:
        factor_spd(sp.csr_matrix(A), method=method)
    assert info.value.row == 2
    assert "row 2" in str(info.value)


def test_solve_many_batches():
    A = sp.csr_matrix(random_spd(20, 5))
    fac = factor_spd(A)
    B = [np.ones(20), np.zeros(20), np.arange(20.0)]
    X = solve_many(fac, B)
    for b, x in zip(B, X):
        assert np.allclose(A @ x, b, atol=1e-10)
    assert np.all(X[1] == 0)
    assert solve_many(fac, []) == []


def test_dimension_mismatch():
    fac = factor_spd(sp.identity(3, format="csr"))
    with pytest.raises(ValueError):
        fac.solve(np.ones(4))


def test_tikhonov_scalar():
    f = solve_tikhonov_system(np.array([[1.0]]), sp.identity(1, format="csr"), 1.0, np.array([1.0]))
    assert f == pytest.approx([0.5])


def test_tikhonov_zero_W():
    C = sp.diags([1.0, 2.0, 4.0]).tocsr()
    W = np.zeros((2, 3))
    for method in ("dense", "woodbury"):
        assert np.all(solve_tikhonov_system(W, C, 0.5, np.zeros(3), method=method) == 0)
        f = solve_tikhonov_system(W, C, 0.5, np.ones(3), method=method)
        assert np.allclose(f, 1 / (0.5 * np.array([1.0, 2.0, 4.0])))


def test_tikhonov_rejects_bad_alpha():
    with pytest.raises(ValueError):
        solve_tikhonov_system(np.ones((1, 1)), sp.identity(1, format="csr"), 0.0, np.ones(1))


MS3 = MeasurementSet(((0.25, 0.5, 0.25, 0.5), (0.5, 0.75, 0.5, 0.75), (0.25, 0.75, 0.5, 0.75)))
MODELS = {
    "bfs": ForwardModel(unit_square_rect_mesh(4), BFS, MS3),
    "morley": ForwardModel(square_crisscross_mesh(3), MORLEY, MS3),
}


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("element", ["bfs", "morley"])
@settings(max_examples=10)
@given(seed=st.integers(0, 10_000), log_alpha=st.floats(-7, -1))
def test_woodbury_matches_dense(element, k, seed, log_alpha):
    # W from an actual forward model, random data and alpha
    fm = MODELS[element]
    C = assemble_regularizer(fm.ftau, k)
    m = np.random.default_rng(seed).standard_normal(3)
    rhs = fm.W.T @ m
    a = 10.0**log_alpha
    fd = solve_tikhonov_system(fm.W, C, a, rhs, method="dense")
    fw = solve_tikhonov_system(fm.W, C, a, rhs, method="woodbury")
    assert np.linalg.norm(fw - fd) <= 1e-9 * np.linalg.norm(fd)


def test_woodbury_matches_dense_m2_40():
    rng = np.random.default_rng(11)
    C = sp.csr_matrix(random_spd(40, 12))
    W = rng.standard_normal((3, 40))
    rhs = W.T @ rng.standard_normal(3)
    fd = solve_tikhonov_system(W, C, 1e-5, rhs, method="dense")
    fw = solve_tikhonov_system(W, C, 1e-5, rhs, method="woodbury")
    assert np.linalg.norm(fw - fd) <= 1e-9 * np.linalg.norm(fd)
