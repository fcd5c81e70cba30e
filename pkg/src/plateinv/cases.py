"""Manufactured sources and displacements for the square and L-shaped plates.

Every evaluator follows the signature ``func(x, y)``; displacements also
accept ``deriv=(i, j)`` for partial derivatives up to total order 2.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Callable, Optional

import numpy as np
import sympy as sp

from .mesh import LSHAPE, SQUARE, Domain

GAMMA = 0.5444837367
OMEGA = 3 * np.pi / 2
CORNER_TOL = 1e-12

_x, _y = sp.symbols("x y", real=True)


def _theta(y, x):
    # branch cut along theta = 7pi/4, inside the removed quadrant
    return np.mod(np.arctan2(y, x) + np.pi / 4, 2 * np.pi) - np.pi / 4


_MODULES = [{"atan2": _theta}, "numpy"]


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    domain: Domain
    f: Callable
    u: Optional[Callable] = None  # u(x, y, deriv=(0, 0))
    regularity_note: str = ""
    singular_point: Optional[tuple] = None

    @property
    def u_known(self) -> bool:
        return self.u is not None


def _lambdify(expr):
    fn = sp.lambdify((_x, _y), expr, modules=_MODULES)

    def call(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(fn(x, y), dtype=float), np.broadcast(x, y).shape) + 0.0

    return call


def _derivative_table(expr, max_order):
    table = {}
    for i in range(max_order + 1):
        for j in range(max_order + 1 - i):
            table[(i, j)] = _lambdify(sp.diff(expr, _x, i, _y, j) if i + j else expr)
    return table


# ---------------------------------------------------------------------------
# square, polynomial displacement


@lru_cache(maxsize=None)
def _square_poly_tables():
    u = _x**2 * _y**2 * (1 - _x) ** 2 * (1 - _y) ** 2
    bih = sp.expand(sp.diff(u, _x, 4) + 2 * sp.diff(u, _x, 2, _y, 2) + sp.diff(u, _y, 4))
    return _derivative_table(u, 2), _lambdify(bih)


def case_square_poly() -> ManufacturedCase:
    du, f = _square_poly_tables()

    def u(x, y, deriv=(0, 0)):
        return du[tuple(deriv)](x, y)

    return ManufacturedCase(
        "square-poly", SQUARE, f, u,
        "u = x^2 y^2 (1-x)^2 (1-y)^2, smooth; m and f_alpha expected O(h^4) with BFS",
    )


def case_square_exp() -> ManufacturedCase:
    def f(x, y):
        return np.exp(np.asarray(x, dtype=float) + np.asarray(y, dtype=float))

    return ManufacturedCase("square-exp", SQUARE, f, None, "f = exp(x+y), u unknown (H^4)")


# ---------------------------------------------------------------------------
# L-shape, corner singular displacement


def angular_factor(theta, gamma=GAMMA, omega=OMEGA, lib=np):
    """The angular part g of the corner singular function (exactly as used for u)."""
    gm, gp = gamma - 1, gamma + 1
    return (lib.sin(gm * omega) / gm - lib.sin(gp * omega) / gp) * (lib.cos(gm * theta) - lib.cos(gp * theta)) - (
        lib.sin(gm * theta) / gm - lib.sin(gp * theta) / gp
    ) * (lib.cos(gm * omega) - lib.cos(gp * omega))


@lru_cache(maxsize=None)
def _lshape_tables():
    r = sp.sqrt(_x**2 + _y**2)
    th = sp.atan2(_y, _x)
    g = sp.Float(GAMMA, 20)
    v = r ** (1 + g) * angular_factor(th, g, 3 * sp.pi / 2, lib=sp)
    w = (_x**2 - 1) ** 2 * (_y**2 - 1) ** 2
    dv = _derivative_table(v, 4)
    dw = _derivative_table(sp.expand(w), 4)
    return dv, dw


def _leibniz(dw, dv, a, b, x, y, skip_pure_v=False):
    """d^a/dx^a d^b/dy^b of w*v from the partials of both factors."""
    total = 0.0
    for i in range(a + 1):
        for j in range(b + 1):
            if skip_pure_v and i == 0 and j == 0:
                continue
            total = total + comb(a, i) * comb(b, j) * dw[(i, j)](x, y) * dv[(a - i, b - j)](x, y)
    return total


def _radius(x, y):
    return np.hypot(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def lshape_singular_u(x, y, deriv=(0, 0)):
    dv, dw = _lshape_tables()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = _radius(x, y)
    at_corner = r < CORNER_TOL
    xs = np.where(at_corner, 1.0, x)
    ys = np.where(at_corner, 1.0, y)
    val = _leibniz(dw, dv, deriv[0], deriv[1], xs, ys)
    # u and its first derivatives tend to 0 at the corner; second ones blow up
    return np.where(at_corner, 0.0 if sum(deriv) < 2 else np.nan, val)


def lshape_singular_f(x, y):
    """Bi-Laplacian of w*v with w = (x^2-1)^2 (y^2-1)^2, v = r^(1+gamma) g(theta).

    v is biharmonic, so the w * Delta^2 v terms of the product expansion drop out.
    """
    dv, dw = _lshape_tables()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(_radius(x, y) < CORNER_TOL):
        raise ValueError("source is singular at the reentrant corner (0, 0)")
    return (
        _leibniz(dw, dv, 4, 0, x, y, True)
        + 2 * _leibniz(dw, dv, 2, 2, x, y, True)
        + _leibniz(dw, dv, 0, 4, x, y, True)
    )


def case_lshape_singular() -> ManufacturedCase:
    return ManufacturedCase(
        "lshape-singular", LSHAPE, lshape_singular_f, lshape_singular_u,
        f"u in H^(2+gamma), gamma = {GAMMA}; m expected O(h^(2 gamma))",
        singular_point=(0.0, 0.0),
    )


def lshape_h1_source(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = _radius(x, y)
    rs = np.where(r == 0, 1.0, r)
    val = (x**2 - 1) * (y**2 - 1) * r ** (2 / 3) * (1 - x / rs) * (1 + y / rs)
    return np.where(r == 0, 0.0, val)


def lshape_h1_source_polar(R, theta):
    return (R**2 * np.cos(theta) ** 2 - 1) * (R**2 * np.sin(theta) ** 2 - 1) * R ** (2 / 3) * (
        1 - np.cos(theta)
    ) * (1 + np.sin(theta))


def case_lshape_h1_source() -> ManufacturedCase:
    return ManufacturedCase(
        "lshape-h1", LSHAPE, lshape_h1_source, None,
        "f in H^1_0 with an r^(2/3) corner factor; u unknown",
        singular_point=(0.0, 0.0),
    )


def case_lshape_plate_source() -> ManufacturedCase:
    """The singular displacement itself, used as a source for plate-energy regularization."""
    return ManufacturedCase(
        "lshape-plate-source", LSHAPE, lambda x, y: lshape_singular_u(x, y), None,
        "f = singular u, in H^(2+gamma) and clamped; u unknown",
        singular_point=(0.0, 0.0),
    )


CASES = {
    "square-poly": case_square_poly,
    "square-exp": case_square_exp,
    "lshape-singular": case_lshape_singular,
    "lshape-h1": case_lshape_h1_source,
    "lshape-plate-source": case_lshape_plate_source,
}


def get_case(name: str) -> ManufacturedCase:
    try:
        return CASES[name]()
    except KeyError:
        raise ValueError(f"unknown case {name!r}; choose from {sorted(CASES)}") from None


def gamma_residual(gamma=GAMMA, omega=OMEGA) -> float:
    return float(np.sin(gamma * omega) ** 2 - gamma**2 * np.sin(omega) ** 2)


# ---------------------------------------------------------------------------
# finite-difference oracle

_D4 = np.array([-1.0, 12.0, -39.0, 56.0, -39.0, 12.0, -1.0]) / 6.0  # O(h^4) fourth derivative
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0  # O(h^4) second derivative


def fd_bilaplacian(u, x, y, h):
    """Fourth-order accurate finite-difference bi-Laplacian of ``u(x, y)``.

    ``h`` may be an array matching the points (e.g. scaled with the radius).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    k4 = np.arange(-3, 4)
    k2 = np.arange(-2, 3)
    uxxxx = sum(c * u(x + k * h, y) for c, k in zip(_D4, k4)) / h**4
    uyyyy = sum(c * u(x, y + k * h) for c, k in zip(_D4, k4)) / h**4
    uxxyy = sum(
        ci * cj * u(x + i * h, y + j * h) for ci, i in zip(_D2, k2) for cj, j in zip(_D2, k2)
    ) / h**4
    return uxxxx + 2 * uxxyy + uyyyy
