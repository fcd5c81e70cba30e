"""Reconstruction error against noise level with alpha = c * delta^(2/3).

    python3 scripts/noise_sweep.py [--element bfs] [--levels 4] [--c 1.0]

Uses exact data from the smooth square case and prints the data misfit and
the L2 norm of the reconstruction for a range of noise levels.
"""
import argparse

import numpy as np

from plateinv.cases import case_square_poly
from plateinv.forward import ForwardModel, apply_measurement, default_measurements, fem_norm
from plateinv.inverse import InverseProblem, add_noise, alpha_rule, assemble_regularizer, reconstruct
from plateinv.study import mesh_hierarchy


def main(argv=None):
    ap = argparse.ArgumentParser(description="noise sweep")
    ap.add_argument("--element", default="bfs", choices=["bfs", "morley"])
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--c", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    case = case_square_poly()
    ms = default_measurements("square")
    mesh = mesh_hierarchy("square", args.element, args.levels)[-1]
    fm = ForwardModel(mesh, args.element, ms)
    m = apply_measurement(ms, lambda x, y: case.u(x, y), case.domain)
    C = assemble_regularizer(fm.ftau, 0)
    print(f"{'delta':>10} {'alpha':>10} {'misfit':>12} {'|f|_0':>12}")
    for delta in 10.0 ** np.arange(-9, -3):
        a = alpha_rule(delta, args.c)
        md = add_noise(m, delta, args.seed)
        f = reconstruct(InverseProblem(fm.W, C, md, a, fm.ftau))
        mis = np.linalg.norm(fm.W @ f.coefficients - md)
        print(f"{delta:10.1e} {a:10.2e} {mis:12.4e} {fem_norm(f, 0):12.4e}")


if __name__ == "__main__":
    main()
