"""Run the full set of convergence studies and write one table per study.

    python3 scripts/reproduce_tables.py [--out results] [--only NAME ...] [--quick]

Each study goes to <out>/<name>/table.csv and table.txt; a summary of
runtimes is printed at the end. ``--quick`` drops two levels from every
study for a fast smoke run.
"""
import argparse
import json
import os
import sys
import time

from plateinv.study import StudyConfig, run_study

STUDIES = {
    "square-bfs-poly": dict(case="square-poly", element="bfs", k=0, alphas=(1e-3, 1e-7), levels=6),
    "square-bfs-exp": dict(case="square-exp", element="bfs", k=0, alphas=(1e-5,), levels=6),
    "lshape-bfs-k0": dict(case="lshape-singular", element="bfs", k=0, alphas=(1e-5,), levels=6),
    "lshape-bfs-k1": dict(case="lshape-h1", element="bfs", k=1, alphas=(1e-5,), levels=6),
    "lshape-bfs-k2": dict(case="lshape-plate-source", element="bfs", k=2, alphas=(1e-5,), levels=6),
    "square-morley-exp": dict(case="square-exp", element="morley", k=0, alphas=(1e-5,), levels=7),
    "lshape-morley-k0": dict(case="lshape-singular", element="morley", k=0, alphas=(1e-5,), levels=7),
    "lshape-morley-k2": dict(case="lshape-plate-source", element="morley", k=2, alphas=(1e-5,), levels=7),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*", choices=sorted(STUDIES))
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args(argv)

    timings = {}
    for name in args.only or STUDIES:
        kw = dict(STUDIES[name])
        if args.quick:
            kw["levels"] = max(3, kw["levels"] - 2)
        t0 = time.perf_counter()
        report = run_study(StudyConfig(**kw))
        timings[name] = time.perf_counter() - t0
        d = os.path.join(args.out, name)
        os.makedirs(d, exist_ok=True)
        report.to_csv(os.path.join(d, "table.csv"))
        with open(os.path.join(d, "table.txt"), "w") as fh:
            fh.write(report.to_text())
        with open(os.path.join(d, "metadata.json"), "w") as fh:
            json.dump({"config": report.config, "metadata": report.metadata}, fh, indent=2)
        print(f"== {name} ({timings[name]:.1f} s)")
        print(report.to_text())
    for name, t in timings.items():
        print(f"{name:20s} {t:8.1f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
