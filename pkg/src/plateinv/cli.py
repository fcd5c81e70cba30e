"""Command-line entry point: ``plateinv forward|invert|study [flags]``.

Settings come from defaults, then an optional ``--config`` file (flat
``key=value`` lines, repeated keys for lists, or a previous run's
manifest.json), then command-line flags.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from . import __version__
from .cases import CASES, get_case
from .element import BFS, MORLEY
from .forward import DEFAULT_REGIONS, ForwardModel, MeasurementSet, apply_measurement, fem_norm
from .inverse import InverseProblem, add_noise, assemble_regularizer, misfit, penalty, reconstruct
from .linalg import factor_spd
from .assemble import write_matrix
from .mesh import DOMAINS, mesh_size, write_mesh
from .study import StudyConfig, mesh_hierarchy, run_study, successive_orders

log = logging.getLogger("plateinv")

COMMANDS = ("forward", "invert", "study")
DEFAULT_CASE = {"square": "square-poly", "lshape": "lshape-singular"}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


@dataclass
class RunConfig:
    command: str = "study"
    domain: Optional[str] = None
    case: Optional[str] = None
    element: str = BFS
    k: int = 0
    alpha: Optional[list] = None
    levels: Optional[int] = None
    regions: Optional[list] = None
    delta: float = 0.0
    seed: int = 0
    out: str = "out"
    quad_degree: int = 10
    singular_degree: int = 14
    data_mode: str = "auto"
    data: Optional[list] = None
    export: bool = False

    def resolve(self) -> "RunConfig":
        """Fill case/domain-dependent defaults and validate every field."""
        if self.command not in COMMANDS:
            raise ConfigError(f"command: expected one of {COMMANDS}, got {self.command!r}")
        if self.domain is not None and self.domain not in DOMAINS:
            raise ConfigError(f"domain: expected one of {sorted(DOMAINS)}, got {self.domain!r}")
        if self.case is None:
            self.case = DEFAULT_CASE[self.domain or "square"]
        if self.case not in CASES:
            raise ConfigError(f"case: expected one of {sorted(CASES)}, got {self.case!r}")
        case_domain = get_case(self.case).domain.name
        if self.domain is None:
            self.domain = case_domain
        elif self.domain != case_domain:
            raise ConfigError(f"domain: case {self.case!r} lives on {case_domain!r}, not {self.domain!r}")
        if self.element not in (BFS, MORLEY):
            raise ConfigError(f"element: expected 'bfs' or 'morley', got {self.element!r}")
        if self.k not in (0, 1, 2):
            raise ConfigError(f"k: expected 0, 1 or 2, got {self.k!r}")
        if self.alpha is None:
            self.alpha = [1e-3, 1e-7] if self.case == "square-poly" else [1e-5]
        if not self.alpha or any(not (a > 0 and math.isfinite(a)) for a in self.alpha):
            raise ConfigError(f"alpha: every value must be positive and finite, got {self.alpha}")
        if self.levels is None:
            self.levels = 6 if self.element == BFS else 7
        min_levels = 3 if self.command == "study" else 1
        if self.levels != int(self.levels) or self.levels < min_levels:
            raise ConfigError(f"levels: need an integer >= {min_levels}, got {self.levels!r}")
        if self.regions is None:
            self.regions = [list(r) for r in DEFAULT_REGIONS[self.domain]]
        try:
            MeasurementSet(self.regions).check_inside(DOMAINS[self.domain])
        except ValueError as exc:
            raise ConfigError(f"regions: {exc}") from None
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise ConfigError(f"delta: must be nonnegative, got {self.delta}")
        if self.seed < 0:
            raise ConfigError(f"seed: must be nonnegative, got {self.seed}")
        if self.quad_degree < 1:
            raise ConfigError(f"quad_degree: must be positive, got {self.quad_degree}")
        if self.singular_degree < 1:
            raise ConfigError(f"singular_degree: must be positive, got {self.singular_degree}")
        if self.data is not None:
            if self.command != "invert":
                raise ConfigError("data: measurements can only be supplied to 'invert'")
            if len(self.data) != len(self.regions):
                raise ConfigError(f"data: expected {len(self.regions)} values (one per region), got {len(self.data)}")
        if not self.out:
            raise ConfigError("out: output directory must be given")
        return self


# ---------------------------------------------------------------------------
# parsing

_LIST_KEYS = {"alpha": float, "data": float}


def _parse_floats(text, name):
    try:
        vals = [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{name}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(f"{name}: no values given")
    return vals


def _parse_regions(text):
    regions = []
    for part in str(text).split(";"):
        if not part.strip():
            continue
        try:
            r = [float(v) for v in part.split(",")]
        except ValueError:
            raise ConfigError(f"regions: cannot parse {part!r} as x0,x1,y0,y1") from None
        if len(r) != 4:
            raise ConfigError(f"regions: {part!r} needs four numbers x0,x1,y0,y1")
        regions.append(r)
    if not regions:
        raise ConfigError("regions: no regions given")
    return regions


def _parse_int(text, name):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{name}: expected an integer, got {text!r}") from None
    if v != int(v):
        raise ConfigError(f"{name}: expected an integer, got {text!r}")
    return int(v)


def _parse_float(text, name):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{name}: expected a number, got {text!r}") from None


def _parse_bool(text, name):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{name}: expected true/false, got {text!r}")


_CONVERTERS = {
    "k": _parse_int,
    "levels": _parse_int,
    "seed": _parse_int,
    "quad_degree": _parse_int,
    "singular_degree": _parse_int,
    "delta": _parse_float,
    "export": _parse_bool,
}
_FIELDS = {f.name for f in fields(RunConfig)}


def _convert(key, value):
    if key == "regions":
        return _parse_regions(value)
    if key in _LIST_KEYS:
        return _parse_floats(value, key)
    if key in _CONVERTERS:
        return _CONVERTERS[key](value, key)
    return str(value).strip()


def read_config_file(path) -> dict:
    """Flat ``key=value`` file, or a manifest.json whose "config" entry is reused."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    if path.endswith(".json") or text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {path} is not valid JSON ({exc.msg})") from None
        raw = doc.get("config", doc)
        out = {}
        for key, value in raw.items():
            if key not in _FIELDS:
                raise ConfigError(f"config: unknown key {key!r}")
            out[key] = value
        return out
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config: line {lineno} is not key=value: {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "region":
            key = "regions"
        if key not in _FIELDS:
            raise ConfigError(f"config: unknown key {key!r} on line {lineno}")
        value = _convert(key, value)
        # repeated keys accumulate for list-valued settings
        if key in out and (key == "regions" or key in _LIST_KEYS):
            out[key] = out[key] + value
        else:
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plateinv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"plateinv {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{forward,invert,study}")
    helps = {
        "forward": "solve the plate problem level by level and report the measurements",
        "invert": "reconstruct the source on the finest mesh for each alpha",
        "study": "convergence table over refinement levels",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="key=value file or a previous manifest.json")
        p.add_argument("--domain", choices=sorted(DOMAINS))
        p.add_argument("--case", help=f"one of {', '.join(sorted(CASES))}")
        p.add_argument("--element", help="bfs or morley")
        p.add_argument("--k", help="regularization order 0, 1 or 2")
        p.add_argument("--alpha", help="comma-separated regularization parameters")
        p.add_argument("--levels", help="number of refinement levels")
        p.add_argument("--regions", help="x0,x1,y0,y1;x0,x1,y0,y1;...")
        p.add_argument("--delta", help="noise level (Euclidean norm of the perturbation)")
        p.add_argument("--seed", help="noise seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--quad-degree", dest="quad_degree", help="load quadrature degree")
        p.add_argument("--singular-degree", dest="singular_degree", help="load degree near the corner")
        p.add_argument("--data-mode", dest="data_mode", help="auto, exact, per-level or finest (study)")
        if name == "invert":
            p.add_argument("--data", help="comma-separated measured averages, one per region")
        if name == "forward":
            p.add_argument("--export", action="store_const", const="true",
                           help="also write the finest mesh and stiffness matrix")
    return parser


def parse_config(argv) -> RunConfig:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise SystemExit(2)
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("config", "command") or value is None:
            continue
        values[key] = _convert(key, value)
    values["command"] = args.command
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from None
    for key in ("levels", "k", "seed", "quad_degree", "singular_degree"):
        v = getattr(cfg, key)
        if v is not None and not isinstance(v, int):
            setattr(cfg, key, _parse_int(v, key))
    if cfg.alpha is not None:
        cfg.alpha = [float(a) for a in cfg.alpha]
    if cfg.regions is not None:
        cfg.regions = [[float(v) for v in r] for r in cfg.regions]
    cfg.delta = float(cfg.delta)
    return cfg.resolve()


# ---------------------------------------------------------------------------
# output


def _fmt17(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def table_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt17(v) for v in r])
    return buf.getvalue()


def table_text(columns, rows) -> str:
    def fmt(v):
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if math.isnan(v):
            return "-"
        return f"{v:.6e}"

    table = [list(columns)] + [[fmt(v) for v in r] for r in rows]
    widths = [max(len(r[j]) for r in table) for j in range(len(columns))]
    return "\n".join("  ".join(c.rjust(wd) for c, wd in zip(r, widths)) for r in table) + "\n"


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _versions():
    import scipy
    import shapely
    import sympy

    return {
        "plateinv": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "sympy": sympy.__version__,
        "shapely": shapely.__version__,
    }


class _Timer:
    def __init__(self):
        self.timings = {}

    def stage(self, name, fn, *a, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*a, **kw)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0


# ---------------------------------------------------------------------------
# commands


def _models(cfg, timer, levels):
    case = get_case(cfg.case)
    ms = MeasurementSet(cfg.regions)
    meshes = timer.stage("mesh", mesh_hierarchy, cfg.domain, cfg.element, levels)

    def build(mesh):
        return ForwardModel(mesh, cfg.element, ms, load_degree=cfg.quad_degree,
                            singular_point=case.singular_point, singular_degree=cfg.singular_degree)

    return case, ms, meshes, build


def run_forward(cfg: RunConfig, timer: _Timer):
    case, ms, meshes, build = _models(cfg, timer, cfg.levels)
    m_levels, models = [], []
    for mesh in meshes:
        fm = timer.stage("assemble", build, mesh)
        u = timer.stage("forward", fm.solve, case.f)
        m_levels.append(fm.measure(u))
        models.append(fm)
    if case.u_known:
        m_ref = timer.stage("forward", apply_measurement, ms, lambda x, y: case.u(x, y), case.domain)
    else:
        m_ref = m_levels[-1]
    err = [float(np.linalg.norm(m_ref - m)) for m in m_levels]
    orders = successive_orders(err)
    cols = ["level", "h", "ndof"] + [f"m[{j + 1}]" for j in range(ms.N)] + ["err_m", "order_m"]
    rows = [
        [i + 1, mesh_size(fm.mesh), fm.space.ndof, *m_levels[i].tolist(), err[i], orders[i]]
        for i, fm in enumerate(models)
    ]
    if cfg.export:
        fm = models[-1]
        timer.stage("export", write_mesh, fm.mesh, os.path.join(cfg.out, "mesh.txt"))
        timer.stage("export", write_matrix, fm.A, os.path.join(cfg.out, "stiffness.txt"))
    return cols, rows, {"m_reference": m_ref.tolist(), "reference": "exact" if case.u_known else "finest-level"}


def run_invert(cfg: RunConfig, timer: _Timer):
    case, ms, meshes, build = _models(cfg, timer, cfg.levels)
    fm = timer.stage("assemble", build, meshes[-1])
    if cfg.data is not None:
        m = np.asarray(cfg.data, dtype=float)
        source = "given"
    elif case.u_known:
        m = timer.stage("forward", apply_measurement, ms, lambda x, y: case.u(x, y), case.domain)
        source = "exact"
    else:
        m = fm.measure(timer.stage("forward", fm.solve, case.f))
        source = "computed"
    m_noisy = add_noise(m, cfg.delta, cfg.seed)
    C = timer.stage("regularizer", assemble_regularizer, fm.ftau, cfg.k)
    Cf = timer.stage("regularizer", factor_spd, C)
    W = timer.stage("forward", lambda: fm.W)
    cols = ["alpha", "misfit", "penalty", f"norm_{cfg.k}(f)"]
    rows, coefs = [], []
    for a in cfg.alpha:
        ip = InverseProblem(W, C, m_noisy, a, fm.ftau, Cf)
        f = timer.stage("inverse", reconstruct, ip)
        rows.append([a, misfit(ip, f.coefficients), penalty(ip, f.coefficients), fem_norm(f, cfg.k)])
        coefs.append(f.coefficients)
    coef_cols = [f"f[{a:.0e}]" for a in cfg.alpha]
    coef_rows = [list(r) for r in np.column_stack(coefs)]
    _write(os.path.join(cfg.out, "coefficients.csv"), table_csv(coef_cols, coef_rows))
    extra = {"m": m.tolist(), "m_noisy": m_noisy.tolist(), "data_source": source,
             "ndof": fm.space.ndof, "h": mesh_size(fm.mesh)}
    return cols, rows, extra


def run_study_command(cfg: RunConfig, timer: _Timer):
    sc = StudyConfig(
        case=cfg.case, element=cfg.element, k=cfg.k, alphas=tuple(cfg.alpha), levels=cfg.levels,
        regions=tuple(tuple(r) for r in cfg.regions), delta=cfg.delta, seed=cfg.seed,
        load_degree=cfg.quad_degree, singular_degree=cfg.singular_degree, data_mode=cfg.data_mode,
    )
    report = timer.stage("study", run_study, sc)
    return report, {"metadata": report.metadata}


def run(cfg: RunConfig, argv=None) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    timer = _Timer()
    t0 = time.perf_counter()
    if cfg.command == "study":
        report, extra = run_study_command(cfg, timer)
        csv_text, txt = report.to_csv(), report.to_text()
    else:
        fn = run_forward if cfg.command == "forward" else run_invert
        cols, rows, extra = fn(cfg, timer)
        csv_text, txt = table_csv(cols, rows), table_text(cols, rows)
    _write(os.path.join(cfg.out, "table.csv"), csv_text)
    _write(os.path.join(cfg.out, "table.txt"), txt)
    manifest = {
        "command": cfg.command,
        "argv": list(argv) if argv is not None else None,
        "config": asdict(cfg),
        "seeds": {"noise": cfg.seed},
        "versions": _versions(),
        "timings": {**{k: round(v, 6) for k, v in timer.timings.items()},
                    "total": round(time.perf_counter() - t0, 6)},
        **extra,
    }
    with open(os.path.join(cfg.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    sys.stdout.write(txt)
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"plateinv: invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg, argv)
    except StageError as exc:
        print(f"plateinv: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"plateinv: stage 'output' failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
