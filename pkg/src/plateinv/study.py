"""Convergence studies: levels of red refinement, forward errors and self-convergence of f_alpha."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .cases import get_case
from .element import BFS, MORLEY
from .forward import ForwardModel, MeasurementSet, apply_measurement, default_measurements, fem_norm
from .inverse import InverseProblem, add_noise, assemble_regularizer, reconstruct
from .linalg import factor_spd
from .mesh import lshape_mesh, mesh_size, red_refine, square_crisscross_mesh, unit_square_rect_mesh
from .quadrature import RECT, TRI

log = logging.getLogger(__name__)


# auto: Phi u when u is known, else each level's own m_i
DATA_MODES = ("auto", "exact", "per-level", "finest")


DEFAULT_LEVELS = {BFS: 6, MORLEY: 7}
DEFAULT_STUDY_ALPHAS = {"square-poly": (1e-3, 1e-7)}


class StudyError(RuntimeError):
    pass


@dataclass
class StudyConfig:
    case: str = "square-poly"
    element: str = BFS
    k: int = 0
    ftau_element: Optional[str] = None
    alphas: Optional[tuple] = None
    levels: Optional[int] = None
    regions: Optional[tuple] = None
    delta: float = 0.0
    seed: int = 0
    load_degree: int = 10
    singular_degree: int = 14
    triangle_layout: str = "diagonal"
    data_mode: str = "auto"

    def __post_init__(self):
        if self.alphas is None:
            self.alphas = DEFAULT_STUDY_ALPHAS.get(self.case, (1e-5,))
        if self.levels is None:
            self.levels = DEFAULT_LEVELS.get(self.element, 6)
        self.alphas = tuple(float(a) for a in self.alphas)
        if self.regions is not None:
            self.regions = tuple(tuple(float(v) for v in r) for r in self.regions)
        self.validate()

    def validate(self):
        if self.element not in (BFS, MORLEY):
            raise ValueError(f"element: expected 'bfs' or 'morley', got {self.element!r}")
        if self.ftau_element not in (None, self.element):
            raise ValueError("ftau_element: the source space must use the forward element family")
        if self.k not in (0, 1, 2):
            raise ValueError(f"k: expected 0, 1 or 2, got {self.k!r}")
        if not self.alphas or any(not a > 0 for a in self.alphas):
            raise ValueError(f"alphas: every value must be positive, got {self.alphas}")
        if int(self.levels) != self.levels or self.levels < 3:
            raise ValueError(f"levels: need an integer >= 3, got {self.levels!r}")
        if self.delta < 0:
            raise ValueError(f"delta: must be nonnegative, got {self.delta}")
        if self.data_mode not in DATA_MODES:
            raise ValueError(f"data_mode: expected one of {DATA_MODES}, got {self.data_mode!r}")
        if self.load_degree < 1 or self.singular_degree < 1:
            raise ValueError("quadrature degrees must be positive")


def initial_mesh(domain: str, element: str, layout: str = "diagonal"):
    """Level-1 mesh: h = 0.7071 for BFS, h = 1 (square) or 1.4142 (L-shape) for Morley."""
    if domain == "square":
        return unit_square_rect_mesh(2) if element == BFS else square_crisscross_mesh(1)
    if domain == "lshape":
        return lshape_mesh(RECT, 2) if element == BFS else lshape_mesh(TRI, 1, layout)
    raise ValueError(f"unknown domain {domain!r}")


def mesh_hierarchy(domain: str, element: str, levels: int, layout: str = "diagonal"):
    meshes = [initial_mesh(domain, element, layout)]
    for _ in range(levels - 1):
        meshes.append(red_refine(meshes[-1]))
    return meshes


def successive_orders(errs) -> list:
    """log2(err_i / err_{i+1}); NaN where undefined."""
    out = []
    for i in range(len(errs)):
        if i + 1 < len(errs) and errs[i] > 0 and errs[i + 1] > 0:
            out.append(math.log(errs[i] / errs[i + 1]) / math.log(2))
        else:
            out.append(math.nan)
    return out


def reference_orders(errs) -> list:
    """log(err_i / err_{L-1}) / log(2^(L-1-i)) against the next-to-finest level."""
    L = len(errs)
    ref = errs[L - 2] if L >= 2 else 0.0
    out = []
    for i in range(L):  # 0-based; level i+1
        steps = L - 2 - i
        if steps >= 1 and errs[i] > 0 and ref > 0:
            out.append(math.log(errs[i] / ref) / math.log(2**steps))
        else:
            out.append(math.nan)
    return out


@dataclass
class StudyRow:
    level: int
    h: float
    ndof: int
    err_m: float
    order_m: float
    err_f: tuple
    order_f: tuple


@dataclass
class StudyReport:
    rows: list
    alphas: tuple
    config: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def columns(self):
        cols = ["level", "h", "ndof", "err_m", "order_m"]
        for a in self.alphas:
            cols += [f"err_f[{a:.0e}]", f"order_f[{a:.0e}]"]
        return cols

    def _records(self):
        for r in self.rows:
            rec = [r.level, r.h, r.ndof, r.err_m, r.order_m]
            for e, o in zip(r.err_f, r.order_f):
                rec += [e, o]
            yield rec

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        for rec in self._records():
            w.writerow([v if isinstance(v, int) else format(v, ".17g") for v in rec])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "StudyReport":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        alphas = tuple(float(c[len("err_f["):-1]) for c in header if c.startswith("err_f["))
        rows = []
        for rec in reader:
            vals = [float(v) for v in rec]
            rows.append(StudyRow(
                int(vals[0]), vals[1], int(vals[2]), vals[3], vals[4],
                tuple(vals[5::2]), tuple(vals[6::2]),
            ))
        return cls(rows, alphas)

    def to_text(self) -> str:
        def fmt(v, kind):
            if isinstance(v, int):
                return str(v)
            if math.isnan(v):
                return "-"
            return f"{v:.4f}" if kind in ("h", "order") else f"{v:.6e}"

        cols = self.columns()
        kinds = ["int", "h", "int", "err", "order"] + ["err", "order"] * len(self.alphas)
        table = [cols] + [[fmt(v, k) for v, k in zip(rec, kinds)] for rec in self._records()]
        widths = [max(len(row[j]) for row in table) for j in range(len(cols))]
        lines = ["  ".join(c.rjust(wd) for c, wd in zip(row, widths)) for row in table]
        return "\n".join(lines) + "\n"


def source_l2_norm(model: ForwardModel, f) -> float:
    """L2 norm of a source evaluator on the model's mesh, by cellwise quadrature."""
    X, Y, W = model.space.cells.quadrature(model.load_degree)
    return float(np.sqrt(np.sum(W * f(X, Y) ** 2)))


def run_study(config: StudyConfig = None, **overrides) -> StudyReport:
    """Regenerate one convergence table.

    err(m) is |Phi u - m_i| when u is known, otherwise |m_i - m_L|.
    The data at level i is Phi u when u is known, otherwise that level's own
    m_i (``data_mode`` overrides this); noise, if requested, is added per level.
    err(f_alpha) is |f_i - f_L| in the k-th derivative norm on the finest mesh.
    """
    if config is None:
        config = StudyConfig(**overrides)
    elif overrides:
        config = StudyConfig(**{**asdict(config), **overrides})
    case = get_case(config.case)
    domain = case.domain
    ms = MeasurementSet(config.regions) if config.regions else default_measurements(domain.name)
    ms.check_inside(domain)
    L = int(config.levels)

    meshes = mesh_hierarchy(domain.name, config.element, L, config.triangle_layout)
    models, m_levels = [], []
    for i, mesh in enumerate(meshes, start=1):
        try:
            fm = ForwardModel(
                mesh, config.element, ms, load_degree=config.load_degree,
                singular_point=case.singular_point, singular_degree=config.singular_degree,
            )
            m_levels.append(fm.measure(fm.solve(case.f)))
            models.append(fm)
        except Exception as exc:
            raise StudyError(f"forward solve failed at level {i}: {exc}") from exc
        log.info("level %d: ndof %d", i, fm.space.ndof)

    if case.u_known:
        m_exact = apply_measurement(ms, lambda x, y: case.u(x, y), domain)
        err_m = [float(np.linalg.norm(m_exact - mi)) for mi in m_levels]
    else:
        m_exact = None
        err_m = [float(np.linalg.norm(mi - m_levels[-1])) for mi in m_levels]
    mode = config.data_mode
    if mode == "auto":
        mode = "exact" if case.u_known else "per-level"
    if mode == "exact":
        if m_exact is None:
            raise StudyError(f"data_mode: case {case.name!r} has no exact displacement")
        data = [m_exact] * L
    elif mode == "finest":
        data = [m_levels[-1]] * L
    else:
        data = list(m_levels)
    if config.delta > 0:
        # the same seeded perturbation at every level
        data = [add_noise(d, config.delta, config.seed) for d in data]
    regularizers = []
    for fm in models:
        C = assemble_regularizer(fm.ftau, config.k)
        regularizers.append((C, factor_spd(C)))

    err_f, bound = [], []
    for alpha in config.alphas:
        fs = []
        for i, (fm, (C, Cf)) in enumerate(zip(models, regularizers), start=1):
            try:
                fs.append(reconstruct(InverseProblem(fm.W, C, data[i - 1], alpha, fm.ftau, Cf)))
            except Exception as exc:
                raise StudyError(f"reconstruction failed at level {i} (alpha={alpha:g}): {exc}") from exc
        err_f.append([fem_norm(f, config.k, fs[-1]) for f in fs])
        bound.append(fem_norm(fs[-1], config.k))

    # the continuous bound |f_alpha|_k <= |f|_k has no discrete proof; record, do not enforce
    f_norm = source_l2_norm(models[-1], case.f) if config.k == 0 else None
    if f_norm is not None:
        for a, b in zip(config.alphas, bound):
            log.info("alpha %g: |f_alpha,L|_0 = %.6e, |f|_0 = %.6e", a, b, f_norm)

    order_m = successive_orders(err_m)
    order_f = [reference_orders(e) for e in err_f]
    rows = [
        StudyRow(
            i + 1, mesh_size(models[i].mesh), models[i].space.ndof, err_m[i], order_m[i],
            tuple(e[i] for e in err_f), tuple(o[i] for o in order_f),
        )
        for i in range(L)
    ]
    meta = {
        "case": case.name,
        "domain": domain.name,
        "element": config.element,
        "k": config.k,
        "alphas": list(config.alphas),
        "regions": [list(r) for r in ms.regions],
        "data_mode": mode,
        "m_exact": None if m_exact is None else m_exact.tolist(),
        "m_levels": [mi.tolist() for mi in m_levels],
        "delta": config.delta,
        "seed": config.seed,
        "regularity": case.regularity_note,
        "f_alpha_norm_finest": bound,
        "f_norm": f_norm,
    }
    return StudyReport(rows, config.alphas, asdict(config), meta)
