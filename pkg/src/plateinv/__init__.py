"""Clamped-plate forward solves and Tikhonov source reconstruction with BFS and Morley elements."""

__version__ = "0.1.0"

from .forward import ForwardModel, MeasurementSet, default_measurements, fem_norm, solve_forward
from .inverse import InverseProblem, assemble_regularizer, reconstruct
from .mesh import lshape_mesh, red_refine, square_crisscross_mesh, unit_square_rect_mesh
from .study import StudyConfig, StudyReport, run_study

__all__ = [
    "ForwardModel",
    "InverseProblem",
    "MeasurementSet",
    "StudyConfig",
    "StudyReport",
    "assemble_regularizer",
    "default_measurements",
    "fem_norm",
    "lshape_mesh",
    "reconstruct",
    "red_refine",
    "run_study",
    "solve_forward",
    "square_crisscross_mesh",
    "unit_square_rect_mesh",
]
