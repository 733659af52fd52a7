"""High-order filtered upwind schemes for the Hamilton-Jacobi limit of nondominated sorting."""

from .fd_coeffs import (
    ArithmeticNodes,
    OffsetNodes,
    Stencil,
    backward_weights,
    centered_weights,
    derivative_weights,
    forward_weights,
    oracle_weights,
)
from .grid import GridFunction, GridSpec
from .hj_solver import SchemeConfig, SolveReport, back_transform, sweep_solve
from .problems import problem_const, problem_f1, problem_f2

__version__ = "0.1.0"
