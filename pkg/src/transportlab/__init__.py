"""Generalized solutions of u_t + a(x) . grad u = 0 for bounded solenoidal, possibly discontinuous, a."""

__version__ = "0.1.0"

from .grid import BoxDomain, GridFunction  # noqa: E402
from .fields import (  # noqa: E402
    MollifierKernel, VectorField, builtin_field, constant_field, default_kernel, mollify, rotation_field,
    shear_field,
)
from .flow import FlowMap, StepControl, backward_map, integrate  # noqa: E402
from .solver import SolutionSequence, lp_norm, solve_rough, solve_smooth  # noqa: E402
from .weakform import TestBank, TestFunction, residual_report, weak_residual  # noqa: E402

__all__ = [
    "BoxDomain", "GridFunction", "MollifierKernel", "VectorField", "builtin_field", "constant_field",
    "default_kernel", "mollify", "rotation_field", "shear_field", "FlowMap", "StepControl", "backward_map",
    "integrate", "SolutionSequence", "lp_norm", "solve_rough", "solve_smooth", "TestBank", "TestFunction",
    "residual_report", "weak_residual",
]
