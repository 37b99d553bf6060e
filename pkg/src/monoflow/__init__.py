"""Numerical laboratory for SDEs with monotone (one-sided Lipschitz) coefficients."""

__version__ = "0.1.0"

from .errors import ConstructionError, InputError, InvariantError, MonoflowError
from .field import (
    CoefficientField,
    CutoffProfile,
    StructureMatrix,
    cov_kernel,
    structure_matrix,
    trace_and_opnorm,
    truncate,
)
from .integrator import (
    FlowGrid,
    FlowState,
    NoiseRealization,
    TimeGrid,
    compose_check,
    evolve,
    flow_grid,
    sample_noise,
)

__all__ = [
    "CoefficientField",
    "ConstructionError",
    "CutoffProfile",
    "FlowGrid",
    "FlowState",
    "InputError",
    "InvariantError",
    "MonoflowError",
    "NoiseRealization",
    "StructureMatrix",
    "TimeGrid",
    "compose_check",
    "cov_kernel",
    "evolve",
    "flow_grid",
    "sample_noise",
    "structure_matrix",
    "trace_and_opnorm",
    "truncate",
]
