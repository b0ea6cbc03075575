"""Pulse-driven Dicke-model dynamics for N-component vibronic systems."""

__version__ = "0.1.0"

from ._accel import backend
from .dynamics import (
    IntegratorConfig,
    IntegratorError,
    LindbladParams,
    PositivityError,
    Trajectory,
    evolve_lindblad,
    evolve_pure,
    thermal_initial,
)
from .hilbert import BasisSpec, DensityOp, PureState, SparseOperator, basis_state, build_basis, op_matrix, partial_trace
from .measures import (
    LzsParams,
    ProbabilityRecord,
    WignerGrid,
    WindowNotFound,
    estimate_vmax,
    estimate_vmin,
    log_negativity,
    lzs_excited_prob,
    negativity,
    state_probabilities,
    von_neumann_entropy,
    wigner,
)
from .model import ModelParams, PulseProtocol, assemble, critical_coupling, hamiltonian_at, lambda_at
from .parametric import PumpPreparation, ThreeModeParams, build_three_mode, smeared_moment

__all__ = [
    "__version__",
    "backend",
    "IntegratorConfig",
    "IntegratorError",
    "LindbladParams",
    "PositivityError",
    "Trajectory",
    "evolve_lindblad",
    "evolve_pure",
    "thermal_initial",
    "BasisSpec",
    "DensityOp",
    "PureState",
    "SparseOperator",
    "basis_state",
    "build_basis",
    "op_matrix",
    "partial_trace",
    "LzsParams",
    "ProbabilityRecord",
    "WignerGrid",
    "WindowNotFound",
    "estimate_vmax",
    "estimate_vmin",
    "log_negativity",
    "lzs_excited_prob",
    "negativity",
    "state_probabilities",
    "von_neumann_entropy",
    "wigner",
    "ModelParams",
    "PulseProtocol",
    "assemble",
    "critical_coupling",
    "hamiltonian_at",
    "lambda_at",
    "PumpPreparation",
    "ThreeModeParams",
    "build_three_mode",
    "smeared_moment",
]
