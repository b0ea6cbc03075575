"""Driven Dicke-like vibronic Hamiltonian.

    H(t) = omega a^dag a + eps Jz + lambda(t) / sqrt(N) (a^dag + a) 2 Jx

in units hbar = 1. The coupling ramps linearly from zero up to ``lambda_max``
and back down at constant slope ``velocity``.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .hilbert import BasisSpec, SparseOperator, build_basis, spin_factor, _fock_lowering
from .kernels import Generator

__all__ = [
    "ModelParams",
    "PulseProtocol",
    "HamiltonianAssembly",
    "lambda_at",
    "hamiltonian_at",
    "critical_coupling",
    "assemble",
    "PHYSICAL_DETUNING",
]

# eps / omega for a representative physical dimer (667.7 vs 742.0 wavenumbers)
PHYSICAL_DETUNING = 667.7 / 742.0


@dataclass(frozen=True)
class ModelParams:
    n_spins: int
    lambda_max: float = 1.0
    omega: float = 1.0
    epsilon: float = 1.0

    def __post_init__(self):
        if self.omega <= 0 or self.epsilon <= 0:
            raise ValueError("omega and epsilon must be positive")
        if self.lambda_max < 0:
            raise ValueError("lambda_max must be non-negative")
        if int(self.n_spins) != self.n_spins or self.n_spins < 1:
            raise ValueError("n_spins must be a positive integer")


@dataclass(frozen=True)
class PulseProtocol:
    """Symmetric up-down linear ramp.

    ``velocity`` is the slope |d lambda / dt|, so the pulse lasts
    ``2 * lambda_max / velocity``.
    """

    velocity: float
    lambda_max: float = 1.0
    shape: str = "up_down_linear"

    def __post_init__(self):
        if not self.velocity > 0:
            raise ValueError("velocity must be positive")
        if self.lambda_max < 0:
            raise ValueError("lambda_max must be non-negative")
        if self.shape != "up_down_linear":
            raise ValueError(f"unsupported pulse shape {self.shape!r}")

    @property
    def t_apex(self) -> float:
        return self.lambda_max / self.velocity

    @property
    def t_end(self) -> float:
        return 2.0 * self.lambda_max / self.velocity

    @property
    def breakpoints(self):
        return (self.t_apex, self.t_end)


def lambda_at(t, protocol: PulseProtocol):
    """Coupling strength at time ``t`` (scalar or array)."""
    v, lm = protocol.velocity, protocol.lambda_max
    if np.ndim(t) == 0:
        t = float(t)
        if t < 0:
            raise ValueError("lambda_at is defined for t >= 0")
        return v * t if t <= lm / v else max(2.0 * lm - v * t, 0.0)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("lambda_at is defined for t >= 0")
    lam = np.where(t <= lm / v, v * t, np.maximum(2.0 * lm - v * t, 0.0))
    return lam


def critical_coupling(params: ModelParams) -> float:
    return math.sqrt(params.omega * params.epsilon) / 2.0


@dataclass(frozen=True, eq=False)
class HamiltonianAssembly:
    """``H(t) = static_part + lambda(t) * norm_factor * coupling_part``."""

    basis: BasisSpec
    static_part: SparseOperator
    coupling_part: SparseOperator
    norm_factor: float

    def at_coupling(self, lam: float) -> SparseOperator:
        return SparseOperator.from_matrix(
            self.static_part.csr + (lam * self.norm_factor) * self.coupling_part.csr, hermitian=True
        )

    @cached_property
    def generator(self) -> Generator:
        """Backend-ready form with the 1/sqrt(N) folded into the coupling."""
        nf = self.basis.n_fock
        n = self.basis.flat_n
        down = np.sqrt(n.astype(float))
        up = np.where(n < nf - 1, np.sqrt(n + 1.0), 0.0)
        return Generator(
            self.static_part.csr.diagonal().real,
            (self.coupling_part.csr * self.norm_factor).real,
            down=down,
            up=up,
        )


def assemble(params: ModelParams, basis: BasisSpec = None, fock_cutoff: int = 40) -> HamiltonianAssembly:
    if basis is None:
        basis = build_basis(params.n_spins, fock_cutoff)
    if basis.n_spins != params.n_spins:
        raise ValueError(f"basis has N={basis.n_spins} but params have N={params.n_spins}")
    a = _fock_lowering(basis.n_fock)
    eye_s = sp.identity(basis.n_spin_states)
    eye_f = sp.identity(basis.n_fock)
    static = params.omega * sp.kron(eye_s, a.T @ a) + params.epsilon * sp.kron(spin_factor("jz", basis.two_j), eye_f)
    coupling = sp.kron(2.0 * spin_factor("jx", basis.two_j), a + a.T)
    return HamiltonianAssembly(
        basis=basis,
        static_part=SparseOperator.from_matrix(static, hermitian=True),
        coupling_part=SparseOperator.from_matrix(coupling, hermitian=True),
        norm_factor=1.0 / math.sqrt(params.n_spins),
    )


def hamiltonian_at(t, params: ModelParams, protocol: PulseProtocol, basis: BasisSpec) -> SparseOperator:
    return assemble(params, basis).at_coupling(lambda_at(t, protocol))
