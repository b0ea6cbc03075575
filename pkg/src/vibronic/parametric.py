"""Three-mode parametric model and the pump phase-smearing check.

    H = wa a^dag a + chi (a^dag a)^2 + wb b^dag b + wc c^dag c
        + g (a^dag b^dag c^2 + a b c^dag^2)

``H`` conserves ``N = a^dag a + b^dag b + c^dag c``, so averaging the pump
coherent state over its phase multiplies every vibrational moment
``<a^dag^k a^l>`` by the Fourier weight ``sum_j w_j exp(-i (k - l) theta_j)``.
:func:`smeared_moment` evaluates both sides independently.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .dynamics import IntegratorConfig, propagate
from .hilbert import SparseOperator, _fock_lowering
from .kernels import Generator

__all__ = [
    "ThreeModeParams",
    "PumpPreparation",
    "MomentCheck",
    "build_three_mode",
    "total_number",
    "coherent_amplitudes",
    "smeared_moment",
    "smeared_moment_series",
    "smeared_moments_series",
    "UNIFORM_PHASES",
    "PARAMETRIC_DEFAULTS",
]

UNIFORM_PHASES = 32
PARAMETRIC_DEFAULTS = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)


@dataclass(frozen=True)
class ThreeModeParams:
    omega_a: float = 1.0
    omega_b: float = 1.0
    omega_c: float = 1.0
    chi: float = 0.0
    g: float = 0.05
    cutoffs: Tuple[int, int, int] = (6, 6, 12)
    dim_cap: int = 20000

    def __post_init__(self):
        if len(self.cutoffs) != 3 or min(self.cutoffs) < 1:
            raise ValueError("need three Fock cutoffs, each >= 1")
        if not np.isreal(self.g):
            raise ValueError("g must be real")

    @property
    def dims(self):
        return tuple(c + 1 for c in self.cutoffs)

    @property
    def dim(self):
        da, db, dc = self.dims
        return da * db * dc


@dataclass(frozen=True)
class PumpPreparation:
    """Pump coherent amplitude plus a discrete phase distribution.

    ``smearing`` is ``"none"`` (single phase 0), ``"uniform"`` (32 equally
    weighted phases ``2 pi j / 32``) or ``"custom"`` (``phases`` and
    ``weights`` given; weights non-negative, summing to one).
    """

    alpha_c: complex = 2.0
    smearing: str = "none"
    phases: Optional[Sequence[float]] = None
    weights: Optional[Sequence[float]] = None

    def members(self):
        if self.smearing == "none":
            return np.zeros(1), np.ones(1)
        if self.smearing == "uniform":
            return 2 * np.pi * np.arange(UNIFORM_PHASES) / UNIFORM_PHASES, np.full(UNIFORM_PHASES, 1 / UNIFORM_PHASES)
        if self.smearing == "custom":
            th = np.asarray(self.phases, dtype=float)
            w = np.asarray(self.weights, dtype=float)
            if th.shape != w.shape or th.ndim != 1 or th.size == 0:
                raise ValueError("custom smearing needs matching 1-D phases and weights")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("smearing weights must be non-negative and sum to 1")
            return th, w
        raise ValueError(f"unknown smearing {self.smearing!r}")

    def fourier_weight(self, order: int) -> complex:
        th, w = self.members()
        return complex(np.sum(w * np.exp(-1j * order * th)))


@dataclass(frozen=True)
class MomentCheck:
    direct: complex
    factored: complex

    @property
    def difference(self) -> float:
        return abs(self.direct - self.factored)


def _mode_ops(params):
    da, db, dc = params.dims
    a1, b1, c1 = (_fock_lowering(d) for d in (da, db, dc))
    ia, ib, ic = (sp.identity(d, format="csr") for d in (da, db, dc))
    a = sp.kron(sp.kron(a1, ib), ic, format="csr")
    b = sp.kron(sp.kron(ia, b1), ic, format="csr")
    c = sp.kron(sp.kron(ia, ib), c1, format="csr")
    return a, b, c


def _check_cap(params):
    if params.dim > params.dim_cap:
        raise ValueError(f"three-mode dimension {params.dim} exceeds cap {params.dim_cap}")


def _split(params):
    """Diagonal and (real symmetric) off-diagonal parts of H."""
    _check_cap(params)
    a, b, c = _mode_ops(params)
    na = (a.T @ a).diagonal()
    nb = (b.T @ b).diagonal()
    nc = (c.T @ c).diagonal()
    diag = params.omega_a * na + params.chi * na**2 + params.omega_b * nb + params.omega_c * nc
    pump = a.T @ b.T @ c @ c
    off = params.g * (pump + pump.T)
    return diag, off.tocsr()


def build_three_mode(params: ThreeModeParams) -> SparseOperator:
    diag, off = _split(params)
    return SparseOperator.from_matrix(sp.diags(diag) + off, hermitian=True)


def total_number(params: ThreeModeParams) -> SparseOperator:
    _check_cap(params)
    a, b, c = _mode_ops(params)
    return SparseOperator.from_matrix(a.T @ a + b.T @ b + c.T @ c, hermitian=True)


def coherent_amplitudes(alpha: complex, cutoff: int, tail_tol: float = 1e-3) -> np.ndarray:
    """Truncated coherent state, renormalised; rejects heavy truncation."""
    n = np.arange(cutoff + 1)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    mag = np.exp(-abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - 0.5 * log_fact) if alpha != 0 else (n == 0) * 1.0
    amps = mag * np.exp(1j * n * np.angle(alpha))
    lost = 1.0 - np.sum(np.abs(amps) ** 2)
    if lost > tail_tol:
        raise ValueError(f"pump cutoff {cutoff} loses weight {lost:.2e} of |alpha|^2={abs(alpha)**2:g}")
    return amps / np.linalg.norm(amps)


def _initial(params, alpha):
    da, db, dc = params.dims
    vac_a = np.zeros(da)
    vac_a[0] = 1
    vac_b = np.zeros(db)
    vac_b[0] = 1
    return np.kron(np.kron(vac_a, vac_b), coherent_amplitudes(alpha, params.cutoffs[2]))


def _moment_op(params, k, l):
    if k < 0 or l < 0 or k + l > 4:
        raise ValueError("moments need k, l >= 0 and k + l <= 4")
    a, _, _ = _mode_ops(params)
    op = sp.identity(params.dim, format="csr")
    for _ in range(k):
        op = op @ a.T
    for _ in range(l):
        op = op @ a
    return op.tocsr()


def smeared_moments_series(pairs, prep: PumpPreparation, times, params: ThreeModeParams, integ=PARAMETRIC_DEFAULTS):
    """Both sides of the smearing identity for several moments at once.

    Returns ``{(k, l): (direct, factored)}`` with complex arrays over
    ``times``. ``direct`` evolves every phase-rotated member of the smeared
    pump and averages; ``factored`` evolves the unsmeared pump once and
    multiplies by the smearing's Fourier weight.
    """
    pairs = [tuple(p) for p in pairs]
    times = np.asarray(times, dtype=float)
    trim = 0
    if times[0] != 0.0:
        times = np.concatenate([[0.0], times])
        trim = 1
    diag, off = _split(params)
    gen = Generator(diag, off)
    ops = [_moment_op(params, k, l) for k, l in pairs]
    nvec = total_number(params).csr.diagonal().real
    psi0 = _initial(params, prep.alpha_c)

    def run(psi):
        vals = propagate(lambda t, y: gen.schrodinger(1.0, y), psi, times, (), integ,
                         on_sample=lambda t, y: [np.vdot(y, op @ y) for op in ops])
        return np.array(vals, dtype=complex)

    th, w = prep.members()
    direct = np.zeros((len(times), len(pairs)), dtype=complex)
    for theta, weight in zip(th, w):
        # Pi(theta) = exp(i N theta) rotates the pump phase
        direct += weight * run(np.exp(1j * nvec * theta) * psi0)
    base = run(psi0)
    out = {}
    for i, (k, l) in enumerate(pairs):
        out[(k, l)] = (direct[trim:, i], base[trim:, i] * prep.fourier_weight(k - l))
    return out


def smeared_moment_series(k, l, prep: PumpPreparation, times, params: ThreeModeParams, integ=PARAMETRIC_DEFAULTS):
    """``(direct, factored)`` complex arrays of ``<a^dag^k a^l>`` over ``times``."""
    return smeared_moments_series([(k, l)], prep, times, params, integ)[(k, l)]


def smeared_moment(k, l, prep: PumpPreparation, evolve_to: float, params: ThreeModeParams,
                   integ=PARAMETRIC_DEFAULTS) -> MomentCheck:
    if evolve_to < 0:
        raise ValueError("evolve_to must be non-negative")
    times = [0.0] if evolve_to == 0 else [0.0, evolve_to]
    direct, factored = smeared_moment_series(k, l, prep, times, params, integ)
    return MomentCheck(complex(direct[-1]), complex(factored[-1]))
