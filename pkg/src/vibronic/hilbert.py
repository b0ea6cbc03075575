"""Truncated spin x boson Hilbert space.

The electronic part is the fully symmetric collective-spin sector ``J = N/2``
(dimension ``N + 1``); the vibrational part is a Fock space cut at ``n_max``.
Flat index layout::

    index = (M + J) * (n_max + 1) + n

so each spin projection owns a contiguous block of Fock states. Half-integer
projections are carried as integer twice-values ``2M`` wherever exactness
matters.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "BasisSpec",
    "SparseOperator",
    "PureState",
    "DensityOp",
    "build_basis",
    "op_matrix",
    "basis_state",
    "partial_trace",
    "OPERATOR_KINDS",
]

OPERATOR_KINDS = ("annihilate", "create", "number", "jz", "jplus", "jminus", "jx", "parity", "identity")

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class BasisSpec:
    n_spins: int
    fock_cutoff: int

    def __post_init__(self):
        if int(self.n_spins) != self.n_spins or self.n_spins < 1:
            raise ValueError(f"n_spins must be a positive integer, got {self.n_spins!r}")
        if int(self.fock_cutoff) != self.fock_cutoff or self.fock_cutoff < 0:
            raise ValueError(f"fock_cutoff must be a non-negative integer, got {self.fock_cutoff!r}")

    @property
    def j(self) -> Fraction:
        return Fraction(self.n_spins, 2)

    @property
    def two_j(self) -> int:
        return self.n_spins

    @property
    def n_spin_states(self) -> int:
        return self.n_spins + 1

    @property
    def n_fock(self) -> int:
        return self.fock_cutoff + 1

    @property
    def dim(self) -> int:
        return self.n_spin_states * self.n_fock

    def two_m_values(self) -> np.ndarray:
        """Twice the spin projections, ascending from ``-2J``."""
        return np.arange(-self.two_j, self.two_j + 1, 2)

    def m_values(self) -> np.ndarray:
        return self.two_m_values() / 2.0

    def index(self, m, n: int) -> int:
        two_m = _two_m(m)
        if abs(two_m) > self.two_j or (two_m + self.two_j) % 2:
            raise ValueError(f"m={m} is not a projection of J={self.j}")
        if not 0 <= n <= self.fock_cutoff:
            raise ValueError(f"n={n} outside Fock range [0, {self.fock_cutoff}]")
        return (two_m + self.two_j) // 2 * self.n_fock + int(n)

    def unravel(self, index: int):
        """Inverse of :meth:`index`: returns ``(2M, n)``."""
        block, n = divmod(int(index), self.n_fock)
        return 2 * block - self.two_j, n

    @cached_property
    def flat_n(self) -> np.ndarray:
        return np.tile(np.arange(self.n_fock), self.n_spin_states)

    @cached_property
    def flat_two_m(self) -> np.ndarray:
        return np.repeat(self.two_m_values(), self.n_fock)


def _two_m(m) -> int:
    tm = Fraction(m) * 2 if not isinstance(m, float) else Fraction(m).limit_denominator(4) * 2
    if tm.denominator != 1:
        raise ValueError(f"m={m} is not a half-integer")
    return int(tm)


def build_basis(n_spins: int, fock_cutoff: int) -> BasisSpec:
    return BasisSpec(n_spins, fock_cutoff)


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Coordinate-list operator with row-major, zero-free entries."""

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    hermitian: bool = False

    @classmethod
    def from_matrix(cls, mat, hermitian=False, tol=0.0):
        coo = sp.coo_matrix(mat)
        coo.sum_duplicates()
        keep = np.abs(coo.data) > tol
        rows, cols, vals = coo.row[keep], coo.col[keep], coo.data[keep]
        order = np.lexsort((cols, rows))
        op = cls(
            dim=coo.shape[0],
            rows=rows[order].astype(np.int64),
            cols=cols[order].astype(np.int64),
            values=vals[order].astype(complex),
            hermitian=hermitian,
        )
        if hermitian and not op.is_hermitian():
            raise ValueError("operator flagged Hermitian but A != A^dag")
        return op

    @property
    def entries(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, (self.rows, self.cols)), shape=(self.dim, self.dim))

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def is_hermitian(self, tol=HERMITIAN_TOL) -> bool:
        diff = self.csr - self.csr.conj().T
        return diff.nnz == 0 or np.abs(diff.data).max() <= tol

    def __matmul__(self, other):
        if isinstance(other, SparseOperator):
            return SparseOperator.from_matrix(self.csr @ other.csr)
        return self.csr @ other

    def __add__(self, other):
        return SparseOperator.from_matrix(self.csr + other.csr, hermitian=self.hermitian and other.hermitian)

    def __sub__(self, other):
        return SparseOperator.from_matrix(self.csr - other.csr, hermitian=self.hermitian and other.hermitian)

    def scale(self, c):
        herm = self.hermitian and np.isreal(c)
        return SparseOperator.from_matrix(self.csr * c, hermitian=herm)

    @property
    def nnz(self) -> int:
        return len(self.values)


def _fock_lowering(n_fock: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n_fock, dtype=float)), 1, shape=(n_fock, n_fock), format="csr")


def _spin_raising(two_j: int) -> sp.csr_matrix:
    # <M+1|J+|M> = sqrt(J(J+1) - M(M+1)), written in twice-values to stay exact
    tm = np.arange(-two_j, two_j, 2)
    vals = np.sqrt((two_j * (two_j + 2) - tm * (tm + 2)) / 4.0)
    return sp.diags(vals, -1, shape=(two_j + 1, two_j + 1), format="csr")


def spin_factor(kind: str, two_j: int) -> sp.csr_matrix:
    jp = _spin_raising(two_j)
    if kind == "jplus":
        return jp
    if kind == "jminus":
        return jp.T.tocsr()
    if kind == "jx":
        return ((jp + jp.T) * 0.5).tocsr()
    if kind == "jz":
        return sp.diags(np.arange(-two_j, two_j + 1, 2) / 2.0, format="csr")
    raise ValueError(kind)


def op_matrix(kind: str, basis: BasisSpec) -> SparseOperator:
    """Full-space operator of the given kind.

    Parameters
    ----------
    kind : str
        One of ``OPERATOR_KINDS``.
    basis : BasisSpec

    Returns
    -------
    SparseOperator
    """
    ns, nf = basis.n_spin_states, basis.n_fock
    eye_s = sp.identity(ns, format="csr")
    eye_f = sp.identity(nf, format="csr")
    a = _fock_lowering(nf)
    if kind == "annihilate":
        mat, herm = sp.kron(eye_s, a), False
    elif kind == "create":
        mat, herm = sp.kron(eye_s, a.T), False
    elif kind == "number":
        mat, herm = sp.kron(eye_s, sp.diags(np.arange(nf, dtype=float))), True
    elif kind in ("jz", "jx", "jplus", "jminus"):
        mat, herm = sp.kron(spin_factor(kind, basis.two_j), eye_f), kind in ("jz", "jx")
    elif kind == "parity":
        # exp(i pi (n + Jz + J)); the exponent is an integer on every basis state
        exponent = basis.flat_n + (basis.flat_two_m + basis.two_j) // 2
        mat, herm = sp.diags(np.where(exponent % 2 == 0, 1.0, -1.0)), True
    elif kind == "identity":
        mat, herm = sp.identity(basis.dim), True
    else:
        raise ValueError(f"unknown operator kind {kind!r}; expected one of {OPERATOR_KINDS}")
    return SparseOperator.from_matrix(mat, hermitian=herm)


@dataclass(frozen=True, eq=False)
class PureState:
    """State vector over ``basis`` (or over one factor of it).

    ``factor`` is ``"full"``, ``"spin"`` or ``"field"``.
    """

    amplitudes: np.ndarray
    basis: BasisSpec
    factor: str = "full"

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amps)
        expected = _factor_dim(self.basis, self.factor)
        if amps.shape != (expected,):
            raise ValueError(f"amplitudes have shape {amps.shape}, expected ({expected},)")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def check(self, tol=1e-9):
        if abs(self.norm() - 1.0) > tol:
            raise ValueError(f"state is not normalised (norm={self.norm():.12g})")
        return self

    def as_matrix(self) -> np.ndarray:
        """Amplitudes reshaped to ``(spin, field)``; full states only."""
        return self.amplitudes.reshape(self.basis.n_spin_states, self.basis.n_fock)

    def to_density(self) -> "DensityOp":
        return DensityOp(np.outer(self.amplitudes, self.amplitudes.conj()), self.basis, self.factor)


@dataclass(frozen=True, eq=False)
class DensityOp:
    matrix: np.ndarray
    basis: BasisSpec
    factor: str = "full"

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", mat)
        d = _factor_dim(self.basis, self.factor)
        if mat.shape != (d, d):
            raise ValueError(f"density matrix has shape {mat.shape}, expected ({d}, {d})")

    def check(self, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-7):
        m = self.matrix
        if np.abs(m - m.conj().T).max() > herm_tol:
            raise ValueError("density operator is not Hermitian")
        if abs(np.trace(m) - 1.0) > trace_tol:
            raise ValueError(f"density operator trace {np.trace(m).real:.12g} != 1")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -eig_tol:
            raise ValueError("density operator has negative eigenvalues")
        return self

    def as_tensor(self) -> np.ndarray:
        """Indices ``(m, n, m', n')``; full operators only."""
        s, f = self.basis.n_spin_states, self.basis.n_fock
        return self.matrix.reshape(s, f, s, f)


def _factor_dim(basis, factor):
    try:
        return {"full": basis.dim, "spin": basis.n_spin_states, "field": basis.n_fock}[factor]
    except KeyError:
        raise ValueError(f"unknown factor {factor!r}") from None


def basis_state(basis: BasisSpec, m, n: int) -> PureState:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index(m, n)] = 1.0
    return PureState(amps, basis)


def partial_trace(rho, keep: str) -> DensityOp:
    """Reduce a full state to the ``"spin"`` or ``"field"`` factor.

    Accepts a :class:`DensityOp` or a :class:`PureState`; pure inputs are
    reduced straight from the amplitude matrix.
    """
    if keep not in ("spin", "field"):
        raise ValueError(f"keep must be 'spin' or 'field', got {keep!r}")
    if rho.factor != "full":
        raise ValueError("partial trace needs a full-space state")
    if isinstance(rho, PureState):
        psi = rho.as_matrix()
        red = psi @ psi.conj().T if keep == "spin" else psi.T @ psi.conj()
    else:
        t = rho.as_tensor()
        red = np.einsum("anbn->ab", t) if keep == "spin" else np.einsum("mamb->ab", t)
    return DensityOp(red, rho.basis, keep)
