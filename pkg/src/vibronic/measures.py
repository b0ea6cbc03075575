"""Observables: Dicke-level probabilities, entanglement, Wigner functions,
and the two-level Landau-Zener-Stückelberg estimate."""

import math
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .hilbert import DensityOp, PureState, partial_trace
from .kernels import wigner_grid

__all__ = [
    "ProbabilityRecord",
    "WignerGrid",
    "LzsParams",
    "WindowNotFound",
    "state_probabilities",
    "reduced_spectrum",
    "von_neumann_entropy",
    "partial_transpose",
    "negativity",
    "log_negativity",
    "negativity_pair",
    "wigner",
    "lzs_excited_prob",
    "lzs_peak_velocity",
    "estimate_vmin",
    "estimate_vmax",
]


class WindowNotFound(ValueError):
    """The curve never reaches the requested fraction of its maximum."""


@dataclass(frozen=True, eq=False)
class ProbabilityRecord:
    """Field-marginalised populations of the Dicke levels ``|J, M>``.

    ``probs[k]`` belongs to ``M = -J + k``. Named levels: ``GS`` is
    ``M = -J``, ``Wk`` is ``M = -J + k``.
    """

    two_m: np.ndarray
    probs: np.ndarray

    def __getitem__(self, label):
        if label == "GS":
            return float(self.probs[0])
        if isinstance(label, str) and label.startswith("W"):
            k = int(label[1:])
            if not 0 < k < len(self.probs):
                raise KeyError(label)
            return float(self.probs[k])
        raise KeyError(label)

    def at(self, m) -> float:
        idx = int(round(2 * float(m))) - int(self.two_m[0])
        if idx % 2 or not 0 <= idx // 2 < len(self.probs):
            raise KeyError(m)
        return float(self.probs[idx // 2])

    @property
    def excited_weight(self) -> float:
        return float(1.0 - self.probs[0])

    @property
    def labels(self):
        return ["GS"] + [f"W{k}" for k in range(1, len(self.probs))]


def state_probabilities(state) -> ProbabilityRecord:
    basis = state.basis
    if isinstance(state, PureState):
        p = (np.abs(state.as_matrix()) ** 2).sum(axis=1)
    else:
        diag = np.diag(state.matrix).real.reshape(basis.n_spin_states, basis.n_fock)
        p = diag.sum(axis=1)
    return ProbabilityRecord(basis.two_m_values(), np.clip(p, 0.0, 1.0))


def reduced_spectrum(state, keep: str = "field") -> np.ndarray:
    red = partial_trace(state, keep).matrix
    return np.linalg.eigvalsh(0.5 * (red + red.conj().T))


def _entropy_bits(eigs, cutoff=1e-15):
    # renormalise so integrator norm drift does not register as mixing
    total = eigs[eigs > 0].sum()
    p = eigs[eigs > cutoff] / total if total > 0 else eigs[:0]
    return float(-(p * np.log2(p)).sum()) if p.size else 0.0


def von_neumann_entropy(state, cut: str = "field") -> float:
    """Entropy in bits of the reduced state on ``cut`` ("spin" or "field")."""
    return max(_entropy_bits(reduced_spectrum(state, cut)), 0.0)


def partial_transpose(rho: DensityOp, transpose_over: str = "spin") -> np.ndarray:
    t = rho.as_tensor()
    if transpose_over == "spin":
        pt = t.transpose(2, 1, 0, 3)
    elif transpose_over == "field":
        pt = t.transpose(0, 3, 2, 1)
    else:
        raise ValueError(f"transpose_over must be 'spin' or 'field', got {transpose_over!r}")
    d = rho.basis.dim
    return pt.reshape(d, d)


def _pt_eigs(rho, transpose_over):
    if isinstance(rho, PureState):
        rho = rho.to_density()
    pt = partial_transpose(rho, transpose_over)
    return np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))


def negativity(rho, transpose_over: str = "spin") -> float:
    """Sum of the magnitudes of the negative partial-transpose eigenvalues."""
    ev = _pt_eigs(rho, transpose_over)
    return float(-ev[ev < 0].sum())


def log_negativity(rho, transpose_over: str = "spin") -> float:
    """``log2`` of the trace norm of the partial transpose."""
    ev = _pt_eigs(rho, transpose_over)
    return max(float(np.log2(np.abs(ev).sum())), 0.0)


def negativity_pair(rho, transpose_over: str = "spin"):
    """``(negativity, log_negativity)`` from a single eigensolve."""
    ev = _pt_eigs(rho, transpose_over)
    return float(-ev[ev < 0].sum()), max(float(np.log2(np.abs(ev).sum())), 0.0)


@dataclass(frozen=True, eq=False)
class WignerGrid:
    """``values[i, j] = W(x_axis[j], p_axis[i])``.

    ``W`` is normalised against ``d^2 alpha = dx dp / 2``.
    """

    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray

    def integral(self) -> float:
        """Quadrature of ``W d^2 alpha`` over the grid."""
        return 0.5 * float(np.trapezoid(np.trapezoid(self.values, self.x_axis, axis=1), self.p_axis))

    def x_marginal(self) -> np.ndarray:
        """Position density of ``x = (a + a^dag) / sqrt(2)``."""
        return 0.5 * np.trapezoid(self.values, self.p_axis, axis=0)

    @property
    def min(self) -> float:
        return float(self.values.min())


def wigner(rho_field, x_axis=None, p_axis=None, extent: float = 6.0, points: int = 121) -> WignerGrid:
    """Wigner function of a single-mode state.

    Displaced-parity convention: ``alpha = (x + i p) / sqrt(2)`` and
    ``W = (2/pi) tr[rho D(alpha) Pi D(alpha)^dag]``. The vacuum peaks at
    ``2/pi`` and ``W`` integrates to one against ``d^2 alpha``.

    Parameters
    ----------
    rho_field : DensityOp or ndarray
        Field-factor density matrix.
    x_axis, p_axis : array, optional
        Quadrature grids; default ``linspace(-extent, extent, points)``.

    Warns when the grid radius is smaller than the populated Fock support.
    """
    mat = rho_field.matrix if isinstance(rho_field, DensityOp) else np.asarray(rho_field, dtype=complex)
    if isinstance(rho_field, DensityOp) and rho_field.factor != "field":
        raise ValueError("wigner expects a field-factor state")
    xs = np.linspace(-extent, extent, points) if x_axis is None else np.asarray(x_axis, dtype=float)
    ps = np.linspace(-extent, extent, points) if p_axis is None else np.asarray(p_axis, dtype=float)
    pops = np.diag(mat).real
    support = int(np.nonzero(pops > 1e-10)[0].max()) if np.any(pops > 1e-10) else 0
    max_alpha2 = 0.5 * (np.abs(xs).max() ** 2 + np.abs(ps).max() ** 2)
    if max_alpha2 < support:
        warnings.warn(
            f"Wigner grid radius |alpha|^2={max_alpha2:.3g} is below the populated Fock level {support}",
            stacklevel=2,
        )
    return WignerGrid(xs, ps, wigner_grid(mat, xs, ps))


@dataclass(frozen=True)
class LzsParams:
    delta: float
    velocity: float

    def __post_init__(self):
        if not (self.delta > 0 and self.velocity > 0):
            raise ValueError("delta and velocity must be positive")


def lzs_excited_prob(lzs: LzsParams) -> float:
    """Averaged double-passage excitation ``2 P (1 - P)``.

    ``P = exp(-pi delta^2 / (2 v))`` is the single-crossing diabatic
    probability.
    """
    p = math.exp(-math.pi * lzs.delta**2 / (2.0 * lzs.velocity))
    return 2.0 * p * (1.0 - p)


def lzs_peak_velocity(delta: float) -> float:
    """Ramp rate at which ``P = 1/2`` and the excitation peaks at 0.5."""
    return math.pi * delta**2 / (2.0 * math.log(2.0))


def _curve_arrays(curve):
    if isinstance(curve, Mapping):
        items = sorted(curve.items())
        v = np.array([k for k, _ in items], dtype=float)
        y = np.array([val for _, val in items], dtype=float)
    else:
        v, y = (np.asarray(a, dtype=float) for a in curve)
        order = np.argsort(v)
        v, y = v[order], y[order]
    if np.any(v <= 0):
        raise ValueError("velocities must be positive")
    return v, y


def _crossing(lv, y, thr, i, j):
    return lv[i] + (thr - y[i]) / (y[j] - y[i]) * (lv[j] - lv[i])


def estimate_vmin(curve, threshold: float = 0.5) -> float:
    """Lowest velocity at which ``curve`` reaches ``threshold * max(curve)``.

    ``curve`` is a mapping ``v -> value`` or a pair ``(v, values)``. The
    crossing is interpolated linearly in ``log v``.
    """
    v, y = _curve_arrays(curve)
    top = y.max() if y.size else 0.0
    if not top > 0:
        raise WindowNotFound("curve never rises above zero")
    thr = threshold * top
    above = np.nonzero(y >= thr)[0]
    i = above[0]
    if i == 0:
        return float(v[0])
    lv = np.log(v)
    return float(np.exp(_crossing(lv, y, thr, i - 1, i)))


def estimate_vmax(curve, threshold: float = 0.5) -> float:
    """Highest velocity at which ``curve`` still reaches ``threshold * max``.

    Raises :class:`WindowNotFound` if the curve is still above threshold at
    the top of the grid.
    """
    v, y = _curve_arrays(curve)
    top = y.max() if y.size else 0.0
    if not top > 0:
        raise WindowNotFound("curve never rises above zero")
    thr = threshold * top
    j = np.nonzero(y >= thr)[0][-1]
    if j == len(y) - 1:
        raise WindowNotFound("curve is still above threshold at the top of the grid")
    lv = np.log(v)
    return float(np.exp(_crossing(lv, y, thr, j, j + 1)))
