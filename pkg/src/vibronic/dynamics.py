"""Time propagation under the ramped Hamiltonian.

Pure states follow ``i d psi/dt = H(t) psi``; density operators follow the
Lindblad equation with field damping at rate ``2 kappa (nbar + 1)`` through
``a`` and ``2 kappa nbar`` through ``a^dag``. Integration is split at the
ramp apex and end so no step straddles a kink of lambda(t).
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
import scipy.linalg as sla
from scipy.integrate import DOP853, RK23, RK45

from ._accel import USE_NUMBA
from .hilbert import BasisSpec, DensityOp, PureState
from .model import ModelParams, PulseProtocol, assemble, lambda_at

__all__ = [
    "LindbladParams",
    "IntegratorConfig",
    "Trajectory",
    "IntegratorError",
    "PositivityError",
    "evolve_pure",
    "evolve_lindblad",
    "thermal_initial",
    "propagate",
    "default_sample_times",
    "PURE_DEFAULTS",
    "LINDBLAD_DEFAULTS",
]

log = logging.getLogger(__name__)


class IntegratorError(RuntimeError):
    """Adaptive integration failed (e.g. step size underflow)."""


class PositivityError(IntegratorError):
    """Density operator acquired eigenvalues below the positivity tolerance."""


@dataclass(frozen=True)
class LindbladParams:
    kappa: float = 0.0
    nbar: float = 0.0

    def __post_init__(self):
        if self.kappa < 0 or self.nbar < 0:
            raise ValueError("kappa and nbar must be non-negative")

    @property
    def rates(self):
        return 2.0 * self.kappa * (self.nbar + 1.0), 2.0 * self.kappa * self.nbar


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    max_step: float = np.inf
    scheme: str = "adaptive_rk"
    method: str = "DOP853"
    oracle_dt: float = 1e-4

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.scheme not in ("adaptive_rk", "fixed_step_expm_oracle"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


PURE_DEFAULTS = IntegratorConfig()
LINDBLAD_DEFAULTS = IntegratorConfig(rel_tol=1e-7, abs_tol=1e-10)


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: Optional[list]
    observables: Dict[str, np.ndarray]
    final: object
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size and (t[0] != 0.0 or np.any(np.diff(t) <= 0)):
            raise ValueError("trajectory times must start at 0 and increase strictly")
        self.times = t


_SOLVERS = {"DOP853": DOP853, "RK45": RK45, "RK23": RK23}


def _solve_segment(fun, t0, t1, y, integ):
    """One restart of the scipy solver; returns the exact step endpoint at ``t1``."""
    try:
        cls = _SOLVERS[integ.method]
    except KeyError:
        raise ValueError(f"unsupported method {integ.method!r}; choose from {sorted(_SOLVERS)}") from None
    solver = cls(fun, t0, y, t1, rtol=integ.rel_tol, atol=integ.abs_tol, max_step=integ.max_step)
    while solver.status == "running":
        message = solver.step()
    try:
        if solver.status == "failed":
            raise IntegratorError(f"integration failed on [{t0:.6g}, {t1:.6g}]: {message}")
        return solver.y.copy()
    finally:
        # the solver's wrapped right-hand sides close over the solver itself; breaking
        # the cycle frees its ~16 state-sized work arrays now instead of at the next
        # full garbage collection (gigabytes for large density matrices)
        solver.fun = solver.fun_single = solver.fun_vectorized = None


def default_sample_times(protocol: PulseProtocol, count: int = 200) -> np.ndarray:
    return np.linspace(0.0, protocol.t_end, count)


def propagate(fun, y0, sample_times, breakpoints=(), integ: IntegratorConfig = PURE_DEFAULTS, on_sample=None,
              segment=None):
    """Integrate ``dy/dt = fun(t, y)`` and report ``y`` at each sample time.

    The solver restarts at every sample time and every breakpoint, so values
    at those instants are step endpoints rather than interpolants.
    ``segment(t0, t1, y) -> y``, if given, replaces the scipy solver on each
    piece (``fun`` is then unused).

    Returns the list of sampled states (or callback results if
    ``on_sample`` is given).
    """
    ts = np.asarray(sample_times, dtype=float)
    if ts.size == 0 or ts[0] != 0.0 or np.any(np.diff(ts) <= 0):
        raise ValueError("sample_times must start at 0 and increase strictly")
    knots = np.union1d(ts, [b for b in breakpoints if 0.0 < b < ts[-1]])
    sample_set = set(ts.tolist())
    y = np.asarray(y0)
    out = [on_sample(0.0, y) if on_sample else y.copy()]
    for t0, t1 in zip(knots[:-1], knots[1:]):
        y = segment(t0, t1, y) if segment is not None else _solve_segment(fun, t0, t1, y, integ)
        if t1 in sample_set:
            out.append(on_sample(t1, y) if on_sample else y.copy())
    return out


def _expm_stepping(gen, lam_fn, psi0, sample_times, dt):
    """Piecewise-constant-H oracle: exact exponentials of H at step midpoints."""
    h_static = np.diag(gen.diag)
    h_coup = gen.csr.toarray()
    psi = np.array(psi0, dtype=complex)
    out = [psi.copy()]
    t = 0.0
    for t_next in sample_times[1:]:
        n = max(1, int(np.ceil((t_next - t) / dt - 1e-9)))
        h = (t_next - t) / n
        for k in range(n):
            lam = lam_fn(t + (k + 0.5) * h)
            w, v = sla.eigh(h_static + lam * h_coup)
            psi = v @ (np.exp(-1j * w * h) * (v.conj().T @ psi))
        t = t_next
        out.append(psi.copy())
    return out


def _expect(gen, lam, psi):
    hpsi = gen.diag * psi + lam * (gen.csr @ psi)
    return np.vdot(psi, hpsi)


def evolve_pure(
    initial: PureState,
    params: ModelParams,
    protocol: PulseProtocol,
    integ: IntegratorConfig = PURE_DEFAULTS,
    sample_times=None,
    observables: Optional[Dict[str, Callable]] = None,
    keep_states: bool = True,
    norm_tol: float = 1e-9,
) -> Trajectory:
    """Solve the Schrödinger equation through the pulse.

    Parameters
    ----------
    initial : PureState
        Normalised full-space state; its basis fixes the truncation.
    params, protocol
        Model constants and ramp.
    integ : IntegratorConfig
        ``scheme="fixed_step_expm_oracle"`` switches to midpoint exponential
        stepping with ``integ.oracle_dt`` (verification only; slow).
    sample_times : array, optional
        Defaults to 200 uniform samples over the pulse.
    observables : dict of name -> callable(PureState) -> float, optional
        Extra per-sample observables.
    keep_states : bool
        Keep every sampled :class:`PureState` in ``Trajectory.states``.
    """
    if initial.factor != "full":
        raise ValueError("initial state must live on the full space")
    if abs(initial.norm() - 1.0) > norm_tol:
        raise ValueError(f"initial state is not normalised (norm={initial.norm():.12g})")
    basis = initial.basis
    asm = assemble(params, basis)
    gen = asm.generator
    if sample_times is None:
        sample_times = default_sample_times(protocol)
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times[-1] > protocol.t_end * (1 + 1e-12):
        log.debug("sampling past the pulse end; lambda stays 0 there")

    def lam_fn(t):
        return lambda_at(t, protocol)

    segment = None
    if USE_NUMBA and integ.method == "DOP853":

        def segment(t0, t1, y):
            out, status, _ = gen.pulse_segment(protocol.velocity, protocol.lambda_max, y, t0, t1,
                                               integ.rel_tol, integ.abs_tol, integ.max_step)
            if status != 0:
                raise IntegratorError(f"integration failed on [{t0:.6g}, {t1:.6g}]: step size underflow")
            return out

    if integ.scheme == "fixed_step_expm_oracle":
        vecs = _expm_stepping(gen, lam_fn, initial.amplitudes, sample_times, integ.oracle_dt)
    else:
        vecs = propagate(
            lambda t, y: gen.schrodinger(lam_fn(t), y),
            initial.amplitudes.astype(complex),
            sample_times,
            protocol.breakpoints,
            integ,
            segment=segment,
        )
    states = [PureState(v, basis) for v in vecs]
    lams = np.array([lam_fn(t) for t in sample_times])
    obs = {
        "lambda": lams,
        "norm": np.array([np.linalg.norm(v) for v in vecs]),
        "energy": np.array([_expect(gen, lam, v).real for lam, v in zip(lams, vecs)]),
        "field_n": np.array([np.vdot(v, basis.flat_n * v).real for v in vecs]),
    }
    for name, fn in (observables or {}).items():
        obs[name] = np.array([fn(s) for s in states])
    return Trajectory(
        sample_times,
        states if keep_states else None,
        obs,
        states[-1],
        meta={"scheme": integ.scheme, "rel_tol": integ.rel_tol, "abs_tol": integ.abs_tol, "dim": basis.dim},
    )


def evolve_lindblad(
    initial: DensityOp,
    params: ModelParams,
    protocol: PulseProtocol,
    lind: LindbladParams,
    integ: IntegratorConfig = LINDBLAD_DEFAULTS,
    sample_times=None,
    observables: Optional[Dict[str, Callable]] = None,
    keep_states: bool = False,
    positivity_tol: float = 1e-6,
) -> Trajectory:
    """Propagate a density operator through the pulse with field damping.

    ``Trajectory.observables`` always contains ``lambda``, ``trace``,
    ``energy``, ``field_n``, ``hermiticity`` (max |rho - rho^dag|) and
    ``min_eig``. A sample with ``min_eig < -positivity_tol`` raises
    :class:`PositivityError`.
    """
    if initial.factor != "full":
        raise ValueError("initial density operator must live on the full space")
    initial.check(eig_tol=positivity_tol)
    basis = initial.basis
    gen = assemble(params, basis).generator
    g_down, g_up = lind.rates
    d = basis.dim
    if sample_times is None:
        sample_times = default_sample_times(protocol)
    sample_times = np.asarray(sample_times, dtype=float)
    t_last = sample_times[-1]
    nvec = basis.flat_n.astype(float)
    extra = observables or {}

    def rhs(t, y):
        return gen.lindblad(lambda_at(t, protocol), y.reshape(d, d), g_down, g_up).ravel()

    def on_sample(t, y):
        r = y.reshape(d, d).copy()
        lam = lambda_at(t, protocol)
        herm = 0.5 * (r + r.conj().T)
        rec = {
            "lambda": lam,
            "trace": np.trace(r).real,
            "energy": (np.sum(gen.diag * np.diag(r)) + lam * np.sum(gen.csr.multiply(r.T))).real,
            "field_n": np.sum(nvec * np.diag(r).real),
            "hermiticity": np.abs(r - r.conj().T).max(),
            "min_eig": np.linalg.eigvalsh(herm)[0],
        }
        if rec["min_eig"] < -positivity_tol:
            raise PositivityError(f"min eigenvalue {rec['min_eig']:.3e} at t={t:.6g}")
        state = DensityOp(r, basis)
        for name, fn in extra.items():
            rec[name] = fn(state)
        return rec, (state if keep_states or t == t_last else None)

    recs = propagate(rhs, initial.matrix.ravel().astype(complex), sample_times, protocol.breakpoints, integ, on_sample)
    names = list(recs[0][0])
    obs = {k: np.array([r[0][k] for r in recs]) for k in names}
    final = recs[-1][1]
    states = [r[1] for r in recs] if keep_states else None
    return Trajectory(
        sample_times,
        states,
        obs,
        final,
        meta={"rel_tol": integ.rel_tol, "abs_tol": integ.abs_tol, "kappa": lind.kappa, "nbar": lind.nbar, "dim": d},
    )


def thermal_initial(basis: BasisSpec, nbar: float, spin_state, truncation_tol: float = 1e-6) -> DensityOp:
    """``|spin><spin|`` times a truncated, renormalised thermal field state."""
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    amps = spin_state.amplitudes if isinstance(spin_state, PureState) else np.asarray(spin_state, dtype=complex)
    if amps.shape != (basis.n_spin_states,):
        raise ValueError(f"spin state must have length {basis.n_spin_states}")
    if abs(np.linalg.norm(amps) - 1.0) > 1e-9:
        raise ValueError("spin state is not normalised")
    n = np.arange(basis.n_fock)
    if nbar == 0:
        weights = (n == 0).astype(float)
    else:
        ratio = nbar / (nbar + 1.0)
        discarded = ratio ** basis.n_fock
        if discarded > truncation_tol:
            raise ValueError(
                f"fock_cutoff={basis.fock_cutoff} discards thermal weight {discarded:.2e} > {truncation_tol:g}"
            )
        weights = ratio ** n
        weights /= weights.sum()
    rho = np.kron(np.outer(amps, amps.conj()), np.diag(weights))
    return DensityOp(rho, basis)
