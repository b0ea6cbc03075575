"""End-to-end acceptance checks, one test per criterion.

Every check drives the same runners as the command line, at default grids
and tolerances, and records a one-line verdict. The verdicts are echoed in
the terminal summary (see ``conftest.py``) so a plain ``pytest`` run lists
PASS/FAIL for each criterion even when output capture is on.

Run on its own with ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
import warnings
from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from scipy.stats import unitary_group

from vibronic.config import load_config
from vibronic.dynamics import (
    IntegratorConfig,
    LindbladParams,
    evolve_lindblad,
    evolve_pure,
    thermal_initial,
)
from vibronic.experiments import run_experiment, simulate_point
from vibronic.hilbert import PureState, basis_state, build_basis, op_matrix
from vibronic.measures import (
    LzsParams,
    lzs_excited_prob,
    lzs_peak_velocity,
    negativity,
    von_neumann_entropy,
    wigner,
)
from vibronic.model import ModelParams, PulseProtocol

pytestmark = pytest.mark.slow

VERDICTS = {}
BASE = ["omega=1", "epsilon=1", "lambda_max=1"]


def verdict(key, ok, detail):
    VERDICTS[key] = f"{'PASS' if ok else 'FAIL'} C{key}: {detail}"
    print(VERDICTS[key])
    assert ok, VERDICTS[key]


def run(tmp, experiment, *sets):
    cfg = load_config(overrides=[*BASE, *sets], experiment=experiment)
    started = time.perf_counter()
    res = run_experiment(cfg, tmp / experiment)
    return res, time.perf_counter() - started


def column(res, name, col):
    header, rows = res.tables[name]
    i = header.index(col)
    return np.array([float(r[i]) for r in rows])


@pytest.fixture(scope="module")
def tmp(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def gs_sweep(tmp):
    """N=3 from the collective ground state over the default grid."""
    return run(tmp, "sweep", "n_spins=3", "initial=GS")


@pytest.fixture(scope="module")
def best_v(gs_sweep):
    res, _ = gs_sweep
    return res.manifest["summary"]["argmax_excited_weight"]["v"]


def test_c1_single_dimer_baseline(tmp):
    res, dt = run(tmp, "sweep", "n_spins=1", "initial=W1")
    p_y = column(res, "final_states.csv", "P(M=-1/2)")
    hits = np.flatnonzero((p_y >= 0.4) & (p_y <= 0.6))
    ok = hits.size > 0 and dt < 10 and res.audit_passed
    where = f"log2v={column(res, 'final_states.csv', 'log2v')[hits[0]]:.3f}" if hits.size else "none"
    verdict(1, ok, f"{hits.size} grid v with P(Y) in [0.4, 0.6] (first at {where}); "
                   f"audit {res.audit_passed}; {dt:.1f} s (< 10 s)")


def test_c2_w2_relaxes_to_ground(tmp):
    res, dt = run(tmp, "sweep", "n_spins=3", "initial=W2")
    best = column(res, "final_states.csv", "P(M=-3/2)").max()
    ok = best >= 0.35 and dt < 120 and res.audit_passed
    verdict(2, ok, f"max P(GS) = {best:.4f} (>= 0.35, {best / 0.125:.2f}x the product 0.125); "
                   f"audit {res.audit_passed}; {dt:.1f} s (< 120 s)")


def test_c3_w2_dominates_from_ground(gs_sweep):
    res, dt = gs_sweep
    exc = column(res, "final_states.csv", "excited_weight")
    i = int(np.argmax(exc))
    p_w1 = column(res, "final_states.csv", "P(M=-1/2)")[i]
    p_w2 = column(res, "final_states.csv", "P(M=1/2)")[i]
    lv = column(res, "final_states.csv", "log2v")[i]
    ok = 0.35 <= p_w2 <= 0.65 and p_w2 > p_w1 and dt < 120 and res.audit_passed
    verdict(3, ok, f"at log2v={lv:.3f}: P(W2) = {p_w2:.4f} in [0.35, 0.65], P(W1) = {p_w1:.4f}; "
                   f"audit {res.audit_passed}; {dt:.1f} s (< 120 s)")


def test_c4_lzs_shape(gs_sweep):
    res, _ = gs_sweep
    exc = column(res, "final_states.csv", "excited_weight")
    v = column(res, "final_states.csv", "v")
    i = int(np.argmax(exc))
    steps = np.diff(exc)
    unimodal = bool(np.all(steps[:i] >= 0) and np.all(steps[i:] <= 0))
    turns = int(np.sum(np.diff(np.sign(steps[steps != 0])) != 0))
    # independent oracle: numerical maximisation of 2P(1-P) in log v
    opt = minimize_scalar(lambda lv: -lzs_excited_prob(LzsParams(0.5, math.exp(lv))),
                          bounds=(-5, 3), method="bounded", options={"xatol": 1e-12})
    v_star = math.pi / (8 * math.log(2))
    closed = (abs(lzs_peak_velocity(0.5) - v_star) < 1e-12
              and abs(lzs_excited_prob(LzsParams(0.5, v_star)) - 0.5) < 1e-12
              and abs(math.exp(opt.x) - v_star) < 1e-6 and abs(-opt.fun - 0.5) < 1e-12)
    ratio = v[i] / v_star
    located = 0.25 <= ratio <= 4
    verdict(4, unimodal and closed and located,
            f"simulated curve unimodal: {unimodal} ({turns} slope reversals); closed-form peak 0.5 at "
            f"pi/(8 ln 2) = {v_star:.6f}: {closed}; simulated peak v = {v[i]:.4f}, ratio {ratio:.3f} "
            f"(within 4x: {located})")


def test_c5_critical_threshold(tmp, best_v):
    started = time.perf_counter()
    weak, _ = run(tmp, "ramp", "n_spins=3", "lambda_max=0.4", f"velocity={best_v!r}")
    strong, _ = run(tmp, "ramp", "n_spins=3", "lambda_max=1", f"velocity={best_v!r}")
    dt = time.perf_counter() - started
    s_weak = column(weak, "trajectory.csv", "S_N").max()
    s_strong = column(strong, "trajectory.csv", "S_N").max()
    ok = s_weak < 0.1 and s_strong > 0.5 and dt < 60 and weak.audit_passed and strong.audit_passed
    verdict(5, ok, f"v = {best_v:.4f}: peak S_N {s_weak:.4f} bits at lambda_max=0.4 (< 0.1), "
                   f"{s_strong:.4f} bits at lambda_max=1 (> 0.5); {dt:.1f} s (< 60 s)")


def test_c6_n_scaling(tmp):
    with warnings.catch_warnings():
        # a missing window is reported in the verdict instead
        warnings.simplefilter("ignore", UserWarning)
        res, dt = run(tmp, "scaling", "n_spins_list=3,5,9,15")
    s = res.manifest["summary"]
    slope, spread = s["slope"], s["vmax_spread"]
    peaks = [s["peak_S_N"][str(n)] for n in (3, 5, 9, 15)]
    increasing = all(b > a for a, b in zip(peaks, peaks[1:]))
    slope_ok = s["fitted_n"] == [3, 5, 9, 15] and -1.3 <= slope <= -0.7
    spread_ok = spread < 0.2
    vmax = column(res, "vmin_vs_n.csv", "v_max")
    ok = slope_ok and spread_ok and increasing and dt < 1800 and res.audit_passed
    verdict(6, ok, f"slope {slope:.4f} over N={s['fitted_n']} in [-1.3, -0.7]: {slope_ok}; "
                   f"v_max {np.round(vmax, 4).tolist()} spread {spread:.3f} (< 0.2): {spread_ok}; "
                   f"peak S_N {np.round(peaks, 3).tolist()} increasing: {increasing}; {dt:.0f} s (< 1800 s)")


def test_c7_wigner_negativity(tmp, best_v):
    pre, _ = run(tmp, "wigner", "n_spins=3", "wigner_at=start", f"velocity={best_v!r}")
    cfg = load_config(overrides=[*BASE, "n_spins=3", f"velocity={best_v!r}"], experiment="wigner")
    traj = simulate_point(cfg, 3, best_v, cfg.cutoff_for(3), want_field="end")
    started = time.perf_counter()
    grid = wigner(traj["field_rho"], extent=cfg.wigner_extent, points=cfg.wigner_points)
    dt = time.perf_counter() - started
    post, _ = run(tmp, "wigner", "n_spins=3", "wigner_at=end", f"velocity={best_v!r}")
    w_pre = pre.manifest["summary"]["min_W"]
    w_post = post.manifest["summary"]["min_W"]
    ok = w_post < -0.01 and w_pre > 0 and abs(grid.min - w_post) < 1e-12 and dt < 60 and post.audit_passed
    verdict(7, ok, f"v = {best_v:.4f}: post-pulse min W = {w_post:.4f} (< -0.01), pre-pulse min W = "
                   f"{w_pre:.4f} (> 0); Wigner step {dt:.2f} s beyond the trajectory (< 60 s)")


def test_c8_decoherence_robustness(tmp, best_v):
    res, dt = run(tmp, "open_sweep", "n_spins_list=5,11", "kappa_list=0,0.005,0.02", "nbar=0",
                  f"velocity={best_v!r}")
    peaks = res.manifest["summary"]["max_negativity"]
    ks = ["0", "0.005", "0.02"]
    table = {n: [peaks[n][k] for k in ks] for n in ("5", "11")}
    decreasing = all(a > b for n in table for a, b in zip(table[n], table[n][1:]))
    larger = all(b > a for a, b in zip(table["5"], table["11"]))
    ok = decreasing and larger and dt < 1200 and res.audit_passed
    fmt = {n: [round(x, 4) for x in vals] for n, vals in table.items()}
    verdict(8, ok, f"max negativity over kappa {ks}: N=5 {fmt['5']}, N=11 {fmt['11']}; decreasing in kappa: "
                   f"{decreasing}; N=11 > N=5: {larger}; audit {res.audit_passed}; {dt:.0f} s (< 1200 s)")


def test_c9_property_suites():
    checks = {}
    # unitary norm drift and parity over a full ramp
    basis = build_basis(3, 40)
    params, proto = ModelParams(3), PulseProtocol(2.0**-2.745)
    par = op_matrix("parity", basis).csr
    traj = evolve_pure(basis_state(basis, Fraction(-3, 2), 0), params, proto, keep_states=True)
    checks["norm drift"] = np.max(np.abs(traj.observables["norm"] - 1))
    vals = np.array([np.vdot(s.amplitudes, par @ s.amplitudes) for s in traj.states])
    checks["parity drift"] = np.max(np.abs(vals - vals[0]))
    checks["cut asymmetry"] = max(
        abs(von_neumann_entropy(s, cut="spin") - von_neumann_entropy(s, cut="field")) for s in traj.states
    )
    # damped density matrix
    small = build_basis(3, 20)
    spin = np.zeros(small.n_spin_states, dtype=complex)
    spin[0] = 1
    lt = evolve_lindblad(thermal_initial(small, 0.0, spin), params, proto, LindbladParams(0.02, 0.0),
                         sample_times=np.linspace(0, proto.t_end, 41))
    checks["trace drift"] = np.max(np.abs(lt.observables["trace"] - 1))
    min_eig = float(np.min(lt.observables["min_eig"]))
    # adaptive integrator against exact short-step exponentials
    worst = 0.0
    for n_spins, v in ((1, 0.7), (3, 1.0)):
        b = build_basis(n_spins, 16)
        p, pr = ModelParams(n_spins), PulseProtocol(v)
        psi0 = basis_state(b, Fraction(-n_spins, 2), 0)
        ts = np.linspace(0, pr.t_end, 5)
        fast = evolve_pure(psi0, p, pr, sample_times=ts, keep_states=True)
        slow = evolve_pure(psi0, p, pr, IntegratorConfig(scheme="fixed_step_expm_oracle", oracle_dt=1e-4),
                           sample_times=ts, keep_states=True)
        worst = max(worst, max(np.linalg.norm(a.amplitudes - c.amplitudes) for a, c in zip(fast.states, slow.states)))
    checks["expm disagreement"] = worst
    # negativity of Schmidt-form pure states against the closed form
    rng = np.random.default_rng(7)
    err = 0.0
    for _ in range(50):
        b = build_basis(int(rng.integers(1, 5)), int(rng.integers(1, 7)))
        k = min(b.n_spin_states, b.n_fock)
        lam = rng.dirichlet(np.ones(k))
        u = unitary_group.rvs(b.n_spin_states, random_state=rng) if b.n_spin_states > 1 else np.eye(1)
        w = unitary_group.rvs(b.n_fock, random_state=rng) if b.n_fock > 1 else np.eye(1)
        mat = sum(math.sqrt(lam[i]) * np.outer(u[:, i], w[:, i]) for i in range(k))
        err = max(err, abs(negativity(PureState(mat.ravel(), b), "spin") - (np.sqrt(lam).sum() ** 2 - 1) / 2))
    checks["Schmidt identity error"] = err
    limits = {"norm drift": 1e-8, "parity drift": 1e-7, "cut asymmetry": 1e-8, "trace drift": 1e-7,
              "expm disagreement": 1e-6, "Schmidt identity error": 1e-8}
    ok = all(checks[k] < limits[k] for k in limits) and min_eig >= -1e-6
    parts = "; ".join(f"{k} {checks[k]:.1e} (< {limits[k]:g})" for k in limits)
    verdict(9, ok, f"{parts}; Lindblad min eigenvalue {min_eig:.1e} (>= -1e-6)")


def test_c10_phase_smearing(tmp):
    res, dt = run(tmp, "parametric", "pump_smearing=uniform", "time_samples=20", "moments=1:1,1:0")
    k = column(res, "smearing_check.csv", "k")
    l_ = column(res, "smearing_check.csv", "l")
    diff = column(res, "smearing_check.csv", "abs_difference")
    mag = np.hypot(column(res, "smearing_check.csv", "direct_re"), column(res, "smearing_check.csv", "direct_im"))
    pop = (k == 1) & (l_ == 1)
    coh = (k == 1) & (l_ == 0)
    n_pop = int(pop.sum())
    ok = n_pop == 20 and diff[pop].max() < 1e-8 and mag[coh].max() < 1e-8 and dt < 60
    verdict(10, ok, f"<a^dag a> smeared vs coherent pump: max |diff| {diff[pop].max():.1e} over {n_pop} times "
                    f"(< 1e-8); max |<a>| smeared {mag[coh].max():.1e} (< 1e-8); {dt:.1f} s (< 60 s)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
