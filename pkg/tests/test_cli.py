import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from vibronic import cli, experiments
from vibronic.dynamics import IntegratorError

def run(tmp_path, sub, *sets, name=None):
    out = tmp_path / (name or sub)
    args = [sub, "--out", str(out)]
    for s in sets:
        args += ["--set", s]
    code = cli.main(args)
    return code, out


def read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_ramp_columns_and_manifest(tmp_path):
    code, out = run(tmp_path, "ramp", "n_spins=2", "fock_cutoff=30", "samples=21", "initial=W1")
    assert code == 0
    header, rows = read(out / "trajectory.csv")
    assert header == ["t", "lambda", "P(M=-1)", "P(M=0)", "P(M=1)", "S_N", "field_n", "norm"]
    assert len(rows) == 21
    raw = (out / "trajectory.csv").read_bytes()
    assert b"\r" not in raw
    m = json.loads((out / "manifest.json").read_text())
    assert m["schema_version"] == experiments.SCHEMA_VERSION
    assert m["files"]["trajectory.csv"]["sha256"] == hashlib.sha256(raw).hexdigest()
    assert m["config"]["initial"] == "W1" and m["config"]["n_spins"] == 2
    assert m["basis_dims"]["2"]["dim"] == 93
    assert m["convergence_audit"]["passed"] and m["convergence_audit"]["max_delta"] < 1e-6
    for row in rows:
        for cell in row:
            assert cell == format(float(cell), ".12g") or cell == "0"


def test_zero_pulse_keeps_probabilities(tmp_path):
    code, out = run(tmp_path, "ramp", "n_spins=2", "fock_cutoff=6", "lambda_max=0", "samples=11", "initial=W1")
    assert code == 0
    _, rows = read(out / "trajectory.csv")
    probs = np.array([[float(x) for x in r[2:5]] for r in rows])
    assert np.all(probs == probs[0])
    assert float(rows[-1][0]) > 0


def test_single_point_sweep_equals_ramp(tmp_path):
    common = ["n_spins=2", "fock_cutoff=14", "samples=31", "initial=W2", "audit=false"]
    v = 2.0**-2.5
    _, ramp = run(tmp_path, "ramp", *common, f"velocity={v!r}")
    _, sweep = run(tmp_path, "sweep", *common, "log2v_start=-2.5", "log2v_end=-2.5", "v_count=1")
    _, trows = read(ramp / "trajectory.csv")
    _, srows = read(sweep / "final_states.csv")
    assert len(srows) == 1
    assert srows[0][2:5] == trows[-1][2:5]
    assert srows[0][5] == trows[-1][5]


def test_sweep_is_deterministic_across_workers(tmp_path):
    sets = ["n_spins=2", "fock_cutoff=12", "samples=15", "v_count=4", "log2v_start=-3", "log2v_end=0"]
    _, a = run(tmp_path, "sweep", *sets, "workers=1", name="a")
    _, b = run(tmp_path, "sweep", *sets, "workers=2", name="b")
    _, c = run(tmp_path, "sweep", *sets, "workers=1", name="c")
    data = [(d / "final_states.csv").read_bytes() for d in (a, b, c)]
    assert data[0] == data[1] == data[2]
    header, rows = read(a / "final_states.csv")
    assert header[:2] == ["log2v", "v"] and header[-3:] == ["S_N_final", "S_N_peak", "excited_weight"]
    lv = [float(r[0]) for r in rows]
    assert lv == sorted(lv)


def test_entropy_map_and_scaling(tmp_path):
    sets = ["fock_cutoff=12", "samples=11", "v_count=5", "log2v_start=-4", "log2v_end=0", "audit=false"]
    code, out = run(tmp_path, "entropy-map", "n_spins=2", *sets)
    assert code == 0
    header, rows = read(out / "entropy_map.csv")
    assert header == ["log2v", "t", "lambda", "S_N"] and len(rows) == 55
    code, out = run(tmp_path, "scaling", "n_spins_list=1,2", *sets)
    assert code == 0
    header, rows = read(out / "vmin_vs_n.csv")
    assert header == ["N", "v_min", "v_max", "peak_S_N", "slope", "status"]
    assert [r[0] for r in rows] == ["1", "2"]
    m = json.loads((out / "manifest.json").read_text())
    assert set(m["files"]) == {"vmin_vs_n.csv", "scaling_curves.csv"}
    _, curves = read(out / "scaling_curves.csv")
    assert len(curves) == 10
    # no pulse, no entanglement: every window is missing and nothing is fitted
    with pytest.warns(UserWarning, match="excluded from the fit"):
        code, out = run(tmp_path, "scaling", "n_spins_list=1,2", "lambda_max=0", *sets, name="flat")
    assert code == 0
    _, rows = read(out / "vmin_vs_n.csv")
    assert all(r[1] == "nan" and r[4] == "nan" and "vmin_window_not_found" in r[5] for r in rows)


def test_open_sweep_orders_by_kappa(tmp_path):
    code, out = run(tmp_path, "open-sweep", "n_spins_list=2", "kappa_list=0,0.05", "fock_cutoff=10",
                    "audit=false", "samples=21", "velocity=0.25")
    assert code == 0
    header, rows = read(out / "negativity_vs_t.csv")
    assert header == ["t", "kappa", "N", "lambda", "negativity", "log_negativity"]
    arr = np.array([[float(x) for x in r] for r in rows])
    neg0, neg1 = arr[arr[:, 1] == 0, 4], arr[arr[:, 1] == 0.05, 4]
    assert len(neg0) == len(neg1) == 21
    assert neg1.max() < neg0.max()


def test_wigner_of_prepulse_vacuum(tmp_path):
    code, out = run(tmp_path, "wigner", "wigner_at=start", "n_spins=2", "fock_cutoff=10", "wigner_points=31",
                    "audit=false", "samples=5")
    assert code == 0
    header, rows = read(out / "wigner_grid.csv")
    assert header == ["x", "p", "W"] and len(rows) == 31 * 31
    assert min(float(r[2]) for r in rows) > 0
    m = json.loads((out / "manifest.json").read_text())
    assert abs(m["summary"]["max_W"] - 2 / np.pi) < 1e-12


def test_lzs_curve(tmp_path):
    code, out = run(tmp_path, "lzs")
    assert code == 0
    _, rows = read(out / "lzs_curve.csv")
    pe = [float(r[3]) for r in rows]
    assert len(rows) == 48 and max(pe) <= 0.5 and max(pe) > 0.49
    code, out = run(tmp_path, "lzs", "log2v_start=-0.9", "log2v_end=-0.7", "v_count=2001", name="fine")
    m = json.loads((out / "manifest.json").read_text())
    assert abs(m["summary"]["grid_peak"]["P_e"] - 0.5) < 1e-7
    assert abs(m["summary"]["grid_peak"]["v"] - m["summary"]["analytic_peak_v"]) < 1e-3


def test_parametric_check(tmp_path):
    code, out = run(tmp_path, "parametric", "cutoff_a=3", "cutoff_b=3", "evolve_to=2", "time_samples=5",
                    "moments=1:1,1:0")
    assert code == 0
    header, rows = read(out / "smearing_check.csv")
    assert header == ["t", "k", "l", "direct_re", "direct_im", "factored_re", "factored_im", "abs_difference"]
    assert len(rows) == 10
    assert max(float(r[-1]) for r in rows) < 1e-8


def test_exit_codes(tmp_path, monkeypatch, capsys):
    assert cli.main(["ramp", "--set", "n_spins=0"]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("n_spins = 3\nsamples = 1\n")
    assert cli.main(["ramp", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert "bad.cfg:2" in capsys.readouterr().err
    # a cutoff far too small for lambda_max = 1 fails the audit but still writes outputs
    code, out = run(tmp_path, "ramp", "n_spins=3", "fock_cutoff=3", "samples=11", name="audit")
    assert code == cli.EXIT_AUDIT
    m = json.loads((out / "manifest.json").read_text())
    assert m["convergence_audit"]["passed"] is False

    def boom(cfg, outdir=None):
        raise IntegratorError("step size underflow")

    monkeypatch.setattr(experiments, "run_experiment", boom)
    assert cli.main(["ramp"]) == cli.EXIT_INTEGRATOR


def test_console_script_entry(tmp_path):
    out = tmp_path / "lzs"
    proc = subprocess.run([sys.executable, "-m", "vibronic.cli", "lzs", "--set", "v_count=3", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert (out / "lzs_curve.csv").exists()
    proc = subprocess.run([sys.executable, "-m", "vibronic.cli", "sweep", "--set", "v_count=0"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
