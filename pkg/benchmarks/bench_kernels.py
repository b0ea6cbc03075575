"""Compare the numba kernels with the pure-numpy fallback.

The backend is fixed at import time, so each backend runs in its own
interpreter with ``VIBRONIC_DISABLE_NUMBA`` set accordingly. Timings are the
best of ``--repeat`` runs after one warm-up call (which absorbs JIT
compilation).

    python benchmarks/bench_kernels.py --repeat 5 --json bench.json
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

CASES = ("schrodinger_rhs", "lindblad_rhs", "wigner_grid", "ramp_n3_slow")


def _cases():
    import numpy as np

    from vibronic.config import load_config
    from vibronic.experiments import simulate_point
    from vibronic.hilbert import build_basis
    from vibronic.kernels import wigner_grid
    from vibronic.model import ModelParams, assemble

    rng = np.random.default_rng(1)

    big = build_basis(11, 55)
    gen_big = assemble(ModelParams(11), big).generator
    psi = rng.normal(size=big.dim) + 1j * rng.normal(size=big.dim)

    mid = build_basis(5, 40)
    gen_mid = assemble(ModelParams(5), mid).generator
    g = rng.normal(size=(mid.dim, mid.dim)) + 1j * rng.normal(size=(mid.dim, mid.dim))
    rho = g @ g.conj().T
    rho /= np.trace(rho)

    f = rng.normal(size=(30, 30)) + 1j * rng.normal(size=(30, 30))
    field = f @ f.conj().T
    field /= np.trace(field)
    axis = np.linspace(-5, 5, 61)

    cfg = load_config(overrides=["samples=50", "audit=false"], experiment="ramp")

    return {
        "schrodinger_rhs": lambda: gen_big.schrodinger(0.7, psi),
        "lindblad_rhs": lambda: gen_mid.lindblad(0.7, rho, 0.04, 0.0),
        "wigner_grid": lambda: wigner_grid(field, axis, axis),
        "ramp_n3_slow": lambda: simulate_point(cfg, 3, 2.0**-6, 40),
    }


def worker(repeat):
    from vibronic._accel import backend

    out = {"backend": backend()}
    for name, fn in _cases().items():
        fn()
        number = 1 if name == "ramp_n3_slow" else 20
        best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
        out[name] = best
    print(json.dumps(out))


def run_backend(disable, repeat):
    env = dict(os.environ, VIBRONIC_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the timings here")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.worker:
        worker(args.repeat)
        return 0
    fast = run_backend(False, args.repeat)
    slow = run_backend(True, args.repeat)
    print(f"{'case':<18}{fast['backend'] + ' [s]':>14}{slow['backend'] + ' [s]':>14}{'speedup':>10}")
    for name in CASES:
        print(f"{name:<18}{fast[name]:>14.3e}{slow[name]:>14.3e}{slow[name] / fast[name]:>10.2f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"numba": fast, "numpy": slow}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
