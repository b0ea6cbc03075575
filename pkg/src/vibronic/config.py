"""Flat ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored. Command-line overrides use the
same syntax (``--set key=value``) and win over the file. Every key has a
default; unknown keys are errors.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_text", "EXPERIMENTS", "auto_cutoff"]

EXPERIMENTS = ("ramp", "sweep", "entropy_map", "scaling", "open_sweep", "wigner", "lzs", "parametric")
INITIAL_NAMES = ("GS", "W1", "W2", "custom", "thermal")


class ConfigError(ValueError):
    def __init__(self, message, line=None, source=None):
        where = ""
        if source is not None and line is not None:
            where = f"{source}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.line = line


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _cutoff(text):
    t = text.strip().lower()
    return "auto" if t == "auto" else int(t)


def _half(text):
    t = text.strip()
    return None if t.lower() in ("", "none") else str(Fraction(t))


def _opt_float(text):
    t = text.strip().lower()
    return None if t in ("", "none", "auto") else float(t)


def _moments(text):
    out = []
    for item in text.split(","):
        if item.strip():
            k, l = item.split(":")
            out.append((int(k), int(l)))
    return tuple(out)


# key -> (parser, default)
SCHEMA = {
    "experiment": (str, "ramp"),
    "n_spins": (int, 3),
    "n_spins_list": (_ints, None),
    "fock_cutoff": (_cutoff, "auto"),
    "audit": (_bool, True),
    "audit_extra": (int, 10),
    "audit_tol": (float, 1e-6),
    "omega": (float, 1.0),
    "epsilon": (float, 1.0),
    "physical_detuning": (_bool, False),
    "lambda_max": (float, 1.0),
    "velocity": (float, 2.0**-2.745),
    "log2v_start": (float, -7.0),
    "log2v_end": (float, 1.0),
    "v_count": (int, 48),
    "initial": (str, "GS"),
    "initial_m": (_half, None),
    "initial_n": (int, 0),
    "initial_spin": (str, "GS"),
    "nbar": (float, 0.0),
    "kappa_list": (_floats, (0.0, 0.005, 0.02)),
    "samples": (int, 200),
    "workers": (int, 1),
    "seed": (int, 0),
    "rel_tol": (_opt_float, None),
    "abs_tol": (_opt_float, None),
    "vmin_threshold": (float, 0.5),
    "window_measure": (str, "final_entropy"),
    "wigner_extent": (float, 6.0),
    "wigner_points": (int, 121),
    "wigner_at": (str, "end"),
    "lzs_delta": (float, 0.5),
    "omega_a": (float, 1.0),
    "omega_b": (float, 1.0),
    "omega_c": (float, 1.0),
    "chi": (float, 0.1),
    "g": (float, 0.05),
    "cutoff_a": (int, 6),
    "cutoff_b": (int, 6),
    "cutoff_c": (int, 12),
    "alpha_c": (float, 2.0),
    "pump_smearing": (str, "uniform"),
    "moments": (_moments, ((1, 1), (1, 0), (0, 1), (2, 0), (2, 2))),
    "evolve_to": (float, 5.0),
    "time_samples": (int, 20),
    "output_dir": (str, "out"),
}

WINDOW_MEASURES = ("final_entropy", "peak_entropy", "excited_weight")
DEFAULT_SPIN_LISTS = {"scaling": (3, 5, 9, 15), "open_sweep": (5, 11)}


def _spins(v):
    """N values an experiment runs over."""
    kind = v["experiment"]
    if kind not in DEFAULT_SPIN_LISTS:
        return [v["n_spins"]]
    return list(v["n_spins_list"] or DEFAULT_SPIN_LISTS[kind])


def auto_cutoff(n_spins: int) -> int:
    """Fock cutoff that passes the +10 convergence audit at lambda_max <= 1."""
    return max(40, 5 * n_spins)


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    def spins(self):
        return _spins(self.values)

    def cutoff_for(self, n_spins: int) -> int:
        c = self.values["fock_cutoff"]
        return auto_cutoff(n_spins) if c == "auto" else c

    def v_grid(self) -> np.ndarray:
        return 2.0 ** np.linspace(self.log2v_start, self.log2v_end, self.v_count)

    @property
    def eps(self) -> float:
        if self.physical_detuning:
            return self.omega * 667.7 / 742.0
        return self.epsilon

    def echo(self) -> dict:
        out = {}
        for k, v in sorted(self.values.items()):
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    def replace(self, **changes):
        vals = dict(self.values)
        vals.update(changes)
        return ExperimentConfig(vals)


def parse_text(text: str, source=None) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno, source)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno, source)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", lineno, source)
        raw[key] = (value, lineno)
    return raw


def _convert(raw, source):
    vals = {}
    for key, (value, lineno) in raw.items():
        parser = SCHEMA[key][0]
        try:
            vals[key] = parser(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno, source) from None
    return vals


def load_config(path=None, overrides=(), experiment=None) -> ExperimentConfig:
    """Build a validated config from an optional file plus ``key=value`` overrides."""
    vals = {k: d for k, (_, d) in SCHEMA.items()}
    lines = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        raw = parse_text(text, source=str(p))
        lines.update({k: ln for k, (_, ln) in raw.items()})
        vals.update(_convert(raw, str(p)))
    for i, item in enumerate(overrides, 1):
        if "=" not in item:
            raise ConfigError(f"override #{i} must be key=value, got {item!r}")
        raw = parse_text(item, source=f"--set #{i}")
        vals.update(_convert(raw, f"--set #{i}"))
        lines.pop(next(iter(raw)), None)
    if experiment is not None:
        if path is not None and "experiment" in lines and vals["experiment"] != experiment:
            raise ConfigError(
                f"config says experiment={vals['experiment']!r} but subcommand is {experiment!r}",
                lines["experiment"],
                str(path),
            )
        vals["experiment"] = experiment
    _validate(vals, lines, path)
    return ExperimentConfig(vals)


def _validate(v, lines, path):
    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", lines.get(key), str(path) if path and key in lines else None)

    if v["experiment"] not in EXPERIMENTS:
        fail("experiment", f"must be one of {EXPERIMENTS}")
    if v["n_spins"] < 1:
        fail("n_spins", "must be >= 1")
    if v["n_spins_list"] is not None and (not v["n_spins_list"] or min(v["n_spins_list"]) < 1):
        fail("n_spins_list", "needs positive entries")
    if v["fock_cutoff"] != "auto" and v["fock_cutoff"] < 0:
        fail("fock_cutoff", "must be >= 0 or 'auto'")
    for key in ("omega", "epsilon", "velocity"):
        if not v[key] > 0:
            fail(key, "must be positive")
    if v["lambda_max"] < 0:
        fail("lambda_max", "must be non-negative")
    if v["v_count"] < 1:
        fail("v_count", "must be >= 1")
    if v["v_count"] > 1 and not v["log2v_end"] > v["log2v_start"]:
        fail("log2v_end", "v-grid must be increasing")
    if not all(math.isfinite(x) for x in (v["log2v_start"], v["log2v_end"])):
        fail("log2v_start", "v-grid bounds must be finite")
    if v["initial"] not in INITIAL_NAMES:
        fail("initial", f"must be one of {INITIAL_NAMES}")
    if v["initial_spin"] not in ("GS", "W1", "W2", "custom"):
        fail("initial_spin", "must be GS, W1, W2 or custom")
    if v["initial"] == "custom" or v["initial_spin"] == "custom":
        if v["initial_m"] is None:
            fail("initial_m", "required for a custom initial state")
    ns = _spins(v)
    named = v["initial_spin"] if v["initial"] == "thermal" else v["initial"]
    if named in ("W1", "W2"):
        k = int(named[1])
        for n in ns:
            if k > n:
                fail("initial", f"{named} does not exist for N={n}")
    if named == "custom":
        m = Fraction(v["initial_m"])
        for n in ns:
            if abs(m) > Fraction(n, 2) or (m * 2 + n) % 2:
                fail("initial_m", f"{m} is not a projection for N={n}")
    if v["nbar"] < 0:
        fail("nbar", "must be non-negative")
    if any(k < 0 for k in v["kappa_list"]):
        fail("kappa_list", "rates must be non-negative")
    if v["samples"] < 2:
        fail("samples", "need at least 2 samples")
    if v["workers"] < 1:
        fail("workers", "must be >= 1")
    if not 0 < v["vmin_threshold"] < 1:
        fail("vmin_threshold", "must lie in (0, 1)")
    if v["window_measure"] not in WINDOW_MEASURES:
        fail("window_measure", f"must be one of {WINDOW_MEASURES}")
    if v["wigner_at"] not in ("start", "end"):
        fail("wigner_at", "must be 'start' or 'end'")
    if v["wigner_points"] < 2 or v["wigner_extent"] <= 0:
        fail("wigner_points", "grid needs >= 2 points and positive extent")
    if v["lzs_delta"] <= 0:
        fail("lzs_delta", "must be positive")
    if v["pump_smearing"] not in ("none", "uniform"):
        fail("pump_smearing", "must be 'none' or 'uniform'")
    if any(k + l > 4 or k < 0 or l < 0 for k, l in v["moments"]):
        fail("moments", "each k:l needs k, l >= 0 and k + l <= 4")
    if v["evolve_to"] < 0 or v["time_samples"] < 1:
        fail("evolve_to", "needs evolve_to >= 0 and time_samples >= 1")
