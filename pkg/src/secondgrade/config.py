"""Run configuration: a single JSON document, validated before anything runs.

Example::

    {
      "grid": {"dim": 2, "n": 32},
      "solver": {"alpha": 0.1, "nu": 0.1, "dt": 0.001, "t_end": 1.0},
      "initial": {"type": "taylor_green", "amplitude": 1.0},
      "monitors": {"K": 1.0},
      "output": {"dir": "out", "formats": ["csv", "jsonl", "json"]},
      "sweep": {"alphas": [0.1, 0.01, 0.001]},
      "workers": 1
    }

Every section is optional; unknown keys anywhere are rejected.
"""
from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import asdict, dataclass, field

from . import calibration
from .diagnostics import MonitorConstants
from .dynamics import FORMULATIONS, INTEGRATORS, SolverParams

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "DEFAULTS"]


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "grid": {"dim": 2, "n": 32},
    "solver": {
        "alpha": 0.0, "nu": 0.1, "dt": 1e-3, "t_end": 1.0, "formulation": "velocity",
        "integrator": "if_rk4", "cfl_limit": 0.5, "sample_every": 10,
    },
    "initial": {"type": "taylor_green", "amplitude": 1.0},
    "monitors": {
        "epsilon": calibration.EPSILON, "epsilon1": calibration.EPSILON1, "K": calibration.K,
        "C_f": calibration.C_F, "gronwall_tol": 1e-6,
    },
    "output": {"dir": "out", "formats": ["csv", "jsonl", "json"]},
    "sweep": {"alphas": [0.1, 0.01, 0.001, 0.0001]},
    "probe": {"amplitudes": [0.01, 0.1, 1.0, 10.0]},
    "validate": {"levels": 3},
    "workers": None,
}

_INITIAL_KEYS = {
    "taylor_green": {"type", "amplitude"},
    "random": {"type", "seed", "slope", "k_max", "amplitude"},
    "checkpoint": {"type", "path"},
}
_INITIAL_DEFAULTS = {
    "taylor_green": {"amplitude": 1.0},
    "random": {"seed": 0, "slope": -2.0, "k_max": 4, "amplitude": 1.0},
    "checkpoint": {},
}
_FORMATS = ("csv", "jsonl", "json")


@dataclass(frozen=True)
class RunConfig:
    dim: int
    n: int
    solver: SolverParams
    initial: dict
    monitors: MonitorConstants
    out_dir: str
    formats: tuple
    sweep_alphas: tuple
    probe_amplitudes: tuple
    validate_levels: int
    workers: int
    resolved: dict = field(repr=False, compare=False)

    def as_dict(self):
        return copy.deepcopy(self.resolved)


def _where(section, key):
    return f"{section}.{key}" if section else key


def _check_keys(section, given, allowed):
    if not isinstance(given, dict):
        raise ConfigError(f"{section or 'config'}: expected an object, got {type(given).__name__}")
    extra = sorted(set(given) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key {_where(section, extra[0])!r}; allowed: {', '.join(sorted(allowed))}")


def _number(section, key, value, lo=None, hi=None, lo_open=False, integer=False):
    where = _where(section, key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise ConfigError(f"{where}: must be {'>' if lo_open else '>='} {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(f"{where}: must be <= {hi}, got {value}")
    return int(value) if integer else float(value)


def _merge(section, given, defaults):
    _check_keys(section, given, defaults)
    out = dict(defaults)
    out.update(given)
    return out


def parse_config(doc):
    """Validate a decoded JSON document and fill in defaults.

    Raises
    ------
    ConfigError
        Naming the offending key.
    """
    _check_keys("", doc, DEFAULTS)
    grid = _merge("grid", doc.get("grid", {}), DEFAULTS["grid"])
    solver = _merge("solver", doc.get("solver", {}), DEFAULTS["solver"])
    monitors = _merge("monitors", doc.get("monitors", {}), DEFAULTS["monitors"])
    output = _merge("output", doc.get("output", {}), DEFAULTS["output"])
    sweep = _merge("sweep", doc.get("sweep", {}), DEFAULTS["sweep"])
    probe = _merge("probe", doc.get("probe", {}), DEFAULTS["probe"])
    validate = _merge("validate", doc.get("validate", {}), DEFAULTS["validate"])

    dim = _number("grid", "dim", grid["dim"], integer=True)
    if dim not in (2, 3):
        raise ConfigError(f"grid.dim: must be 2 or 3, got {dim}")
    n = _number("grid", "n", grid["n"], lo=8, hi=512, integer=True)
    if n % 2:
        raise ConfigError(f"grid.n: must be even, got {n}")

    s = solver
    s["alpha"] = _number("solver", "alpha", s["alpha"], lo=0, hi=1)
    s["nu"] = _number("solver", "nu", s["nu"], lo=0, lo_open=True)
    s["dt"] = _number("solver", "dt", s["dt"], lo=0, lo_open=True)
    s["t_end"] = _number("solver", "t_end", s["t_end"], lo=0)
    s["cfl_limit"] = _number("solver", "cfl_limit", s["cfl_limit"], lo=0, lo_open=True)
    s["sample_every"] = _number("solver", "sample_every", s["sample_every"], lo=1, integer=True)
    if s["formulation"] not in FORMULATIONS:
        raise ConfigError(f"solver.formulation: must be one of {', '.join(FORMULATIONS)}")
    if s["integrator"] not in INTEGRATORS:
        raise ConfigError(f"solver.integrator: must be one of {', '.join(INTEGRATORS)}")
    params = SolverParams(**s)

    init = doc.get("initial", DEFAULTS["initial"])
    if not isinstance(init, dict) or init.get("type") not in _INITIAL_KEYS:
        raise ConfigError(f"initial.type: must be one of {', '.join(_INITIAL_KEYS)}")
    kind = init["type"]
    _check_keys("initial", init, _INITIAL_KEYS[kind])
    init = {**_INITIAL_DEFAULTS[kind], **init}
    if kind in ("taylor_green", "random"):
        init["amplitude"] = _number("initial", "amplitude", init["amplitude"], lo=0)
    if kind == "random":
        init["seed"] = _number("initial", "seed", init["seed"], lo=0, integer=True)
        init["slope"] = _number("initial", "slope", init["slope"])
        init["k_max"] = _number("initial", "k_max", init["k_max"], lo=1, hi=n // 3, integer=True)
    if kind == "checkpoint" and not isinstance(init.get("path"), str):
        raise ConfigError("initial.path: a checkpoint file path is required")

    for key in ("epsilon", "epsilon1", "K", "C_f", "gronwall_tol"):
        monitors[key] = _number("monitors", key, monitors[key], lo=0, lo_open=True)
    mon = MonitorConstants(**monitors)

    if not isinstance(output["dir"], str) or not output["dir"]:
        raise ConfigError("output.dir: expected a non-empty string")
    formats = output["formats"]
    if not isinstance(formats, list) or any(f not in _FORMATS for f in formats):
        raise ConfigError(f"output.formats: expected a list drawn from {', '.join(_FORMATS)}")

    alphas = sweep["alphas"]
    if not isinstance(alphas, list) or not alphas:
        raise ConfigError("sweep.alphas: expected a non-empty list")
    alphas = [_number("sweep", "alphas", a, lo=0, hi=1, lo_open=True) for a in alphas]
    if any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise ConfigError("sweep.alphas: must be strictly decreasing")
    amps = probe["amplitudes"]
    if not isinstance(amps, list) or not amps:
        raise ConfigError("probe.amplitudes: expected a non-empty list")
    amps = [_number("probe", "amplitudes", a, lo=0) for a in amps]
    if any(b <= a for a, b in zip(amps, amps[1:])):
        raise ConfigError("probe.amplitudes: must be increasing")
    levels = _number("validate", "levels", validate["levels"], lo=2, hi=6, integer=True)

    workers = doc.get("workers", None)
    if workers is None:
        workers = os.cpu_count() or 1
    else:
        workers = _number("", "workers", workers, lo=1, integer=True)

    resolved = {
        "grid": {"dim": dim, "n": n},
        "solver": asdict(params),
        "initial": init,
        "monitors": asdict(mon),
        "output": {"dir": output["dir"], "formats": list(formats)},
        "sweep": {"alphas": alphas},
        "probe": {"amplitudes": amps},
        "validate": {"levels": levels},
        "workers": workers,
    }
    return RunConfig(dim, n, params, init, mon, output["dir"], tuple(formats), tuple(alphas),
                     tuple(amps), levels, workers, resolved)


def load_config(path):
    """Read and validate a JSON config file; syntax errors report line and column."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror}") from err
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: line {err.lineno}, column {err.colno}: {err.msg}") from err
    try:
        return parse_config(doc)
    except ConfigError as err:
        raise ConfigError(f"{path}: {err}") from err
