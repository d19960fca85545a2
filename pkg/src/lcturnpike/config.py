"""JSON run configuration.

Schema (``n``/``m`` optional but checked when present)::

    {
      "system": {"n": 2, "m": 1, "A": [[...], ...], "B": [[...], ...],
                 "b": [...]},
      "cost": {"family": "quadratic", "Q": ..., "R": ..., "S": ..., "q": ...,
               "r": ..., "c0": 0.0, "delta": null}
           or {"family": "perturbed_quadratic", "base": {<quadratic>},
               "alpha": [...], "beta": [...]},
      "initial_states": [[...], ...],
      "horizons": [10, 20, 40],
      "discretization": {"N_per_unit": 200, "tol_newton": 1e-10,
                         "max_iter": 50},
      "tolerances": {"rank_tol": null, "stab_tol": 1e-9, "tol_feas": 1e-9,
                     "tol_kkt": 1e-9, "tol_a1": 1e-9},
      "seed": 0,
      "output_dir": "out"
    }
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .system_model import LinearSystem, PerturbedQuadraticCost, QuadraticCost

__all__ = ["RunConfig", "load_config", "parse_config", "DEFAULT_DISCRETIZATION",
           "DEFAULT_TOLERANCES"]

DEFAULT_DISCRETIZATION = {"N_per_unit": 200, "tol_newton": 1e-10,
                          "max_iter": 50}
DEFAULT_TOLERANCES = {"rank_tol": None, "stab_tol": 1e-9, "tol_feas": 1e-9,
                      "tol_kkt": 1e-9, "tol_a1": 1e-9}


@dataclass
class RunConfig:
    system: LinearSystem
    cost: object
    initial_states: list
    horizons: list
    discretization: dict = field(default_factory=lambda: dict(DEFAULT_DISCRETIZATION))
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    seed: int = 0
    output_dir: str = "out"
    sha256: str = ""


def _require(obj, key, path):
    if not isinstance(obj, dict) or key not in obj:
        raise ConfigError(f"missing required field {path}", field=path)
    return obj[key]


def _matrix(value, path, rows=None, cols=None):
    if not isinstance(value, list) or not value or not all(
            isinstance(r, list) for r in value):
        raise ConfigError(f"{path} must be a nonempty list of rows", field=path)
    if rows is not None and len(value) != rows:
        raise ConfigError(f"{path} has {len(value)} rows, expected {rows}",
                          field=path)
    widths = {len(r) for r in value}
    if len(widths) != 1:
        raise ConfigError(f"{path} rows have unequal lengths", field=path)
    width = widths.pop()
    if cols is not None and width != cols:
        raise ConfigError(f"{path} has {width} columns, expected {cols}",
                          field=path)
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path} has non-numeric entries", field=path) from exc
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{path} has non-finite entries", field=path)
    return arr


def _vector(value, path, size):
    if not isinstance(value, list):
        raise ConfigError(f"{path} must be a list", field=path)
    if len(value) != size:
        raise ConfigError(f"{path} has length {len(value)}, expected {size}",
                          field=path)
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path} has non-numeric entries", field=path) from exc
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{path} must be a finite vector", field=path)
    return arr


def _quadratic(entry, path, n, m):
    Q = _matrix(_require(entry, "Q", f"{path}.Q"), f"{path}.Q", n, n)
    R = _matrix(_require(entry, "R", f"{path}.R"), f"{path}.R", m, m)
    S = _matrix(entry["S"], f"{path}.S", n, m) if entry.get("S") is not None else None
    q = _vector(entry["q"], f"{path}.q", n) if entry.get("q") is not None else None
    r = _vector(entry["r"], f"{path}.r", m) if entry.get("r") is not None else None
    c0 = float(entry.get("c0", 0.0))
    delta = entry.get("delta")
    return QuadraticCost(Q, R, S, q, r, c0,
                         None if delta is None else float(delta))


def _cost(entry, n, m):
    if not isinstance(entry, dict):
        raise ConfigError("cost must be an object", field="cost")
    family = entry.get("family", "quadratic")
    if family == "quadratic":
        return _quadratic(entry, "cost", n, m)
    if family == "perturbed_quadratic":
        base = entry.get("base", entry)
        path = "cost.base" if "base" in entry else "cost"
        qc = _quadratic(base, path, n, m)
        alpha = _vector(entry.get("alpha", [0.0] * n), "cost.alpha", n)
        beta = _vector(entry.get("beta", [0.0] * m), "cost.beta", m)
        return PerturbedQuadraticCost(qc, alpha, beta)
    raise ConfigError(f"unknown cost family {family!r}", field="cost.family")


def parse_config(data, sha256=""):
    """Validate a decoded JSON object and apply defaults."""
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object")
    system = _require(data, "system", "system")
    A_raw = _require(system, "A", "system.A")
    n = system.get("n")
    if n is None:
        n = len(A_raw) if isinstance(A_raw, list) else None
    if not isinstance(n, int) or n < 1:
        raise ConfigError("system.n must be a positive integer", field="system.n")
    A = _matrix(A_raw, "system.A", n, n)
    B_raw = _require(system, "B", "system.B")
    m = system.get("m")
    if m is None and isinstance(B_raw, list) and B_raw and isinstance(B_raw[0], list):
        m = len(B_raw[0])
    if not isinstance(m, int) or m < 1:
        raise ConfigError("system.m must be a positive integer", field="system.m")
    B = _matrix(B_raw, "system.B", n, m)
    b = _vector(system.get("b", [0.0] * n), "system.b", n)
    sys = LinearSystem(A, B, b)
    cost = _cost(_require(data, "cost", "cost"), n, m)

    states_raw = data.get("initial_states", [])
    if not isinstance(states_raw, list) or not states_raw:
        raise ConfigError("initial_states must be a nonempty list",
                          field="initial_states")
    states = [_vector(x, f"initial_states[{i}]", n)
              for i, x in enumerate(states_raw)]

    horizons_raw = data.get("horizons", [])
    if not isinstance(horizons_raw, list):
        raise ConfigError("horizons must be a list", field="horizons")
    try:
        horizons = sorted(float(T) for T in horizons_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("horizons must be numbers", field="horizons") from exc
    if any(not np.isfinite(T) or T <= 0 for T in horizons):
        raise ConfigError("horizons must be positive", field="horizons")

    disc = dict(DEFAULT_DISCRETIZATION)
    disc.update(data.get("discretization") or {})
    if not (isinstance(disc["N_per_unit"], (int, float)) and disc["N_per_unit"] > 0):
        raise ConfigError("N_per_unit must be positive",
                          field="discretization.N_per_unit")
    disc["max_iter"] = int(disc["max_iter"])
    tols = dict(DEFAULT_TOLERANCES)
    tols.update(data.get("tolerances") or {})
    for key in tols:
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown tolerance {key}",
                              field=f"tolerances.{key}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer", field="seed")
    return RunConfig(system=sys, cost=cost, initial_states=states,
                     horizons=horizons, discretization=disc, tolerances=tols,
                     seed=seed, output_dir=str(data.get("output_dir", "out")),
                     sha256=sha256)


def load_config(path):
    """Read and validate a JSON config file.

    Raises
    ------
    ConfigError
        With ``line``/``column`` set on a JSON syntax error and ``field`` set
        on a schema or dimension error.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} at line {exc.lineno} "
                          f"column {exc.colno}", line=exc.lineno,
                          column=exc.colno) from exc
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not UTF-8: {exc}") from exc
    return parse_config(data, hashlib.sha256(raw).hexdigest())
