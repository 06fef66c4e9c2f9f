"""JSON run configuration.

A configuration file is one flat JSON object whose keys are the fields of
:class:`~segflow.bregman.SolverConfig` and
:class:`~segflow.adapt.AdaptConfig`. Omitted keys keep their defaults
(``mu`` follows the model: 1 for ``bayes``, 1e-3 for ``rsfe``).
"""

import json
import math

from .adapt.driver import AdaptConfig
from .bregman import SolverConfig

_REAL = "real"
_INT = "integer"
_STR = "string"
_BOOL = "boolean"

SOLVER_KEYS = {
    "model": _STR, "nu": _REAL, "mu": _REAL, "beta": _REAL, "eps": _REAL, "alpha": _REAL,
    "tau": _REAL, "zeta": _REAL, "sigma": _REAL, "mu_i": _REAL, "mu_e": _REAL, "dt": _REAL,
    "eta_star": _REAL, "max_iters": _INT, "stop_rule": _STR, "rsfe_source_sum": _BOOL,
}
ADAPT_KEYS = {
    "tau_star": _REAL, "n_breg": _INT, "omega": _REAL, "cap": _REAL, "max_halvings": _INT,
    "lambda_min": _REAL, "lambda_max": _REAL, "max_passes": _INT,
}
NULLABLE = {"mu", "lambda_max"}


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the offending key path (``"$"`` for the document)."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def _check_type(key, value, kind):
    if value is None and key in NULLABLE:
        return value
    if kind == _REAL:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {type(value).__name__}")
        if not math.isfinite(value):
            raise ConfigError(key, "must be finite")
        return float(value)
    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {type(value).__name__}")
        return value
    if kind == _STR:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {type(value).__name__}")
        return value
    if not isinstance(value, bool):
        raise ConfigError(key, f"expected true or false, got {type(value).__name__}")
    return value


def _build(cls, values, keys):
    try:
        return cls(**values)
    except ValueError as exc:
        msg = str(exc)
        name, _, rest = msg.partition(":")
        if name in keys:
            raise ConfigError(name, rest.strip()) from None
        raise ConfigError("$", msg) from None


def parse_config(data, model=None):
    """Validate a decoded JSON object into ``(SolverConfig, AdaptConfig)``.

    Parameters
    ----------
    data : dict
        Decoded configuration object.
    model : {"bayes", "rsfe"}, optional
        Overrides the ``model`` key (the command-line flag wins).

    Raises
    ------
    ConfigError
        On unknown keys, type mismatches or out-of-range values.
    """
    if not isinstance(data, dict):
        raise ConfigError("$", "configuration must be a JSON object")
    solver, adapt = {}, {}
    for key in sorted(data):
        if key in SOLVER_KEYS:
            solver[key] = _check_type(key, data[key], SOLVER_KEYS[key])
        elif key in ADAPT_KEYS:
            adapt[key] = _check_type(key, data[key], ADAPT_KEYS[key])
        else:
            raise ConfigError(key, "unknown key")
    if model is not None:
        solver["model"] = model
    return _build(SolverConfig, solver, SOLVER_KEYS), _build(AdaptConfig, adapt, ADAPT_KEYS)


def load_config(path=None, model=None):
    """Read a JSON configuration file; ``path=None`` gives the defaults."""
    if path is None:
        return parse_config({}, model)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("$", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON at line {exc.lineno}, column {exc.colno}") from None
    return parse_config(data, model)


def config_snapshot(solver, adapt):
    """Flat dict of every resolved parameter, suitable for JSON output."""
    out = solver.as_dict()
    out.update(adapt.as_dict())
    return out
