"""Flat ``key = value`` configuration files.

Keys may appear under ``[data]``, ``[solver]``, ``[geometry]`` or ``[sweep]`` headers or
bare at the top.  A bare key resolves to the section that owns it; in sweep mode the
parameter axes (``p``, ``eps0``, ``delta``, ...) resolve to ``[sweep]`` and accept
comma-separated lists.  ``#`` starts a comment.
"""

from dataclasses import dataclass, field
import math

from .errors import ConfigError
from .solver import SolverConfig


def _int(text):
    v = float(text)
    if not math.isfinite(v) or v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _float(text):
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {text!r}")
    return v


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _str(text):
    return text.strip()


# (type, default, validator) per key; default None marks a required key.
_DATA = {
    "p": (_int, None, lambda v: v >= 1, "p must be a positive integer"),
    "eps0": (_float, None, lambda v: 0.0 < v < 1.0, "eps0 must lie in (0, 1)"),
    "delta": (_float, None, lambda v: 0.0 < v <= 0.5, "delta must lie in (0, 0.5]"),
    "center": (_float, -0.5, None, None),
    "width": (_float, 0.4, lambda v: v > 0.0, "width must be positive"),
    "amplitude": (_float, 1.0, None, None),
    "grid_n": (_int, 0, lambda v: v >= 0, "grid_n must be >= 0 (0 = automatic)"),
    "cells_per_delta": (_float, 32.0, lambda v: v > 0.0, "cells_per_delta must be positive"),
}
_SOLVER = {
    "cfl": (_float, 0.4, lambda v: 0.0 < v <= 0.9, "cfl must lie in (0, 0.9]"),
    "order": (_int, 4, lambda v: v in (2, 4), "order must be 2 or 4"),
    "t_max": (_float, 50.0, lambda v: v > 1.0, "t_max must exceed 1"),
    "blowup_grad_cap": (_float, 1e6, lambda v: v > 0.0, "blowup_grad_cap must be positive"),
    "grad_cap_cells": (_float, 1.0, lambda v: v >= 0.0, "grad_cap_cells must be >= 0 (0 = fixed cap only)"),
    "hyp_floor": (_float, 0.1, lambda v: 0.0 < v < 1.0, "hyp_floor must lie in (0, 1)"),
    "dt_floor": (_float, 1e-10, lambda v: v > 0.0, "dt_floor must be positive"),
    "mu_floor": (_float, 1e-3, lambda v: v > 0.0, "mu_floor must be positive"),
    "corroboration_window": (_float, 0.1, lambda v: v >= 0.0, "corroboration_window must be >= 0"),
    "snapshot_stride": (_int, 0, lambda v: v >= 0, "snapshot_stride must be >= 0"),
    "diag_stride": (_int, 10, lambda v: v >= 1, "diag_stride must be >= 1"),
    "fit_t_lo": (_float, 0.0, lambda v: v >= 0.0, "fit_t_lo must be >= 0"),
    "fit_t_hi": (_float, 0.0, lambda v: v >= 0.0, "fit_t_hi must be >= 0"),
}
_GEOMETRY = {
    "track": (_bool, True, None, None),
    "curves": (_int, 65, lambda v: v >= 2, "curves must be >= 2"),
    "eikonal": (_bool, True, None, None),
    "record_stride": (_int, 0, lambda v: v >= 0, "record_stride must be >= 0"),
}
_SWEEP = {
    "p": (_int, None, lambda v: v >= 1, "p must be a positive integer"),
    "eps0": (_float, None, lambda v: 0.0 < v < 1.0, "eps0 must lie in (0, 1)"),
    "delta": (_float, None, lambda v: 0.0 < v <= 0.5, "delta must lie in (0, 0.5]"),
    "amplitude": (_float, 1.0, None, None),
    "grid_n": (_int, 0, lambda v: v >= 0, "grid_n must be >= 0 (0 = automatic)"),
    "t_max": (_float, 50.0, lambda v: v > 1.0, "t_max must exceed 1"),
    "exclude": (_str, "", None, None),
    "workers": (_int, 1, lambda v: v >= 1, "workers must be >= 1"),
}
SECTIONS = {"data": _DATA, "solver": _SOLVER, "geometry": _GEOMETRY, "sweep": _SWEEP}
SWEEP_AXES = ("p", "eps0", "delta", "amplitude", "grid_n", "t_max")


@dataclass
class Config:
    data: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    geometry: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def solver_config(self, **override):
        s = dict(self.solver)
        g = self.geometry
        lo, hi = s.pop("fit_t_lo"), s.pop("fit_t_hi")
        window = (lo, hi) if hi > lo > 0.0 else None
        kw = dict(s, track_geometry=g["track"], curves=g["curves"], eikonal=g["eikonal"],
                  record_stride=g["record_stride"], fit_window=window)
        kw.update(override)
        return SolverConfig(**kw)


def _owner(key, mode):
    if mode == "sweep" and key in _SWEEP:
        return "sweep"
    for name in ("data", "solver", "geometry", "sweep"):
        if key in SECTIONS[name]:
            return name
    return None


def _coerce(conv, check, msg, raw, key, line):
    try:
        v = conv(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}", line) from None
    if check is not None and not check(v):
        raise ConfigError(f"{key} = {raw.strip()}: {msg}", line)
    return v


def parse_config(text, mode="run"):
    """Parse and validate a config file.

    ``mode`` is ``"run"`` (``p``, ``eps0``, ``delta`` are required scalars) or
    ``"sweep"`` (the parameter axes are lists and live under ``[sweep]``).
    Raises :class:`ConfigError` carrying the offending line number.
    """
    if mode not in ("run", "sweep"):
        raise ValueError(f"unknown mode {mode!r}")
    raw = {name: {} for name in SECTIONS}
    where = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("[") and body.endswith("]"):
            section = body[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, value = (x.strip() for x in body.split("=", 1))
        key = key.replace("-", "_")
        target = section if section is not None else _owner(key, mode)
        if target is None or key not in SECTIONS[target]:
            raise ConfigError(f"unknown key {key!r}" + (f" in [{section}]" if section else ""), lineno)
        if key in raw[target]:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        raw[target][key] = value
        where[(target, key)] = lineno

    cfg = Config()
    for name, spec in SECTIONS.items():
        out = getattr(cfg, name)
        for key, (conv, default, check, msg) in spec.items():
            line = where.get((name, key))
            if key not in raw[name]:
                required = default is None and (name == mode or (name == "data" and mode == "run"))
                if required:
                    raise ConfigError(f"missing required key {key!r}")
                if name == "sweep" and key in SWEEP_AXES and default is not None:
                    out[key] = [default]
                else:
                    out[key] = default
                continue
            value = raw[name][key]
            if name == "sweep" and key in SWEEP_AXES:
                items = [x for x in (v.strip() for v in value.split(",")) if x]
                if not items:
                    raise ConfigError(f"{key}: empty list", line)
                out[key] = [_coerce(conv, check, msg, x, key, line) for x in items]
            else:
                out[key] = _coerce(conv, check, msg, value, key, line)
    if mode == "sweep":
        cfg.sweep["exclude"] = _parse_exclude(cfg.sweep["exclude"], where.get(("sweep", "exclude")))
    s = cfg.solver
    if s["fit_t_hi"] and not s["fit_t_hi"] > s["fit_t_lo"]:
        raise ConfigError("fit_t_hi must exceed fit_t_lo", where.get(("solver", "fit_t_hi")))
    return cfg


def _parse_exclude(text, line):
    """``p=1 & eps0=0.75 ; p=6`` -> list of {key: float} conjunctions."""
    rules = []
    for clause in (c.strip() for c in (text or "").split(";")):
        if not clause:
            continue
        rule = {}
        for term in clause.split("&"):
            if "=" not in term:
                raise ConfigError(f"exclude: expected key=value, got {term.strip()!r}", line)
            k, v = (x.strip() for x in term.split("=", 1))
            if k not in SWEEP_AXES:
                raise ConfigError(f"exclude: unknown axis {k!r}", line)
            try:
                rule[k] = float(v)
            except ValueError:
                raise ConfigError(f"exclude: bad value {v!r}", line) from None
        rules.append(rule)
    return rules


def load_config(path, mode="run"):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), mode)
