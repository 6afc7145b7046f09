"""TOML run configuration: loading, validation and canonical serialisation.

A configuration file has an optional top-level ``experiment = N`` choosing
the preset that supplies every unspecified value (preset 4 when absent),
followed by up to five tables::

    experiment = 4

    [params]        # M, m, l, g, d, c, inertia (3x3)
    [gains]         # k_d, k1, k2
    [initial]       # x, xdot, R (3x3, row lists), omega, y, ydot
    [integrator]    # dt, t_end, projection, derivatives
    [law]           # damping_sign, beta_mode, beta_sign

:func:`dumps` always writes every key in the order above with floats in
shortest round-trip form, so ``dumps(loads(dumps(s))) == dumps(s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from . import geom
from .controller import DEFAULT_LAW, ControlLaw, ControllerGains
from .dynamics import ParameterError, PhysicalParams, SystemState
from .integrator import IntegratorConfig
from .presets import TABLE, make_initial, preset

DEFAULT_EXPERIMENT = 4
Y_UNIT_TOL = 1e-3
R_ORTH_TOL = 1e-6

_SECTIONS = {
    "params": ("M", "m", "l", "g", "d", "c", "inertia"),
    "gains": ("k_d", "k1", "k2"),
    "initial": ("x", "xdot", "R", "omega", "y", "ydot"),
    "integrator": ("dt", "t_end", "projection", "derivatives"),
    "law": ("damping_sign", "beta_mode", "beta_sign"),
}


class ConfigError(ValueError):
    """Base class for configuration problems."""


class ParseError(ConfigError):
    """The file is not valid TOML."""


class ValidationError(ConfigError):
    """A value is present but unusable; ``key`` is its dotted path."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass(frozen=True)
class RunSetup:
    """Everything needed to start a run.

    Iterates as ``(initial, gains, params, cfg)``; the control-law variant
    and originating preset are available as attributes.
    """

    initial: SystemState
    gains: ControllerGains
    params: PhysicalParams
    cfg: IntegratorConfig
    law: ControlLaw = DEFAULT_LAW
    experiment: int = DEFAULT_EXPERIMENT

    def __iter__(self):
        return iter((self.initial, self.gains, self.params, self.cfg))

    def with_integrator(self, **kw) -> "RunSetup":
        try:
            cfg = replace(self.cfg, **kw)
        except ValueError as exc:
            raise _as_validation("integrator", exc) from exc
        return replace(self, cfg=cfg)


def from_preset(pid: int, cfg: IntegratorConfig | None = None) -> RunSetup:
    p = preset(pid)
    return RunSetup(p.initial, p.gains, p.params, cfg or IntegratorConfig(), DEFAULT_LAW, pid)


def _as_validation(section: str, exc: Exception) -> ValidationError:
    key = getattr(exc, "key", None)
    msg = str(exc)
    if key is None and ":" in msg:
        key, msg = msg.split(":", 1)
        msg = msg.strip()
    return ValidationError(f"{section}.{key}" if key else section, msg)


def _number(key, val):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ValidationError(key, f"expected a number, got {val!r}")
    val = float(val)
    if not math.isfinite(val):
        raise ValidationError(key, "must be finite")
    return val


def _vector(key, val, shape):
    try:
        arr = np.array(val, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(key, f"expected numbers of shape {shape}") from None
    if arr.shape != shape:
        raise ValidationError(key, f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(key, "must be finite")
    return arr


def _check_keys(doc: dict):
    for key, val in doc.items():
        if key == "experiment":
            continue
        if key not in _SECTIONS:
            raise ValidationError(key, "unknown key")
        if not isinstance(val, dict):
            raise ValidationError(key, "expected a table")
        for sub in val:
            if sub not in _SECTIONS[key]:
                raise ValidationError(f"{key}.{sub}", "unknown key")


def _build_initial(sec: dict, base: SystemState) -> SystemState:
    vals = {}
    for key in _SECTIONS["initial"]:
        shape = (3, 3) if key == "R" else (3,)
        vals[key] = _vector(f"initial.{key}", sec[key], shape) if key in sec else getattr(base, key)
    y = vals["y"]
    if abs(geom.norm(y) - 1.0) > Y_UNIT_TOL:
        raise ValidationError("initial.y", f"|y| = {geom.norm(y):.6g} is not within {Y_UNIT_TOL:g} of 1")
    R = vals["R"]
    if np.linalg.norm(R.T @ R - geom.I3) > R_ORTH_TOL or np.linalg.det(R) <= 0.0:
        raise ValidationError("initial.R", "not a rotation matrix")
    if np.linalg.norm(R.T @ R - geom.I3) > 1e-12:
        R = geom.orthonormalize(R)
    return make_initial(y, vals["ydot"], R=R, omega=vals["omega"], x=vals["x"], xdot=vals["xdot"])


def from_dict(doc: dict) -> RunSetup:
    """Validate a parsed configuration and fill defaults from the chosen preset."""
    _check_keys(doc)
    pid = doc.get("experiment", DEFAULT_EXPERIMENT)
    if isinstance(pid, bool) or pid not in TABLE:
        raise ValidationError("experiment", f"must be one of 1..5, got {pid!r}")
    base = from_preset(pid)

    sec = doc.get("params", {})
    kw = {}
    for key in _SECTIONS["params"]:
        if key in sec:
            kw[key] = _vector("params.inertia", sec[key], (3, 3)) if key == "inertia" else _number(f"params.{key}", sec[key])
    try:
        params = replace(base.params, **kw)
    except ParameterError as exc:
        raise ValidationError(f"params.{exc.key}", str(exc).split(":", 1)[1].strip()) from exc

    sec = doc.get("gains", {})
    kw = {k: _number(f"gains.{k}", sec[k]) for k in _SECTIONS["gains"] if k in sec}
    try:
        gains = replace(base.gains, **kw)
    except ValueError as exc:
        raise _as_validation("gains", exc) from exc

    initial = _build_initial(doc.get("initial", {}), base.initial)

    sec = doc.get("integrator", {})
    kw = {}
    for key in ("dt", "t_end"):
        if key in sec:
            kw[key] = _number(f"integrator.{key}", sec[key])
    if "projection" in sec:
        if not isinstance(sec["projection"], bool):
            raise ValidationError("integrator.projection", "expected true or false")
        kw["projection"] = sec["projection"]
    if "derivatives" in sec:
        kw["derivatives"] = sec["derivatives"]
    try:
        cfg = replace(base.cfg, **kw)
    except ValueError as exc:
        raise _as_validation("integrator", exc) from exc

    sec = doc.get("law", {})
    kw = {k: (_number(f"law.{k}", sec[k]) if k != "beta_mode" else sec[k]) for k in _SECTIONS["law"] if k in sec}
    try:
        law = replace(base.law, **kw)
    except ValueError as exc:
        raise ValidationError("law", str(exc)) from exc

    return RunSetup(initial, gains, params, cfg, law, pid)


def loads(text: str) -> RunSetup:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc)) from exc
    return from_dict(doc)


def load_config(path) -> RunSetup:
    """Read and validate a TOML configuration file.

    Raises:
        ParseError: malformed TOML.
        ValidationError: a value is out of range; ``.key`` names it.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(str(exc)) from exc
    return loads(text)


def to_dict(setup: RunSetup) -> dict:
    p, g, s, c, law = setup.params, setup.gains, setup.initial, setup.cfg, setup.law

    def vec(a):
        return [float(v) for v in np.asarray(a).ravel()]

    def mat(a):
        return [vec(row) for row in np.asarray(a)]

    return {
        "experiment": int(setup.experiment),
        "params": {"M": p.M, "m": p.m, "l": p.l, "g": p.g, "d": p.d, "c": p.c, "inertia": mat(p.inertia)},
        "gains": {"k_d": g.k_d, "k1": g.k1, "k2": g.k2},
        "initial": {"x": vec(s.x), "xdot": vec(s.xdot), "R": mat(s.R), "omega": vec(s.omega), "y": vec(s.y),
                    "ydot": vec(s.ydot)},
        "integrator": {"dt": c.dt, "t_end": c.t_end, "projection": c.projection, "derivatives": c.derivatives},
        "law": {"damping_sign": law.damping_sign, "beta_mode": law.beta_mode, "beta_sign": law.beta_sign},
    }


def dumps(setup: RunSetup) -> str:
    """Canonical TOML text for ``setup``."""
    return tomli_w.dumps(to_dict(setup))


def save_config(setup: RunSetup, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(setup))

