"""TOML configuration for bodies, aerodynamic models and simulations.

Sections: [body], [aero], [controller] (with its own [controller.aero]),
[gains], [profile], [wind] and [integration]. Angles are given in degrees
(keys ending in ``_deg``). Unknown keys are rejected so that typos surface
as errors naming the offending key path.
"""

import copy
import math
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from aeroeq.aero import (
    BodyParams,
    Blended,
    FlatPlate,
    ModelError,
    SmallAlpha,
    load_tabulated,
    passivity_counterexample,
)
from aeroeq.control import ControlGains, ControllerModel
from aeroeq.sim import ReferenceProfile, SimConfig, Wind


class ConfigError(ValueError):
    """Invalid configuration; the message names the key path."""


MODEL_KEYS = {
    "flat_plate": ("c0", "c1"),
    "small_alpha": ("c0", "c2", "c3"),
    "blended": ("c0", "c1", "c2", "c3", "alpha_bar_deg", "kL", "kD"),
    "table": ("path",),
    "counterexample": ("c0",),
}


def parse_override(text):
    """Split ``a.b.c=value`` and parse the value as a TOML literal (bare
    words fall back to strings)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key or any(not part for part in key.split(".")):
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def apply_overrides(raw, overrides):
    data = copy.deepcopy(raw)
    for text in overrides or ():
        key, value = parse_override(text)
        parts = key.split(".")
        node = data
        for i, part in enumerate(parts[:-1]):
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{'.'.join(parts[: i + 1])}: not a table, cannot set {key}")
        node[parts[-1]] = value
    return data


def load_raw(path, overrides=()):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return apply_overrides(raw, overrides)


class _Section:
    """Typed access to one table with key-path error messages."""

    def __init__(self, data, path):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a table")
        self.data, self.path, self.used = data, path, set()

    def key(self, name):
        return f"{self.path}.{name}" if self.path else name

    def has(self, name):
        return name in self.data

    def number(self, name, default=None, positive=False, nonneg=False):
        self.used.add(name)
        if name not in self.data:
            if default is None:
                raise ConfigError(f"{self.key(name)}: missing required value")
            return float(default)
        v = self.data[name]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{self.key(name)}: expected a finite number, got {v!r}")
        if positive and not v > 0:
            raise ConfigError(f"{self.key(name)}: must be positive, got {v}")
        if nonneg and not v >= 0:
            raise ConfigError(f"{self.key(name)}: must be non-negative, got {v}")
        return float(v)

    def vector(self, name, default=(0.0, 0.0)):
        self.used.add(name)
        v = self.data.get(name, list(default))
        ok = isinstance(v, list) and len(v) == 2
        ok = ok and all(isinstance(c, (int, float)) and not isinstance(c, bool) and math.isfinite(c) for c in v)
        if not ok:
            raise ConfigError(f"{self.key(name)}: expected a pair of finite numbers, got {v!r}")
        return tuple(float(c) for c in v)

    def string(self, name, default=None, choices=None):
        self.used.add(name)
        v = self.data.get(name, default)
        if v is None:
            raise ConfigError(f"{self.key(name)}: missing required value")
        if not isinstance(v, str):
            raise ConfigError(f"{self.key(name)}: expected a string, got {v!r}")
        if choices is not None and v not in choices:
            raise ConfigError(f"{self.key(name)}: must be one of {sorted(choices)}, got {v!r}")
        return v

    def flag(self, name, default=False):
        self.used.add(name)
        v = self.data.get(name, default)
        if not isinstance(v, bool):
            raise ConfigError(f"{self.key(name)}: expected true or false, got {v!r}")
        return v

    def table(self, name):
        self.used.add(name)
        return _Section(self.data.get(name, {}), self.key(name))

    def finish(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(f"{self.key(extra[0])}: unknown key")


def _wrap(fn, path):
    try:
        return fn()
    except ConfigError:
        raise
    except (ModelError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def build_body(data, path="body", defaults=None):
    """BodyParams from a table with m, g, k_a (or rho and area), delta_deg."""
    sec = _Section(data, path)
    defaults = defaults or {}
    m = sec.number("m", defaults.get("m"), positive=True)
    g = sec.number("g", defaults.get("g", 9.81), positive=True)
    if sec.has("rho") or sec.has("area"):
        if sec.has("k_a"):
            raise ConfigError(f"{path}: give either k_a or rho and area, not both")
        k_a = 0.5 * sec.number("rho", nonneg=True) * sec.number("area", nonneg=True)
    else:
        k_a = sec.number("k_a", defaults.get("k_a", 0.646), nonneg=True)
    delta = math.radians(sec.number("delta_deg", defaults.get("delta_deg", 0.0)))
    sec.finish()
    return _wrap(lambda: BodyParams(m=m, g=g, k_a=k_a, delta=delta), path)


def build_model(data, path="aero", base_dir="."):
    """Aerodynamic model from ``model = <kind>`` plus its parameters."""
    sec = _Section(data, path)
    kind = sec.string("model", choices=MODEL_KEYS)
    if kind == "table":
        rel = sec.string("path")
        sec.finish()
        table = Path(rel)
        if not table.is_absolute():
            table = Path(base_dir) / table
        if not table.is_file():
            raise ConfigError(f"{sec.key('path')}: file not found: {table}")
        return _wrap(lambda: load_tabulated(table), sec.key("path"))
    p = {k: sec.number(k) for k in MODEL_KEYS[kind]}
    sec.finish()
    if kind == "flat_plate":
        return _wrap(lambda: FlatPlate(p["c0"], p["c1"]), path)
    if kind == "small_alpha":
        return _wrap(lambda: SmallAlpha(p["c0"], p["c2"], p["c3"]), path)
    if kind == "counterexample":
        return _wrap(lambda: passivity_counterexample(p["c0"]), path)
    return _wrap(
        lambda: Blended(
            p["c0"], p["c1"], p["c2"], p["c3"], math.radians(p["alpha_bar_deg"]), p["kL"], p["kD"]
        ),
        path,
    )


def build_profile(data, path="profile"):
    sec = _Section(data, path)
    kind = sec.string("kind", "hover", choices=ReferenceProfile.KINDS)
    kwargs = {"kind": kind}
    if kind == "constant":
        kwargs["velocity"] = sec.vector("velocity")
    elif kind == "ramp_then_cruise":
        kwargs["rate"] = sec.number("rate", positive=True)
        kwargs["v_max"] = sec.number("v_max", nonneg=True)
        kwargs["direction"] = sec.vector("direction", (0.0, 1.0))
    elif kind == "piecewise":
        sec.used.add("knots")
        knots = sec.data.get("knots")
        if not isinstance(knots, list) or not knots:
            raise ConfigError(f"{sec.key('knots')}: expected a list of [t, v1, v2] rows")
        kwargs["knots"] = knots
    sec.finish()
    return _wrap(lambda: ReferenceProfile(**kwargs), path)


def build_wind(data, path="wind"):
    sec = _Section(data, path)
    velocity = sec.vector("velocity")
    sec.finish()
    return Wind(velocity)


def build_gains(data, path="gains"):
    sec = _Section(data, path)
    kw = {k: sec.number(k, positive=True) for k in ("k1", "k2", "k3")}
    kw["tau"] = sec.number("tau", 80.0, positive=True)
    kw["use_feedforward"] = sec.flag("use_feedforward")
    kw["use_nonlinear_k"] = sec.flag("use_nonlinear_k", True)
    kw["clamp_thrust"] = sec.flag("clamp_thrust")
    sec.finish()
    return _wrap(lambda: ControlGains(**kw), path)


def _body_defaults(body):
    return {"m": body.m, "g": body.g, "k_a": body.k_a, "delta_deg": math.degrees(body.delta)}


def build_controller(data, body, model, path="controller", base_dir="."):
    """Estimated body and model; anything omitted falls back to the truth."""
    sec = _Section(data, path)
    rule = sec.string("lambda_rule", "general", choices=("general", "special"))
    law = sec.string("law", "robust", choices=("robust", "ideal"))
    body_keys = {k: sec.data[k] for k in ("m", "g", "k_a", "rho", "area", "delta_deg") if k in sec.data}
    sec.used.update(body_keys)
    body_hat = build_body(body_keys, path, _body_defaults(body))
    aero_hat = model
    if sec.has("aero"):
        sec.used.add("aero")
        aero_hat = build_model(sec.data["aero"], sec.key("aero"), base_dir)
    sec.finish()
    return _wrap(lambda: ControllerModel(body_hat, aero_hat, rule), path), law


def build_integration(data, path="integration"):
    sec = _Section(data, path)
    out = {
        "dt": sec.number("dt", 1e-3, positive=True),
        "t_end": sec.number("t_end", 12.0, positive=True),
        "integrator": sec.string("integrator", "rk4", choices=("rk4",)),
        "xdot0": sec.vector("xdot0"),
        "x0": sec.vector("x0"),
        "theta0": math.radians(sec.number("theta0_deg", 0.0)),
    }
    sec.finish()
    if out["t_end"] < out["dt"]:
        raise ConfigError(f"{path}.t_end: must be at least dt")
    return out


SECTIONS = ("body", "aero", "controller", "gains", "profile", "wind", "integration")


class Config:
    """Parsed configuration file; sections are built on demand so that
    analysis commands only need [body] and [aero]."""

    def __init__(self, raw, base_dir="."):
        extra = sorted(set(raw) - set(SECTIONS))
        if extra:
            raise ConfigError(f"{extra[0]}: unknown section")
        self.raw, self.base_dir = raw, Path(base_dir)

    @classmethod
    def load(cls, path, overrides=()):
        return cls(load_raw(path, overrides), Path(path).resolve().parent)

    def _section(self, name, required=True):
        if name not in self.raw:
            if required:
                raise ConfigError(f"{name}: missing section")
            return {}
        return self.raw[name]

    @property
    def body(self):
        return build_body(self._section("body"))

    @property
    def model(self):
        return build_model(self._section("aero"), "aero", self.base_dir)

    @property
    def delta(self):
        return build_body(self._section("body")).delta if "body" in self.raw else 0.0

    @property
    def profile(self):
        return build_profile(self._section("profile", required=False))

    @property
    def wind(self):
        return build_wind(self._section("wind", required=False))

    def sim_config(self, dt=None):
        body, model = self.body, self.model
        ctrl, law = build_controller(self._section("controller", required=False), body, model, base_dir=self.base_dir)
        gains = build_gains(self._section("gains"))
        integ = build_integration(self._section("integration", required=False))
        if dt is not None:
            integ["dt"] = dt
        return _wrap(
            lambda: SimConfig(
                body=body,
                model=model,
                controller=ctrl,
                gains=gains,
                profile=self.profile,
                wind=self.wind,
                law=law,
                **integ,
            ),
            "integration",
        )


def load_sim_config(path, overrides=(), dt=None):
    return Config.load(path, overrides).sim_config(dt)
