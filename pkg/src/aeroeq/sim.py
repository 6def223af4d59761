"""Closed- and open-loop simulation of the planar rigid body.

Plant: m xddot = m g e1 + F_a(xdot - xdot_w, theta) - T R(theta) e1 and
dtheta/dt = omega, integrated with fixed-step RK4. In closed loop the
controller is evaluated at every RK4 stage, so the discrete trajectory
approximates the continuous-time feedback system.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from aeroeq._geometry import E1, rot, wrap_angle
from aeroeq.aero import AeroModel, BodyParams, aero_force, angle_of_attack
from aeroeq.control import CONTROL_LAWS, ControlGains, ControllerModel, lyapunov_value
from aeroeq.equilibrium import ReferenceState

LOG_HEADER = (
    "t",
    "vr1",
    "vr2",
    "v1",
    "v2",
    "vtil1",
    "vtil2",
    "alpha_deg",
    "omega",
    "thrust_over_mg",
    "theta_deg",
    "Fp_norm",
    "V",
)


class IntegrationError(RuntimeError):
    """The integrated state became non-finite."""


def _vec(v):
    return np.asarray(v, dtype=float).reshape(2)


@dataclass(frozen=True, eq=False)
class ReferenceProfile:
    """Reference velocity with its first two time derivatives.

    kinds
    -----
    hover : zero velocity.
    constant : ``velocity``.
    ramp_then_cruise : velocity ``rate * t`` along ``direction`` until it
        reaches ``v_max``, constant afterwards.
    piecewise : linear interpolation through ``knots`` rows (t, v1, v2),
        held constant outside the knot span.

    The acceleration is right-continuous at corners.
    """

    kind: str = "hover"
    velocity: Sequence[float] = (0.0, 0.0)
    rate: float = 0.0
    v_max: float = 0.0
    direction: Sequence[float] = (0.0, 1.0)
    knots: Optional[Sequence[Sequence[float]]] = None

    KINDS = ("hover", "constant", "ramp_then_cruise", "piecewise")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"profile kind must be one of {self.KINDS}, got {self.kind!r}")
        object.__setattr__(self, "velocity", _vec(self.velocity))
        d = _vec(self.direction)
        if self.kind == "ramp_then_cruise":
            if not self.rate > 0 or not self.v_max >= 0:
                raise ValueError("ramp_then_cruise needs rate > 0 and v_max >= 0")
            if np.linalg.norm(d) == 0:
                raise ValueError("ramp direction must be non-zero")
            d = d / np.linalg.norm(d)
        object.__setattr__(self, "direction", d)
        if self.kind == "piecewise":
            k = np.asarray(self.knots, dtype=float)
            if k.ndim != 2 or k.shape[1] != 3 or len(k) < 1:
                raise ValueError("piecewise knots must be rows of (t, v1, v2)")
            if np.any(np.diff(k[:, 0]) <= 0):
                raise ValueError("piecewise knot times must be strictly increasing")
            object.__setattr__(self, "knots", k)

    @property
    def corner_time(self):
        if self.kind == "ramp_then_cruise":
            return self.v_max / self.rate
        return None

    def kinematics(self, t):
        """(xdot_r, xddot_r, xdddot_r) at time t."""
        zero = np.zeros(2)
        if self.kind == "hover":
            return zero, zero, zero
        if self.kind == "constant":
            return self.velocity.copy(), zero, zero
        if self.kind == "ramp_then_cruise":
            if t < self.corner_time:
                return self.rate * t * self.direction, self.rate * self.direction, zero
            return self.v_max * self.direction, zero, zero
        k = self.knots
        if t < k[0, 0]:
            return k[0, 1:].copy(), zero, zero
        if t >= k[-1, 0]:
            return k[-1, 1:].copy(), zero, zero
        i = int(np.searchsorted(k[:, 0], t, side="right")) - 1
        slope = (k[i + 1, 1:] - k[i, 1:]) / (k[i + 1, 0] - k[i, 0])
        return k[i, 1:] + slope * (t - k[i, 0]), slope, zero


@dataclass(frozen=True, eq=False)
class Wind:
    """Constant wind, or ``func(t) -> (xdot_w, xddot_w)`` for a varying one."""

    velocity: Sequence[float] = (0.0, 0.0)
    func: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(self, "velocity", _vec(self.velocity))

    def __call__(self, t):
        if self.func is not None:
            w, wd = self.func(t)
            return _vec(w), _vec(wd)
        return self.velocity, np.zeros(2)


def reference_state(profile, wind, t):
    v, a, j = profile.kinematics(t)
    w, wd = wind(t)
    return ReferenceState(t, v, a, j, w, wd)


@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    x: np.ndarray
    xdot: np.ndarray
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", _vec(self.x))
        object.__setattr__(self, "xdot", _vec(self.xdot))
        object.__setattr__(self, "theta", wrap_angle(self.theta))


Inputs = Union[Tuple[float, float], Callable]


def _acceleration(body, model, xdot, theta, T, wind_velocity):
    fa = aero_force(model, body, xdot - wind_velocity, theta)
    return body.g * E1 + (fa - T * rot(theta)[:, 0]) / body.m


def plant_step(body, model, state, inputs: Inputs, wind, dt):
    """Advance one RK4 step.

    ``inputs`` is a constant (T, omega) pair or a callable
    ``(t, xdot, theta) -> (T, omega)`` evaluated at every stage.
    """
    wind = wind if callable(wind) else Wind(wind)
    if callable(inputs):
        law = inputs
    else:
        T0, w0 = inputs
        law = lambda t, xdot, theta: (T0, w0)  # noqa: E731

    def rhs(t, xdot, theta):
        T, omega = law(t, xdot, theta)
        acc = _acceleration(body, model, xdot, theta, T, wind(t)[0])
        return xdot, acc, omega

    t, x, v, th = state.t, state.x, state.xdot, state.theta
    # overflow shows up as a non-finite state, reported below
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = rhs(t, v, th)
        k2 = rhs(t + dt / 2, v + dt / 2 * k1[1], th + dt / 2 * k1[2])
        k3 = rhs(t + dt / 2, v + dt / 2 * k2[1], th + dt / 2 * k2[2])
        k4 = rhs(t + dt, v + dt * k3[1], th + dt * k3[2])
        x_new = x + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v_new = v + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        th_new = th + dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(v_new)) and math.isfinite(th_new)):
        raise IntegrationError(f"non-finite state after step from t={t:.6g}")
    return SimState(t + dt, x_new, v_new, th_new)


@dataclass(frozen=True, eq=False)
class SimConfig:
    body: BodyParams
    model: AeroModel
    controller: ControllerModel
    gains: ControlGains
    profile: ReferenceProfile = field(default_factory=ReferenceProfile)
    wind: Wind = field(default_factory=Wind)
    dt: float = 1e-3
    t_end: float = 12.0
    law: str = "robust"
    xdot0: Sequence[float] = (0.0, 0.0)
    theta0: float = 0.0
    x0: Sequence[float] = (0.0, 0.0)
    integrator: str = "rk4"

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= self.dt:
            raise ValueError(f"t_end must be at least dt, got {self.t_end}")
        if self.law not in CONTROL_LAWS:
            raise ValueError(f"law must be one of {sorted(CONTROL_LAWS)}, got {self.law!r}")
        if self.integrator != "rk4":
            raise ValueError(f"only the rk4 integrator is available, got {self.integrator!r}")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class SimLog:
    t: np.ndarray
    vr: np.ndarray
    v: np.ndarray
    vtil: np.ndarray
    alpha_deg: np.ndarray
    omega: np.ndarray
    thrust_over_mg: np.ndarray
    theta_deg: np.ndarray
    Fp_norm: np.ndarray
    V: np.ndarray
    x: np.ndarray

    @property
    def error_norm(self):
        return np.linalg.norm(self.vtil, axis=1)

    def columns(self):
        return np.column_stack(
            [
                self.t,
                self.vr,
                self.v,
                self.vtil,
                self.alpha_deg,
                self.omega,
                self.thrust_over_mg,
                self.theta_deg,
                self.Fp_norm,
                self.V,
            ]
        )

    def to_csv(self, path_or_file):
        def write(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_HEADER)
            for row in self.columns():
                w.writerow([f"{v:.10g}" for v in row])

        if hasattr(path_or_file, "write"):
            write(path_or_file)
        else:
            with open(path_or_file, "w", newline="") as fh:
                write(fh)


def run_closed_loop(config: SimConfig):
    """Simulate the closed loop on the uniform grid k * dt, k = 0..n.

    The logged thrust and angular rate are the controller outputs at each
    grid state; alpha is NaN where the airspeed is zero.
    """
    cfg = config
    law = CONTROL_LAWS[cfg.law]
    ctrl, gains = cfg.controller, cfg.gains

    logged = {}

    def controller(t, xdot, theta):
        # the first RK4 stage sits on the logged grid state
        if logged.get("key") == (t, xdot[0], xdot[1], theta):
            return logged["value"]
        out = law(ctrl, gains, reference_state(cfg.profile, cfg.wind, t), xdot, theta)
        return out.T, out.omega

    n = cfg.n_steps
    cols = {k: np.empty(n + 1) for k in ("t", "alpha", "omega", "T", "theta", "fp", "V")}
    vr, v, vt, xs = (np.empty((n + 1, 2)) for _ in range(4))
    state = SimState(0.0, cfg.x0, cfg.xdot0, cfg.theta0)
    weight = cfg.body.weight
    for k in range(n + 1):
        t = k * cfg.dt
        state = SimState(t, state.x, state.xdot, state.theta)
        ref = reference_state(cfg.profile, cfg.wind, t)
        out = law(ctrl, gains, ref, state.xdot, state.theta)
        air = angle_of_attack(state.xdot - ref.xdot_w, state.theta, cfg.body.delta)
        logged["key"] = (t, state.xdot[0], state.xdot[1], state.theta)
        logged["value"] = (out.T, out.omega)
        V = lyapunov_value(ctrl.body_hat.m, gains, out.diagnostics["v_tilde"], out.diagnostics["F_p_bar"])
        cols["t"][k] = t
        cols["alpha"][k] = math.degrees(air.alpha) if air.defined else math.nan
        cols["omega"][k] = out.omega
        cols["T"][k] = out.T / weight
        cols["theta"][k] = math.degrees(state.theta)
        cols["fp"][k] = out.diagnostics["Fp_norm"]
        cols["V"][k] = V
        vr[k], v[k], vt[k], xs[k] = ref.xdot_r, state.xdot, out.diagnostics["v_tilde"], state.x
        if k < n:
            try:
                state = plant_step(cfg.body, cfg.model, state, controller, cfg.wind, cfg.dt)
            except IntegrationError as exc:
                raise IntegrationError(f"closed loop diverged near t={t:.6g}: {exc}") from None
    return SimLog(
        cols["t"], vr, v, vt, cols["alpha"], cols["omega"], cols["T"], cols["theta"], cols["fp"], cols["V"], xs
    )


@dataclass(frozen=True)
class Metrics:
    max_error_post_transient: float
    settle_time: Optional[float]
    jump_time_estimate: Optional[float]
    thrust_bounds: Tuple[float, float]
    final_error: float
    final_theta_deg: float
    diverged: bool

    def to_dict(self):
        d = dict(self.__dict__)
        d["thrust_bounds"] = list(self.thrust_bounds)
        return d


def settle_time(t, err, eps=0.2, hold=1.0):
    """First time after which |vtilde| stays within ``eps`` to the end of the
    run, provided the remaining span is at least ``hold``."""
    bad = np.flatnonzero(~(err <= eps))
    start = 0 if len(bad) == 0 else bad[-1] + 1
    if start >= len(t) or t[-1] - t[start] < hold:
        return None
    return float(t[start])


def spike_onset(t, err, after=1.0, lookback=1.0):
    """Onset of the steepest velocity-error growth after ``after`` seconds.

    The steepest rise is located by the largest forward difference of
    |vtilde|; its onset is the smallest |vtilde| within ``lookback``
    seconds before it. Returns None when the error never grows.
    """
    rate = np.diff(err) / np.diff(t)
    valid = np.flatnonzero((t[:-1] >= after) & np.isfinite(rate))
    if len(valid) == 0 or not np.max(rate[valid]) > 0:
        return None
    peak = int(valid[np.argmax(rate[valid])])
    lo = max(int(np.searchsorted(t, t[peak] - lookback)), int(np.searchsorted(t, after)))
    window = err[lo : peak + 1]
    # latest minimum, so a flat baseline does not pull the onset earlier
    return float(t[lo + len(window) - 1 - int(np.argmin(window[::-1]))])


def metrics(log: SimLog, eps=0.2, hold=1.0, transient=1.0):
    """Summary numbers of a closed-loop run.

    ``max_error_post_transient`` is the largest |vtilde| after ``transient``
    seconds; ``jump_time_estimate`` is the onset of the steepest error
    growth after the transient (see :func:`spike_onset`).
    """
    err = log.error_norm
    finite = bool(np.all(np.isfinite(err)))
    post = err[log.t >= transient]
    max_err = float(np.max(post)) if len(post) else float(np.max(err))
    if not finite:
        max_err = math.inf
    return Metrics(
        max_error_post_transient=max_err,
        settle_time=settle_time(log.t, err, eps, hold),
        jump_time_estimate=spike_onset(log.t, err, transient),
        thrust_bounds=(float(np.nanmin(log.thrust_over_mg)), float(np.nanmax(log.thrust_over_mg))),
        final_error=float(err[-1]),
        final_theta_deg=float(log.theta_deg[-1]),
        diverged=(not finite) or max_err > 1e3,
    )
