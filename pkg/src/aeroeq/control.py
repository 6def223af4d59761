"""Velocity-tracking control laws for thrust-propelled vehicles.

The controller sees only estimated quantities (mass, aerodynamic constant
and coefficient model). It drives the velocity error to zero by aligning the
thrust axis with the transformed force F_p and matching the transformed
thrust to |F_p|.

Notation: R = R(theta), vtilde = R^T (xdot - xdot_r), Fbar = R^T F and
Fbar_p = R^T F_p.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from aeroeq._geometry import S, rot
from aeroeq.aero import AeroModel, BodyParams, ModelError, aero_force
from aeroeq.equilibrium import gravity_inertia_force
from aeroeq.equivalency import LAMBDA_RULES, transformed_coeff_derivs, transformed_force

SINGULAR_RTOL = 1e-12


class SingularityError(ValueError):
    """A denominator of the ideal control law vanished."""


@dataclass(frozen=True)
class ControlGains:
    k1: float
    k2: float
    k3: float
    tau: float = 80.0
    use_feedforward: bool = False
    use_nonlinear_k: bool = True
    clamp_thrust: bool = False

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "tau"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"gain {name} must be positive and finite, got {value}")


@dataclass(frozen=True)
class ControllerModel:
    """Estimates used by the controller (they may differ from the plant)."""

    body_hat: BodyParams
    aero_hat: AeroModel
    lambda_rule: str = "general"

    def __post_init__(self):
        if self.lambda_rule not in LAMBDA_RULES:
            raise ModelError(f"lambda_rule must be one of {LAMBDA_RULES}, got {self.lambda_rule!r}")
        if self.lambda_rule == "special" and self.body_hat.delta != 0.0:
            raise ModelError("the special lambda rule needs delta = 0")


@dataclass(frozen=True)
class ControlOutput:
    T: float
    omega: float
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class _Forces:
    R: np.ndarray
    F: np.ndarray
    Fp: np.ndarray
    Fp_norm: float
    F_bar: np.ndarray
    Fp_bar: np.ndarray
    v_tilde: np.ndarray
    tf: object


def _forces(ctrl, ref, xdot, theta):
    body, model = ctrl.body_hat, ctrl.aero_hat
    xdot = np.asarray(xdot, dtype=float)
    R = rot(theta)
    F = gravity_inertia_force(body, ref) + aero_force(model, body, xdot - ref.xdot_w, theta)
    tf = transformed_force(model, body, ref, xdot, theta, ctrl.lambda_rule)
    Fp = tf.F_p
    return _Forces(
        R=R,
        F=F,
        Fp=Fp,
        Fp_norm=float(np.linalg.norm(Fp)),
        F_bar=R.T @ F,
        Fp_bar=R.T @ Fp,
        v_tilde=R.T @ (xdot - ref.xdot_r),
        tf=tf,
    )


def tilde_theta(Fp_bar):
    """Angle from the thrust axis to F_p, in (-pi, pi]."""
    return math.atan2(Fp_bar[1], Fp_bar[0])


def feedforward_F_delta(ctrl, ref, xdot, theta, thrust=None):
    """Time derivative of F_p along the reference, excluding the orientation
    term handled by the gain k.

    F_delta = d_{xdot_a} f_p xddot_a - d_alpha f_p gammadot - m xdddot_r,
    with the acceleration xddot = (F - T R e1)/m + xddot_r predicted by the
    estimated model. ``thrust`` defaults to the equilibrium value Fbar_1.

    Returns
    -------
    (F_delta, airspeed_zero) : (ndarray, bool)
        At zero airspeed only -m xdddot_r is returned and the flag is set.
    """
    body, model = ctrl.body_hat, ctrl.aero_hat
    jerk_term = -body.m * ref.xdddot_r
    f = _forces(ctrl, ref, xdot, theta)
    tf = f.tf
    if tf.alpha is None:
        return jerk_term, True
    T = f.F_bar[0] if thrust is None else thrust
    xddot = (f.F - T * f.R[:, 0]) / body.m + ref.xddot_r
    va = np.asarray(xdot, dtype=float) - ref.xdot_w
    aa = xddot - ref.xddot_w
    speed = float(np.linalg.norm(va))
    M = tf.c_bar_L * S - tf.c_bar_D * np.eye(2)
    d_va = body.k_a * M @ (np.outer(va, va) / speed + speed * np.eye(2))
    cbl1, cbd1 = transformed_coeff_derivs(model, tf.alpha, body.delta, ctrl.lambda_rule)
    d_alpha = body.k_a * speed * (cbl1 * (S @ va) - cbd1 * va)
    gamma_dot = float(va @ S.T @ aa) / speed**2
    return d_va @ aa - d_alpha * gamma_dot + jerk_term, False


def gain_k(ctrl, ref, xdot, theta):
    """Nonlinear gain
    k = (1 + k_a |v|^2 Fbar_2 (cos(alpha+delta) cbar_D' - sin(alpha+delta) cbar_L') / |F_p|^2)^-1.
    """
    f = _forces(ctrl, ref, xdot, theta)
    if f.Fp_norm <= SINGULAR_RTOL * ctrl.body_hat.weight:
        raise SingularityError("|F_p| vanishes: gain k undefined")
    return _gain_k(ctrl, ref, xdot, f)


def _gain_k(ctrl, ref, xdot, f):
    tf = f.tf
    if tf.alpha is None:
        return 1.0
    body = ctrl.body_hat
    va = np.asarray(xdot, dtype=float) - ref.xdot_w
    cbl1, cbd1 = transformed_coeff_derivs(ctrl.aero_hat, tf.alpha, body.delta, ctrl.lambda_rule)
    phi = tf.alpha + body.delta
    num = body.k_a * float(va @ va) * f.F_bar[1] * (math.cos(phi) * cbd1 - math.sin(phi) * cbl1)
    den = 1.0 + num / f.Fp_norm**2
    if den == 0.0:
        raise SingularityError("gain k denominator vanishes")
    return 1.0 / den


def mu_tau(tau, s):
    """C^1 ramp from 0 to 1: sin(pi s^2 / (2 tau^2)) for s <= tau, else 1."""
    if s <= tau:
        return math.sin(math.pi * s * s / (2.0 * tau * tau))
    return 1.0


def mu_over_s2(tau, s):
    """mu_tau(s) / s^2 with its limit pi / (2 tau^2) at s = 0."""
    if s > tau:
        return 1.0 / (s * s)
    # sin(x) / x form avoids dividing by an underflowing s^2
    scale = math.pi / (2.0 * tau * tau)
    x = scale * s * s
    return scale if x == 0.0 else scale * math.sin(x) / x


def _thrust(f, gains):
    T = f.F_bar[0] + gains.k1 * f.Fp_norm * f.v_tilde[0]
    return max(T, 0.0) if gains.clamp_thrust else T


def _F_delta(ctrl, gains, ref, xdot, theta, T):
    if not gains.use_feedforward:
        return np.zeros(2), False
    return feedforward_F_delta(ctrl, ref, xdot, theta, thrust=T)


def _diag(f, **extra):
    d = {
        "F_bar": f.F_bar,
        "F_p_bar": f.Fp_bar,
        "Fp_norm": f.Fp_norm,
        "v_tilde": f.v_tilde,
        "tilde_theta": tilde_theta(f.Fp_bar),
    }
    d.update(extra)
    return d


def control_ideal(ctrl, gains, ref, xdot, theta):
    """T = Fbar_1 + k1 |F_p| vtilde_1,
    omega = k [k2 |F_p| vtilde_2 + k3 |F_p| Fbar_p2 / (|F_p| + Fbar_p1)^2
               - F_p^T S F_delta / |F_p|^2].

    Raises
    ------
    SingularityError
        When |F_p| or |F_p| + Fbar_p1 vanishes (bad velocity or thrust
        axis opposite to F_p).
    """
    f = _forces(ctrl, ref, xdot, theta)
    eps = SINGULAR_RTOL * ctrl.body_hat.weight
    if f.Fp_norm <= eps:
        raise SingularityError("denominator |F_p| vanishes")
    s1 = f.Fp_norm + f.Fp_bar[0]
    if s1 <= eps:
        raise SingularityError("denominator |F_p| + Fbar_p1 vanishes (thrust axis opposite to F_p)")
    k = _gain_k(ctrl, ref, xdot, f) if gains.use_nonlinear_k else 1.0
    T = _thrust(f, gains)
    F_delta, no_air = _F_delta(ctrl, gains, ref, xdot, theta, T)
    omega = k * (
        gains.k2 * f.Fp_norm * f.v_tilde[1]
        + gains.k3 * f.Fp_norm * f.Fp_bar[1] / s1**2
        - float(f.Fp @ S @ F_delta) / f.Fp_norm**2
    )
    return ControlOutput(
        T, omega, _diag(f, k_value=k, mu1=1.0, mu2=1.0, F_delta=F_delta, airspeed_zero=no_air)
    )


def control_robust(ctrl, gains, ref, xdot, theta):
    """Ideal law with k = 1 and the two singular fractions weighted by
    mu_tau(|F_p| + Fbar_p1) and mu_tau(|F_p|); defined for every state."""
    f = _forces(ctrl, ref, xdot, theta)
    tau = gains.tau
    s1 = max(f.Fp_norm + f.Fp_bar[0], 0.0)
    s2 = f.Fp_norm
    T = _thrust(f, gains)
    F_delta, no_air = _F_delta(ctrl, gains, ref, xdot, theta, T)
    omega = (
        gains.k2 * f.Fp_norm * f.v_tilde[1]
        + gains.k3 * f.Fp_norm * f.Fp_bar[1] * mu_over_s2(tau, s1)
        - float(f.Fp @ S @ F_delta) * mu_over_s2(tau, s2)
    )
    return ControlOutput(
        T,
        omega,
        _diag(f, k_value=1.0, mu1=mu_tau(tau, s1), mu2=mu_tau(tau, s2), F_delta=F_delta, airspeed_zero=no_air),
    )


CONTROL_LAWS = {"ideal": control_ideal, "robust": control_robust}


@dataclass(frozen=True)
class LyapunovDiag:
    V: float
    V_dot_predicted: float
    tilde_theta: float


def lyapunov_value(mass, gains, v_tilde, Fp_bar):
    """V from the body-frame velocity error and transformed force; NaN
    where |F_p| = 0."""
    norm = math.hypot(Fp_bar[0], Fp_bar[1])
    if norm == 0.0:
        return math.nan
    return 0.5 * mass * float(v_tilde @ v_tilde) + (1.0 - Fp_bar[0] / norm) / gains.k2


def lyapunov_diag(ctrl, gains, ref, xdot, theta):
    """V = (m/2)|vtilde|^2 + (1 - Fbar_p1/|F_p|)/k2 and its decrease rate
    -k1 |F_p| vtilde_1^2 - (k3/k2) Fbar_p2^2 / (|F_p| + Fbar_p1)^2 predicted
    under the ideal law with exact feedforward and matched models."""
    f = _forces(ctrl, ref, xdot, theta)
    if f.Fp_norm <= SINGULAR_RTOL * ctrl.body_hat.weight:
        raise SingularityError("Lyapunov function undefined at |F_p| = 0")
    V = lyapunov_value(ctrl.body_hat.m, gains, f.v_tilde, f.Fp_bar)
    s1 = f.Fp_norm + f.Fp_bar[0]
    if s1 <= 0.0:
        angle_term = math.inf
    else:
        angle_term = f.Fp_bar[1] ** 2 / s1**2
    V_dot = -gains.k1 * f.Fp_norm * f.v_tilde[0] ** 2 - gains.k3 / gains.k2 * angle_term
    return LyapunovDiag(V, V_dot, tilde_theta(f.Fp_bar))
