"""Spherical equivalency: a thrust change of variable that removes (globally
or locally) the orientation dependence of the apparent external force.

With lambda(alpha) the aerodynamic force splits as

    F_a = k_a |v| (cbar_L S - cbar_D I) v - lambda k_a |v|^2 R(theta) e1,
    cbar_L = cl - lambda sin(alpha + delta),
    cbar_D = cd + lambda cos(alpha + delta),

so that F - T R e1 = F_p - T_p R e1 with T_p = T + k_a lambda |v|^2.
"""

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from aeroeq._geometry import S, angle_dist, rot
from aeroeq.aero import DEFAULT_CHECK_GRID, ModelError, _grid, angle_of_attack
from aeroeq.equilibrium import f_t, gravity_inertia_force, solve_equilibria

LAMBDA_RULES = ("general", "special")
SPECIAL_SIN_EPS = 1e-6
SPECIAL_DERIV_SIN_EPS = 1e-4
FLATNESS_STEP = 1e-6
VELOCITY_STEP = 1e-6
THETA_DOT_STEP = 1e-4
RANK_RTOL = 1e-8


class SingularEquilibriumError(ValueError):
    """|F_p| vanishes at the equilibrium, so the local results do not apply."""


def lambda_general(model, alpha, delta=0.0):
    """lambda = cl' cos(alpha + delta) + cd' sin(alpha + delta)."""
    cl1, cd1, _, _ = model.derivs(alpha)
    phi = np.asarray(alpha, dtype=float) + delta
    out = cl1 * np.cos(phi) + cd1 * np.sin(phi)
    return float(out) if np.ndim(out) == 0 else out


def lambda_general_deriv(model, alpha, delta=0.0):
    """Total alpha-derivative of :func:`lambda_general`."""
    cl1, cd1, cl2, cd2 = model.derivs(alpha)
    phi = np.asarray(alpha, dtype=float) + delta
    c, s = np.cos(phi), np.sin(phi)
    out = cl2 * c - cl1 * s + cd2 * s + cd1 * c
    return float(out) if np.ndim(out) == 0 else out


def _special_scalar(model, a):
    s, c = math.sin(a), math.cos(a)
    if abs(s) < SPECIAL_SIN_EPS:
        # removable singularity for models with cl(0) = cl(pi) = 0
        return float(model.derivs(a)[0]) / c
    return float(model.coeffs(a)[0]) / s


def lambda_special(model, alpha):
    """lambda = cl / sin(alpha), the choice that zeroes cbar_L (delta = 0).

    Where sin(alpha) vanishes the limit cl'(alpha) / cos(alpha) is used.
    """
    if np.ndim(alpha) == 0:
        return _special_scalar(model, float(alpha))
    return np.array([_special_scalar(model, a) for a in np.ravel(alpha)]).reshape(np.shape(alpha))


def lambda_special_deriv(model, alpha):
    a = float(alpha)
    s, c = math.sin(a), math.cos(a)
    cl, _ = model.coeffs(a)
    cl1, _, cl2, _ = model.derivs(a)
    if abs(s) < SPECIAL_DERIV_SIN_EPS:
        return float(cl2) / (2.0 * c)
    return (float(cl1) * s - float(cl) * c) / s**2


def _check_rule(rule, delta):
    if rule not in LAMBDA_RULES:
        raise ModelError(f"lambda_rule must be one of {LAMBDA_RULES}, got {rule!r}")
    if rule == "special" and delta != 0.0:
        raise ModelError("the special lambda rule is defined for delta = 0 only")


def lambda_value(model, alpha, delta=0.0, rule="general"):
    _check_rule(rule, delta)
    return lambda_general(model, alpha, delta) if rule == "general" else lambda_special(model, alpha)


def lambda_deriv(model, alpha, delta=0.0, rule="general"):
    _check_rule(rule, delta)
    if rule == "general":
        return lambda_general_deriv(model, alpha, delta)
    return lambda_special_deriv(model, alpha)


def transformed_coeffs(model, alpha, delta, lam):
    """(cbar_L, cbar_D) for a given lambda (scalar or array)."""
    cl, cd = model.coeffs(alpha)
    phi = np.asarray(alpha, dtype=float) + delta
    cbl = cl - lam * np.sin(phi)
    cbd = cd + lam * np.cos(phi)
    if np.ndim(cbl) == 0:
        return float(cbl), float(cbd)
    return cbl, cbd


def transformed_coeff_derivs(model, alpha, delta=0.0, rule="general"):
    """(cbar_L', cbar_D') with lambda following ``rule`` as a function of alpha."""
    lam = lambda_value(model, alpha, delta, rule)
    lam1 = lambda_deriv(model, alpha, delta, rule)
    cl1, cd1, _, _ = model.derivs(alpha)
    phi = float(alpha) + delta
    s, c = math.sin(phi), math.cos(phi)
    return float(cl1 - lam1 * s - lam * c), float(cd1 + lam1 * c - lam * s)


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    max_residual: float
    grid_size: int
    holds: bool
    c_bar_D_value: Optional[float] = None

    def to_dict(self):
        d = {
            "condition": self.condition,
            "max_residual": self.max_residual,
            "grid_size": self.grid_size,
            "holds": self.holds,
        }
        if self.c_bar_D_value is not None:
            d["c_bar_D_value"] = self.c_bar_D_value
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def max_deviation(self):
        return self.max_residual


def global_condition_residual(model, alpha, delta=0.0):
    """(cd'' - 2 cl') sin(alpha + delta) + (cl'' + 2 cd') cos(alpha + delta)."""
    cl1, cd1, cl2, cd2 = model.derivs(alpha)
    phi = np.asarray(alpha, dtype=float) + delta
    return (cd2 - 2 * cl1) * np.sin(phi) + (cl2 + 2 * cd1) * np.cos(phi)


def check_global_condition(model, delta=0.0, n=DEFAULT_CHECK_GRID):
    """Whether the transformed force is orientation independent for every
    air velocity, sampled on ``n`` angles of attack."""
    a = _grid(n)
    res = np.abs(global_condition_residual(model, a, delta))
    _, _, cl2, cd2 = model.derivs(a)
    scale = 1.0 + float(max(np.max(np.abs(cl2)), np.max(np.abs(cd2))))
    worst = float(np.max(res))
    return ConditionReport("global", worst, n, worst <= 1e-8 * scale)


def special_condition_profile(model, n=DEFAULT_CHECK_GRID):
    """cd + cl cot(alpha) on the grid, excluding |sin(alpha)| < 1e-6."""
    a = _grid(n)
    a = a[np.abs(np.sin(a)) >= 1e-6]
    cl, cd = model.coeffs(a)
    return a, cd + cl / np.tan(a)


def check_special_condition(model, n=DEFAULT_CHECK_GRID):
    """Whether cd + cl cot(alpha) is constant (so lambda = cl / sin(alpha)
    gives a constant cbar_D and zero cbar_L)."""
    _, prof = special_condition_profile(model, n)
    mean = float(np.mean(prof))
    dev = float(np.max(np.abs(prof - mean)))
    return ConditionReport("special", dev, n, dev <= 1e-8 * (1.0 + abs(mean)), c_bar_D_value=mean)


def lambda_rule_gap(model, n=DEFAULT_CHECK_GRID):
    """Largest |lambda_special - lambda_general(delta=0)| over the grid."""
    a = _grid(n)
    return float(np.max(np.abs(lambda_special(model, a) - lambda_general(model, a, 0.0))))


@dataclass(frozen=True, eq=False)
class TransformedForce:
    F_p: np.ndarray
    T_p: float
    lambda_: float
    c_bar_L: Optional[float]
    c_bar_D: Optional[float]
    thrust_offset: float
    alpha: Optional[float] = None

    @property
    def norm(self):
        return float(np.linalg.norm(self.F_p))


def transformed_force(model, body, ref, xdot, theta, lambda_rule="general", thrust=0.0):
    """F_p = m g e1 + k_a |v| (cbar_L S - cbar_D I) v - m xddot_r and
    T_p = thrust + k_a lambda |v|^2, with v = xdot - xdot_w."""
    _check_rule(lambda_rule, body.delta)
    air = angle_of_attack(np.asarray(xdot, dtype=float) - ref.xdot_w, theta, body.delta)
    base = gravity_inertia_force(body, ref)
    if not air.defined:
        return TransformedForce(base, float(thrust), 0.0, None, None, 0.0, None)
    lam = lambda_value(model, air.alpha, body.delta, lambda_rule)
    cbl, cbd = transformed_coeffs(model, air.alpha, body.delta, lam)
    v = air.xdot_a
    fp = body.k_a * air.speed * (cbl * (S @ v) - cbd * v)
    offset = body.k_a * lam * air.speed**2
    return TransformedForce(base + fp, float(thrust) + offset, lam, cbl, cbd, offset, air.alpha)


def force_variation(model, body, ref, xdot, n=360, lambda_rule="general"):
    """max_theta |F_p(theta) - F_p(0)| / max(|F_p(0)|, m g) over ``n`` orientations."""
    thetas = -np.pi + 2 * np.pi * np.arange(n) / n
    ref_fp = transformed_force(model, body, ref, xdot, 0.0, lambda_rule).F_p
    worst = max(
        np.linalg.norm(transformed_force(model, body, ref, xdot, th, lambda_rule).F_p - ref_fp)
        for th in thetas
    )
    return float(worst) / max(float(np.linalg.norm(ref_fp)), body.weight)


def theta_e_closed_form(model, body, ref, check=True):
    """Equilibrium orientation aligned with the (orientation independent)
    transformed force: atan2(F_p2, F_p1)."""
    if check:
        report = check_global_condition(model, body.delta)
        if not report.holds:
            raise ModelError(
                f"closed-form equilibrium needs the global condition (residual {report.max_residual:.3e})"
            )
    tf = transformed_force(model, body, ref, ref.xdot_r, 0.0)
    if check and tf.c_bar_D is not None and not tf.c_bar_D > 0:
        raise ModelError(f"closed-form equilibrium needs cbar_D > 0, got {tf.c_bar_D:.3e}")
    if tf.norm <= 1e-12 * body.weight:
        raise SingularEquilibriumError("transformed force vanishes: every orientation is an equilibrium")
    return math.atan2(tf.F_p[1], tf.F_p[0])


def _unit_fp(model, body, ref, theta, rule):
    fp = transformed_force(model, body, ref, ref.xdot_r, theta, rule).F_p
    return fp / np.linalg.norm(fp)


def direction_flatness(model, body, ref, theta_e, lambda_rule="general", h=FLATNESS_STEP):
    """Norm of the orientation derivative of F_p / |F_p| at the reference
    velocity (central difference)."""
    up = _unit_fp(model, body, ref, theta_e + h, lambda_rule)
    dn = _unit_fp(model, body, ref, theta_e - h, lambda_rule)
    return float(np.linalg.norm((up - dn) / (2 * h)))


def equilibrium_slope(model, body, ref, theta_e, h=FLATNESS_STEP):
    """d f_t / d theta at theta_e (central difference)."""
    return (f_t(model, body, ref, theta_e + h) - f_t(model, body, ref, theta_e - h)) / (2 * h)


@dataclass(frozen=True, eq=False)
class Linearization:
    A: np.ndarray
    B: np.ndarray
    B_dot: np.ndarray
    ctrl_matrix: np.ndarray
    rank: int
    singular_values: np.ndarray
    theta_e_dot: float


def numeric_rank(M, rtol=RANK_RTOL):
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0.0:
        return 0, sv
    return int(np.sum(sv > rtol * sv[0])), sv


def _nearest_equilibrium(model, body, ref, theta):
    eq = solve_equilibria(model, body, ref)
    if len(eq) == 0:
        raise SingularEquilibriumError(f"no equilibrium at t={ref.t:.6g}")
    return min(eq.thetas, key=lambda th: angle_dist(th, theta))


def linearize(model, body, ref, theta_e, lambda_rule="general", dt=THETA_DOT_STEP, eta=None):
    """Linearization of the transformed velocity-error dynamics at (0, theta_e)
    with inputs (T_p, omega).

    State (e_v, theta) with m de_v/dt = F_p - T_p R e1 and dtheta/dt = omega.
    Velocity Jacobians are central differences; d(theta_e)/dt comes from the
    equilibria at the reference extrapolated by +-dt.
    """
    eta = 1e-9 * body.weight if eta is None else eta
    m = body.m
    R = rot(theta_e)
    fp = transformed_force(model, body, ref, ref.xdot_r, theta_e, lambda_rule).F_p
    fp_norm = float(np.linalg.norm(fp))
    if fp_norm <= eta:
        raise SingularEquilibriumError(f"|F_p| = {fp_norm:.3e} at the equilibrium")

    J = np.empty((2, 2))
    for j in range(2):
        dv = np.zeros(2)
        dv[j] = VELOCITY_STEP
        hi = transformed_force(model, body, ref, ref.xdot_r + dv, theta_e, lambda_rule).F_p
        lo = transformed_force(model, body, ref, ref.xdot_r - dv, theta_e, lambda_rule).F_p
        J[:, j] = (hi - lo) / (2 * VELOCITY_STEP)

    def fp_norm_at(th):
        return np.linalg.norm(transformed_force(model, body, ref, ref.xdot_r, th, lambda_rule).F_p)

    sign = 1.0 if float(R[:, 0] @ fp) >= 0 else -1.0
    a = sign * (fp_norm_at(theta_e + FLATNESS_STEP) - fp_norm_at(theta_e - FLATNESS_STEP)) / (2 * FLATNESS_STEP)
    b = -sign * fp_norm  # -T_p at the equilibrium

    A = np.zeros((3, 3))
    A[:2, :2] = J / m
    A[:2, 2] = (a * R[:, 0] + b * R[:, 1]) / m
    B = np.zeros((3, 2))
    B[:2, 0] = -R[:, 0] / m
    B[2, 1] = 1.0

    th_hi = _nearest_equilibrium(model, body, ref.shifted(dt), theta_e)
    th_lo = _nearest_equilibrium(model, body, ref.shifted(-dt), theta_e)
    theta_dot = float(np.angle(np.exp(1j * (th_hi - th_lo)))) / (2 * dt)
    B_dot = np.zeros((3, 2))
    B_dot[:2, 0] = -R[:, 1] * theta_dot / m

    ctrl = np.hstack([B, A @ B - B_dot])
    rank, sv = numeric_rank(ctrl)
    return Linearization(A, B, B_dot, ctrl, rank, sv, theta_dot)

