"""Steady aerodynamic coefficient models and the planar aerodynamic force.

Coefficients are functions of the angle of attack only (constant Reynolds
and Mach numbers). Every model exposes ``coeffs(alpha) -> (cl, cd)`` and
``derivs(alpha) -> (cl', cd', cl'', cd'')``; both accept scalars or arrays
and wrap the angle to (-pi, pi] first, so evaluation is 2*pi periodic.

Angles are radians everywhere except in the tabulated CSV format, which
stores ``alpha_deg``.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from aeroeq._geometry import S, wrap_angle

DEFAULT_CHECK_GRID = 2048


class ModelError(ValueError):
    """Invalid aerodynamic model or body parameters."""


class TableLoadError(ModelError):
    """Malformed tabulated coefficient file."""


@dataclass(frozen=True)
class BodyParams:
    """Rigid-body constants.

    Parameters
    ----------
    m : float [kg]
    g : float [m/s^2]
    k_a : float [kg/m]
        Aerodynamic constant rho * Sigma / 2.
    delta : float [rad]
        Angle between the zero-lift direction and the thrust axis.
    """

    m: float
    g: float = 9.81
    k_a: float = 0.646
    delta: float = 0.0

    def __post_init__(self):
        if not self.m > 0:
            raise ModelError(f"mass must be positive, got {self.m}")
        if not self.g > 0:
            raise ModelError(f"gravity must be positive, got {self.g}")
        if not self.k_a >= 0:
            raise ModelError(f"k_a must be non-negative, got {self.k_a}")
        if not -math.pi < self.delta <= math.pi:
            raise ModelError(f"delta must lie in (-pi, pi], got {self.delta}")

    @classmethod
    def from_air(cls, m, rho, area, g=9.81, delta=0.0):
        return cls(m=m, g=g, k_a=0.5 * rho * area, delta=delta)

    @property
    def weight(self):
        return self.m * self.g


def _wrap(alpha):
    return wrap_angle(alpha)


@dataclass(frozen=True)
class AeroModel:
    """Base class: subclasses implement ``_coeffs`` and ``_derivs`` on
    wrapped angles."""

    def coeffs(self, alpha):
        return self._coeffs(_wrap(alpha))

    def derivs(self, alpha):
        return self._derivs(_wrap(alpha))

    def _coeffs(self, a):
        raise NotImplementedError

    def _derivs(self, a):
        raise NotImplementedError

    @property
    def name(self):
        return type(self).__name__


@dataclass(frozen=True)
class FlatPlate(AeroModel):
    """cl = c1 sin(2a), cd = c0 + 2 c1 sin^2(a)."""

    c0: float
    c1: float
    metadata: str = field(default="", kw_only=True, compare=False)

    def _coeffs(self, a):
        return self.c1 * np.sin(2 * a), self.c0 + 2 * self.c1 * np.sin(a) ** 2

    def _derivs(self, a):
        s2, c2 = np.sin(2 * a), np.cos(2 * a)
        return (
            2 * self.c1 * c2,
            2 * self.c1 * s2,
            -4 * self.c1 * s2,
            4 * self.c1 * c2,
        )


def _ratio_derivs(n, n1, n2, d, d1, d2):
    # q = n/d and its first two derivatives from q d = n
    q = n / d
    q1 = (n1 - q * d1) / d
    q2 = (n2 - 2 * q1 * d1 - q * d2) / d
    return q, q1, q2


@dataclass(frozen=True)
class SmallAlpha(AeroModel):
    """Rational model whose Taylor expansion at zero is cl ~ c2 a,
    cd ~ c0 + c3 a^2.

    cl = 0.5 c2^2 sin(2a) / D,  cd = c0 + c2 c3 sin^2(a) / D,
    with D = (c2 - c3) cos^2(a) + c3.
    """

    c0: float
    c2: float
    c3: float
    metadata: str = field(default="", kw_only=True, compare=False)

    def __post_init__(self):
        if self.c2 <= 0 or self.c3 <= 0:
            raise ModelError("SmallAlpha requires c2 > 0 and c3 > 0")

    def _parts(self, a):
        c2, c3 = self.c2, self.c3
        sa2, ca2 = np.sin(2 * a), np.cos(2 * a)
        d = (c2 - c3) * np.cos(a) ** 2 + c3
        d1 = -(c2 - c3) * sa2
        d2 = -2 * (c2 - c3) * ca2
        lift = _ratio_derivs(0.5 * c2**2 * sa2, c2**2 * ca2, -2 * c2**2 * sa2, d, d1, d2)
        drag = _ratio_derivs(
            c2 * c3 * np.sin(a) ** 2, c2 * c3 * sa2, 2 * c2 * c3 * ca2, d, d1, d2
        )
        return lift, drag

    def _coeffs(self, a):
        (cl, _, _), (q, _, _) = self._parts(a)
        return cl, self.c0 + q

    def _derivs(self, a):
        (_, cl1, cl2), (_, cd1, cd2) = self._parts(a)
        return cl1, cd1, cl2, cd2


def sigma(alpha_bar, k_bar, alpha):
    """Smooth rectangular window: ~1 for |alpha| < alpha_bar, ~0 beyond.

    sigma = (1 + tanh(k alpha_bar^2 - k alpha^2)) / (1 + tanh(k alpha_bar^2))
    """
    num = 1.0 + np.tanh(k_bar * alpha_bar**2 - k_bar * np.asarray(alpha, dtype=float) ** 2)
    out = num / (1.0 + math.tanh(k_bar * alpha_bar**2))
    return float(out) if np.ndim(out) == 0 else out


def _sigma_derivs(alpha_bar, k_bar, a):
    norm = 1.0 + math.tanh(k_bar * alpha_bar**2)
    th = np.tanh(k_bar * (alpha_bar**2 - a**2))
    sech2 = 1.0 - th**2
    u1 = -2.0 * k_bar * a
    s = (1.0 + th) / norm
    s1 = sech2 * u1 / norm
    s2 = (-2.0 * th * sech2 * u1**2 - 2.0 * k_bar * sech2) / norm
    return s, s1, s2


@dataclass(frozen=True)
class Blended(AeroModel):
    """SmallAlpha near zero incidence, FlatPlate beyond stall, joined by
    ``sigma`` windows of sharpness kL (lift) and kD (drag)."""

    c0: float
    c1: float
    c2: float
    c3: float
    alpha_bar: float
    kL: float
    kD: float
    metadata: str = field(default="", kw_only=True, compare=False)

    def __post_init__(self):
        if self.kL <= 0 or self.kD <= 0:
            raise ModelError("sigma sharpness kL and kD must be positive")
        # validates c2, c3
        self.small

    @property
    def small(self):
        return SmallAlpha(self.c0, self.c2, self.c3)

    @property
    def flat(self):
        return FlatPlate(self.c0, self.c1)

    def _coeffs(self, a):
        cls, cds = self.small._coeffs(a)
        cll, cdl = self.flat._coeffs(a)
        sl = sigma(self.alpha_bar, self.kL, a)
        sd = sigma(self.alpha_bar, self.kD, a)
        return cll + sl * (cls - cll), cdl + sd * (cds - cdl)

    def _derivs(self, a):
        cls, cds = self.small._coeffs(a)
        cll, cdl = self.flat._coeffs(a)
        ls1, ds1, ls2, ds2 = self.small._derivs(a)
        ll1, dl1, ll2, dl2 = self.flat._derivs(a)

        def blend(s, s1, s2, small, small1, small2, large, large1, large2):
            diff, diff1, diff2 = small - large, small1 - large1, small2 - large2
            return (
                large1 + s1 * diff + s * diff1,
                large2 + s2 * diff + 2 * s1 * diff1 + s * diff2,
            )

        cl1, cl2 = blend(*_sigma_derivs(self.alpha_bar, self.kL, a), cls, ls1, ls2, cll, ll1, ll2)
        cd1, cd2 = blend(*_sigma_derivs(self.alpha_bar, self.kD, a), cds, ds1, ds2, cdl, dl1, dl2)
        return cl1, cd1, cl2, cd2


def _like(value, a):
    # constant callables must still broadcast against array input
    if np.ndim(a) == 0:
        return float(value)
    return np.broadcast_to(np.asarray(value, dtype=float), np.shape(a)).copy()


@dataclass(frozen=True)
class Custom(AeroModel):
    """User-supplied coefficient pair.

    Derivative callables are optional; missing ones fall back to central
    differences of the coefficient functions.
    """

    cl: Callable
    cd: Callable
    dcl: Optional[Callable] = None
    dcd: Optional[Callable] = None
    d2cl: Optional[Callable] = None
    d2cd: Optional[Callable] = None
    metadata: str = field(default="", kw_only=True, compare=False)

    def _coeffs(self, a):
        return _like(self.cl(a), a), _like(self.cd(a), a)

    def _derivs(self, a):
        out = self._raw_derivs(a)
        return tuple(_like(d, a) for d in out)

    def _raw_derivs(self, a):
        h1, h2 = 1e-6, 1e-4

        def d1(f, df):
            if df is not None:
                return df(a)
            return (f(a + h1) - f(a - h1)) / (2 * h1)

        def d2(f, ddf):
            if ddf is not None:
                return ddf(a)
            return (f(a + h2) - 2 * f(a) + f(a - h2)) / h2**2

        return d1(self.cl, self.dcl), d1(self.cd, self.dcd), d2(self.cl, self.d2cl), d2(self.cd, self.d2cd)


def passivity_counterexample(c0=0.1):
    """cl = sin(a), cd = c0 + 1 - cos(a): passive (cd > 0 for c0 > 0) and
    symmetric, yet with a thrust normal to the zero-lift line some reference
    states admit no equilibrium orientation."""
    return Custom(
        cl=np.sin,
        cd=lambda a: c0 + 1.0 - np.cos(a),
        dcl=np.cos,
        dcd=np.sin,
        d2cl=lambda a: -np.sin(a),
        d2cd=np.cos,
        metadata=f"passivity counterexample, c0={c0}",
    )


def _periodic_pchip(x, y, pad=3):
    period = 2 * np.pi
    xe = np.concatenate([x[-pad:] - period, x, x[:pad] + period])
    ye = np.concatenate([y[-pad:], y, y[:pad]])
    return PchipInterpolator(xe, ye, extrapolate=False)


@dataclass(frozen=True, eq=False)
class Tabulated(AeroModel):
    """Coefficients sampled on one period of angle of attack.

    Each coefficient gets a shape-preserving (PCHIP) cubic with periodic
    closure; first and second derivatives come from the same piecewise
    polynomial, so the second derivative jumps at knots.

    Parameters
    ----------
    alpha : array of float [rad]
        Strictly increasing, inside [-pi, pi]. A closing sample at
        ``alpha[0] + 2 pi`` is accepted when it repeats the first row.
    cl, cd : array of float
    """

    alpha: np.ndarray
    cl: np.ndarray
    cd: np.ndarray
    metadata: str = field(default="", kw_only=True)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        cl = np.asarray(self.cl, dtype=float)
        cd = np.asarray(self.cd, dtype=float)
        if not (alpha.ndim == cl.ndim == cd.ndim == 1 and len(alpha) == len(cl) == len(cd)):
            raise ModelError("alpha, cl and cd must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(cl)) and np.all(np.isfinite(cd))):
            raise ModelError("tabulated samples must be finite")
        if np.any(np.diff(alpha) <= 0):
            bad = int(np.argmax(np.diff(alpha) <= 0)) + 1
            raise ModelError(f"alpha must be strictly increasing (sample {bad})")
        eps = 1e-9
        if alpha[0] < -np.pi - eps or alpha[-1] > np.pi + eps:
            raise ModelError("alpha samples must lie within [-pi, pi]")
        if abs(alpha[-1] - alpha[0] - 2 * np.pi) < eps:
            scale = 1.0 + max(np.max(np.abs(cl)), np.max(np.abs(cd)))
            if abs(cl[-1] - cl[0]) > 1e-6 * scale or abs(cd[-1] - cd[0]) > 1e-6 * scale:
                raise ModelError("first and last samples disagree under 2*pi closure")
            alpha, cl, cd = alpha[:-1], cl[:-1], cd[:-1]
        if len(alpha) < 4:
            raise ModelError(f"tabulated model needs at least 4 samples, got {len(alpha)}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "cl", cl)
        object.__setattr__(self, "cd", cd)
        lift = _periodic_pchip(alpha, cl)
        drag = _periodic_pchip(alpha, cd)
        object.__setattr__(
            self, "_splines", (lift, drag, lift.derivative(), drag.derivative(), lift.derivative(2), drag.derivative(2))
        )

    def _shift(self, a):
        # into [alpha[0], alpha[0] + 2 pi)
        return self.alpha[0] + np.mod(np.asarray(a) - self.alpha[0], 2 * np.pi)

    def _eval(self, idx, a):
        out = self._splines[idx](self._shift(a))
        return float(out) if np.ndim(out) == 0 else out

    def _coeffs(self, a):
        return self._eval(0, a), self._eval(1, a)

    def _derivs(self, a):
        return tuple(self._eval(i, a) for i in (2, 3, 4, 5))

    @classmethod
    def from_model(cls, model, alpha_deg):
        """Sample another model on a degree grid (useful for round trips)."""
        alpha = np.deg2rad(np.asarray(alpha_deg, dtype=float))
        cl, cd = model.coeffs(alpha)
        return cls(alpha, cl, cd, metadata=f"sampled from {model.name}")


def eval_coeffs(model, alpha):
    return model.coeffs(alpha)


def eval_coeff_derivs(model, alpha):
    return model.derivs(alpha)


def load_tabulated(path, metadata=None):
    """Read a ``alpha_deg,cl,cd`` CSV into a :class:`Tabulated` model.

    Lines starting with ``#`` are comments. Errors name the file line.
    """
    path = Path(path)
    rows = []
    header_seen = False
    with path.open(newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cells = [c.strip() for c in next(csv.reader([line]))]
            if not header_seen:
                if [c.lower() for c in cells] != ["alpha_deg", "cl", "cd"]:
                    raise TableLoadError(f"{path}:{lineno}: expected header 'alpha_deg,cl,cd', got {line!r}")
                header_seen = True
                continue
            if len(cells) != 3:
                raise TableLoadError(f"{path}:{lineno}: expected 3 columns, got {len(cells)}")
            try:
                values = [float(c) for c in cells]
            except ValueError:
                raise TableLoadError(f"{path}:{lineno}: non-numeric entry in {line!r}") from None
            if not all(math.isfinite(v) for v in values):
                raise TableLoadError(f"{path}:{lineno}: NaN or infinite entry")
            if rows and values[0] <= rows[-1][1][0]:
                raise TableLoadError(
                    f"{path}:{lineno}: alpha_deg {values[0]} does not increase (previous {rows[-1][1][0]})"
                )
            rows.append((lineno, values))
    if not header_seen:
        raise TableLoadError(f"{path}: missing header")
    data = np.array([v for _, v in rows], dtype=float).reshape(-1, 3)
    if len(data) and (data[0, 0] < -180.0 - 1e-9 or data[-1, 0] > 180.0 + 1e-9):
        raise TableLoadError(f"{path}: alpha_deg must lie within [-180, 180]")
    try:
        return Tabulated(
            np.deg2rad(data[:, 0]), data[:, 1], data[:, 2], metadata=metadata or f"table {path.name}"
        )
    except ModelError as exc:
        raise TableLoadError(f"{path}: {exc}") from None


def save_tabulated(path, alpha_deg, cl, cd, comment=None):
    with Path(path).open("w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["alpha_deg", "cl", "cd"])
        for row in zip(alpha_deg, cl, cd):
            writer.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class AirState:
    """Air-relative velocity with its course angle and angle of attack.

    ``alpha`` and ``gamma`` are None when the airspeed is zero.
    """

    xdot_a: np.ndarray
    speed: float
    gamma: Optional[float]
    alpha: Optional[float]

    @property
    def defined(self):
        return self.alpha is not None


def angle_of_attack(xdot_a, theta, delta):
    """alpha = theta - gamma + pi - delta, gamma = atan2(v2, v1)."""
    v = np.asarray(xdot_a, dtype=float)
    speed = math.hypot(v[0], v[1])
    if speed == 0.0:
        return AirState(v, 0.0, None, None)
    gamma = math.atan2(v[1], v[0])
    return AirState(v, speed, gamma, wrap_angle(theta - gamma + math.pi - delta))


def aero_force(model, body, xdot_a, theta):
    """Inertial-frame aerodynamic force k_a |v| (cl S - cd I) v [N]."""
    air = angle_of_attack(xdot_a, theta, body.delta)
    if not air.defined:
        return np.zeros(2)
    cl, cd = model.coeffs(air.alpha)
    v = air.xdot_a
    return body.k_a * air.speed * (cl * (S @ v) - cd * v)


def aero_force_many(model, body, xdot_a, thetas):
    """Vectorised ``aero_force`` over an array of orientations; returns
    shape (2, n)."""
    v = np.asarray(xdot_a, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    speed = math.hypot(v[0], v[1])
    if speed == 0.0:
        return np.zeros((2, thetas.size))
    gamma = math.atan2(v[1], v[0])
    cl, cd = model.coeffs(thetas - gamma + math.pi - body.delta)
    sv = S @ v
    return body.k_a * speed * (np.outer(sv, cl) - np.outer(v, cd))


def _grid(n):
    return -np.pi + 2 * np.pi * np.arange(n) / n


@dataclass(frozen=True)
class SymmetryReport:
    is_even_drag: bool
    is_odd_lift: bool
    max_violation: float
    drag_violation: float
    lift_violation: float
    cl_at_zero: float
    cl_at_pi: float
    grid_size: int

    def to_dict(self):
        return dict(self.__dict__)


def check_symmetry(model, n=DEFAULT_CHECK_GRID, tol=1e-9):
    """Sampled check of cd(a) = cd(-a), cl(a) = -cl(-a), cl(0) = cl(pi) = 0."""
    a = _grid(n)
    cl, cd = model.coeffs(a)
    clm, cdm = model.coeffs(-a)
    drag_v = float(np.max(np.abs(cd - cdm)))
    lift_v = float(np.max(np.abs(cl + clm)))
    cl0 = abs(float(model.coeffs(0.0)[0]))
    clpi = abs(float(model.coeffs(np.pi)[0]))
    return SymmetryReport(
        is_even_drag=drag_v <= tol,
        is_odd_lift=max(lift_v, cl0, clpi) <= tol,
        max_violation=max(drag_v, lift_v),
        drag_violation=drag_v,
        lift_violation=lift_v,
        cl_at_zero=cl0,
        cl_at_pi=clpi,
        grid_size=n,
    )


@dataclass(frozen=True)
class BisymmetryReport:
    is_pi_periodic: bool
    max_violation: float
    grid_size: int

    def to_dict(self):
        return dict(self.__dict__)


def check_bisymmetry(model, n=DEFAULT_CHECK_GRID, tol=1e-9):
    a = _grid(n)
    cl, cd = model.coeffs(a)
    clp, cdp = model.coeffs(a + np.pi)
    v = float(max(np.max(np.abs(cl - clp)), np.max(np.abs(cd - cdp))))
    return BisymmetryReport(v <= tol, v, n)


@dataclass(frozen=True)
class PassivityReport:
    is_passive: bool
    min_cD: float
    grid_size: int

    def to_dict(self):
        return dict(self.__dict__)


def check_passivity(model, n=DEFAULT_CHECK_GRID):
    """v_a . F_a = -k_a |v_a|^3 cd, so passivity is exactly min cd >= 0."""
    _, cd = model.coeffs(_grid(n))
    min_cd = float(np.min(cd))
    return PassivityReport(min_cd >= 0.0, min_cd, n)
