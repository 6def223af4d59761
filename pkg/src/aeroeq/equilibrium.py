"""Equilibrium orientations of the velocity-error dynamics.

At a fixed time the equilibrium orientations are the zeros on the circle of

    f_t(theta) = F(xdot_r, theta, t)^T R(theta) e2,

with F the apparent external force (gravity + aerodynamics - m * reference
acceleration). The thrust that holds an equilibrium is F^T R(theta_e) e1.
Inertial axis e1 points along gravity.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from aeroeq._geometry import E1, angle_dist, rot, wrap_angle
from aeroeq.aero import DEFAULT_CHECK_GRID, aero_force, aero_force_many, angle_of_attack

N_SCAN = 720
ROOT_XTOL = 1e-10
DEGENERACY_RTOL = 1e-9
JUMP_THRESHOLD = math.radians(5.0)


def _vec(v):
    return np.asarray(v, dtype=float).reshape(2)


@dataclass(frozen=True, eq=False)
class ReferenceState:
    """Reference and wind kinematics at one instant (inertial coordinates)."""

    t: float = 0.0
    xdot_r: np.ndarray = field(default_factory=lambda: np.zeros(2))
    xddot_r: np.ndarray = field(default_factory=lambda: np.zeros(2))
    xdddot_r: np.ndarray = field(default_factory=lambda: np.zeros(2))
    xdot_w: np.ndarray = field(default_factory=lambda: np.zeros(2))
    xddot_w: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        for name in ("xdot_r", "xddot_r", "xdddot_r", "xdot_w", "xddot_w"):
            v = _vec(getattr(self, name))
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if not math.isfinite(self.t):
            raise ValueError("t must be finite")

    @property
    def xdot_rw(self):
        return self.xdot_r - self.xdot_w

    def shifted(self, dt):
        """Second-order Taylor extrapolation to t + dt (wind to first order)."""
        return ReferenceState(
            t=self.t + dt,
            xdot_r=self.xdot_r + dt * self.xddot_r + 0.5 * dt**2 * self.xdddot_r,
            xddot_r=self.xddot_r + dt * self.xdddot_r,
            xdddot_r=self.xdddot_r,
            xdot_w=self.xdot_w + dt * self.xddot_w,
            xddot_w=self.xddot_w,
        )


def gravity_inertia_force(body, ref):
    """m g e1 - m xddot_r."""
    return body.m * body.g * E1 - body.m * ref.xddot_r


def apparent_force(model, body, ref, xdot, theta):
    """F = m g e1 + F_a(xdot - xdot_w, theta) - m xddot_r [N]."""
    xdot_a = _vec(xdot) - ref.xdot_w
    return gravity_inertia_force(body, ref) + aero_force(model, body, xdot_a, theta)


def _apparent_force_many(model, body, ref, thetas):
    fa = aero_force_many(model, body, ref.xdot_rw, thetas)
    return gravity_inertia_force(body, ref)[:, None] + fa


def f_t(model, body, ref, theta):
    """Equilibrium function on the circle, evaluated at xdot = xdot_r.

    Accepts a scalar or an array of orientations.
    """
    th = np.asarray(theta, dtype=float)
    F = _apparent_force_many(model, body, ref, th.reshape(-1))
    out = -F[0] * np.sin(th.reshape(-1)) + F[1] * np.cos(th.reshape(-1))
    return float(out[0]) if th.ndim == 0 else out.reshape(th.shape)


def equilibrium_thrust(model, body, ref, theta):
    F = apparent_force(model, body, ref, ref.xdot_r, theta)
    return float(F @ rot(theta)[:, 0])


def force_scale(body, ref):
    """m g + k_a |xdot_r - xdot_w|^2, the natural size of f_t."""
    return body.m * body.g + body.k_a * float(ref.xdot_rw @ ref.xdot_rw)


@dataclass(frozen=True)
class EquilibriumSolution:
    theta_e: float
    alpha_e: Optional[float]
    thrust_e: float
    thrust_nonneg: bool
    residual: float


@dataclass(frozen=True)
class EquilibriumSet:
    solutions: tuple
    degenerate_all_orientations: bool = False

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    @property
    def thetas(self):
        return np.array([s.theta_e for s in self.solutions])

    def in_alpha_range(self, lo, hi):
        """Solutions whose angle of attack lies strictly inside (lo, hi)."""
        return [s for s in self.solutions if s.alpha_e is not None and lo < s.alpha_e < hi]


def _bisect(fun, a, b, fa, xtol):
    while b - a > xtol:
        mid = 0.5 * (a + b)
        fm = fun(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (fa < 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def _make_solution(model, body, ref, theta):
    theta = wrap_angle(theta)
    air = angle_of_attack(ref.xdot_rw, theta, body.delta)
    thrust = equilibrium_thrust(model, body, ref, theta)
    return EquilibriumSolution(
        theta_e=theta,
        alpha_e=air.alpha,
        thrust_e=thrust,
        thrust_nonneg=thrust >= 0.0,
        residual=abs(f_t(model, body, ref, theta)),
    )


def solve_equilibria(model, body, ref, n_grid=N_SCAN, xtol=ROOT_XTOL, separation=1e-7):
    """All equilibrium orientations at one instant.

    Scans ``n_grid`` uniform orientations, keeps exact zeros and refines
    every sign change by bisection to ``xtol``. When f_t vanishes to within
    1e-9 of its natural scale everywhere, every orientation is an
    equilibrium: the set is flagged degenerate and left empty.
    """
    thetas = -np.pi + 2 * np.pi * np.arange(n_grid) / n_grid
    vals = f_t(model, body, ref, thetas)
    scale = force_scale(body, ref)
    if np.max(np.abs(vals)) <= DEGENERACY_RTOL * scale:
        return EquilibriumSet((), True)

    fun = lambda th: f_t(model, body, ref, th)  # noqa: E731
    roots = [float(thetas[i]) for i in np.flatnonzero(vals == 0.0)]
    nxt = np.roll(vals, -1)
    step = 2 * np.pi / n_grid
    for i in np.flatnonzero(vals * nxt < 0):
        a = float(thetas[i])
        roots.append(_bisect(fun, a, a + step, float(vals[i]), xtol))

    roots = sorted(wrap_angle(r) for r in roots)
    kept = []
    for r in roots:
        if not kept or angle_dist(r, kept[-1]) > separation:
            kept.append(r)
    if len(kept) > 1 and angle_dist(kept[0], kept[-1]) <= separation:
        kept.pop()
    return EquilibriumSet(tuple(_make_solution(model, body, ref, r) for r in kept))


def positive_thrust_subset(eq_set):
    return EquilibriumSet(
        tuple(s for s in eq_set.solutions if s.thrust_nonneg), eq_set.degenerate_all_orientations
    )


def a_nu_of_alpha(model, alpha_e):
    """Dimensionless speed k_a nu^2 / (m g) of the steady horizontal,
    windless, delta = 0 flight whose equilibrium angle of attack is alpha_e.

    Returns None where the expression is undefined.
    """
    s, c = math.sin(alpha_e), math.cos(alpha_e)
    if s == 0.0:
        return None
    cl, cd = model.coeffs(alpha_e)
    den = float(cd) * s + float(cl) * c
    if abs(den) <= 1e-12:
        return None
    return c / den


def speed_for_a_nu(body, a_nu):
    return math.sqrt(a_nu * body.m * body.g / body.k_a)


@dataclass(frozen=True)
class Fold:
    alpha_e: float
    a_nu: float
    kind: str  # "max" or "min" of a_nu along alpha_e


@dataclass(frozen=True, eq=False)
class BifurcationCurve:
    alpha_e: np.ndarray
    a_nu: np.ndarray
    folds: List[Fold]

    @property
    def samples(self):
        return list(zip(self.alpha_e.tolist(), self.a_nu.tolist()))

    @property
    def fold_alphas(self):
        return [f.alpha_e for f in self.folds]


def bifurcation_sweep(model, alpha_grid, h=1e-7, xtol=1e-10):
    """Sample a_nu along ``alpha_grid`` and locate its turning points.

    A fold is reported where the forward-difference slope between
    consecutive defined samples changes sign; its position is refined by
    bisection on a central-difference slope.
    """
    grid = np.asarray(alpha_grid, dtype=float)
    a_vals = [a_nu_of_alpha(model, a) for a in grid]
    keep = [i for i, v in enumerate(a_vals) if v is not None and v >= 0.0]
    alphas = grid[keep]
    values = np.array([a_vals[i] for i in keep])

    def slope(a):
        hi, lo = a_nu_of_alpha(model, a + h), a_nu_of_alpha(model, a - h)
        if hi is None or lo is None:
            return math.nan
        return (hi - lo) / (2 * h)

    folds = []
    diffs = np.diff(values)
    for i in range(1, len(diffs)):
        if keep[i + 1] - keep[i - 1] != 2:
            continue  # slope bracket spans an undefined sample
        if diffs[i - 1] * diffs[i] < 0:
            lo, hi = float(alphas[i - 1]), float(alphas[i + 1])
            s_lo = slope(lo)
            if not math.isfinite(s_lo) or s_lo * slope(hi) > 0:
                a_f = float(alphas[i])
            else:
                a_f = _bisect(slope, lo, hi, s_lo, xtol)
            kind = "max" if diffs[i - 1] > 0 else "min"
            folds.append(Fold(a_f, a_nu_of_alpha(model, a_f), kind))
    return BifurcationCurve(alphas, values, folds)


@dataclass(frozen=True)
class BranchEvent:
    kind: str  # "jump", "gap"
    t: float
    theta_before: Optional[float] = None
    theta_after: Optional[float] = None
    alpha_before: Optional[float] = None
    alpha_after: Optional[float] = None


@dataclass(frozen=True)
class BranchSample:
    t: float
    solution: Optional[EquilibriumSolution]
    jump: bool = False


@dataclass(frozen=True)
class BranchTrack:
    samples: tuple
    events: tuple

    @property
    def jumps(self):
        return [e for e in self.events if e.kind == "jump"]

    @property
    def gaps(self):
        return [e for e in self.events if e.kind == "gap"]


def _initial_choice(eq_set):
    pos = [s for s in eq_set.solutions if s.thrust_nonneg]
    pool = pos or list(eq_set.solutions)
    with_alpha = [s for s in pool if s.alpha_e is not None]
    if with_alpha:
        return max(with_alpha, key=lambda s: s.alpha_e)
    return max(pool, key=lambda s: s.thrust_e)


def track_branch(model, body, profile: Callable, t_grid, jump_threshold=JUMP_THRESHOLD, n_grid=N_SCAN):
    """Follow one equilibrium branch through time.

    ``profile(t)`` returns a :class:`ReferenceState`. The first selection is
    the non-negative-thrust equilibrium with the largest angle of attack
    (the hover-like one); afterwards the equilibrium nearest in orientation
    to the previous choice is kept. A continuation step longer than
    ``jump_threshold`` is a jump; an instant without equilibria is a gap.
    """
    samples, events = [], []
    prev = None
    for t in np.asarray(t_grid, dtype=float):
        t = float(t)
        eq_set = solve_equilibria(model, body, profile(t), n_grid=n_grid)
        if len(eq_set) == 0:
            events.append(BranchEvent("gap", t))
            samples.append(BranchSample(t, None))
            continue
        if prev is None:
            samples.append(BranchSample(t, _initial_choice(eq_set)))
            prev = samples[-1].solution
            continue
        best = min(eq_set.solutions, key=lambda s: angle_dist(s.theta_e, prev.theta_e))
        jumped = angle_dist(best.theta_e, prev.theta_e) > jump_threshold
        if jumped:
            events.append(
                BranchEvent("jump", t, prev.theta_e, best.theta_e, prev.alpha_e, best.alpha_e)
            )
        samples.append(BranchSample(t, best, jumped))
        prev = best
    return BranchTrack(tuple(samples), tuple(events))


@dataclass(frozen=True)
class StallConditionResult:
    holds_precondition: bool
    alpha_s: Optional[float]
    cd_zero: float
    cd_pi: float

    @property
    def holds(self):
        return self.holds_precondition and self.alpha_s is not None

    def to_dict(self):
        d = dict(self.__dict__)
        d["holds"] = self.holds
        return d


def stall_inequality(model, alpha_s):
    """cl(a) > 0 and tan(a) <= (cd(a) - cd(pi)) / cl(a)."""
    cl, cd = (float(v) for v in model.coeffs(alpha_s))
    cd_pi = float(model.coeffs(math.pi)[1])
    return cl > 0 and math.tan(alpha_s) <= (cd - cd_pi) / cl


def check_theorem2_condition(model, n=DEFAULT_CHECK_GRID):
    """Search (0, pi/2) for an angle certifying existence of an equilibrium
    orientation for every thrust offset (symmetric shapes with
    cd(pi) > cd(0))."""
    cd0 = float(model.coeffs(0.0)[1])
    cdpi = float(model.coeffs(math.pi)[1])
    grid = -np.pi + 2 * np.pi * np.arange(n) / n
    grid = grid[(grid > 0) & (grid < np.pi / 2)]
    cl, cd = model.coeffs(grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = (cl > 0) & (np.tan(grid) <= (cd - cdpi) / cl)
    alpha_s = float(grid[np.argmax(ok)]) if np.any(ok) else None
    return StallConditionResult(cdpi > cd0, alpha_s, cd0, cdpi)


class BadReferenceError(ValueError):
    """The model does not admit a orientation-independent transformed force."""


@dataclass(frozen=True, eq=False)
class BadReferenceTrajectory:
    t: np.ndarray
    xdot_b: np.ndarray  # (n, 2)
    xddot_b: np.ndarray  # (n, 2), right-hand side at each sample
    Fp_norm: np.ndarray  # |F_p| along the trajectory with the reference set to it


def _no_wind(t):
    return np.zeros(2), np.zeros(2)


def integrate_bad_reference(model, body, xdot_b0, wind=None, horizon=10.0, dt=1e-3):
    """Integrate the unique reference velocity at which every orientation is
    an equilibrium (transformed force identically zero).

    xddot_b = g e1 + (k_a/m) |v| (cbar_L S - cbar_D I) v,  v = xdot_b - xdot_w.

    Needs a model whose transformed coefficients are constant with
    cbar_D > 0. ``wind(t)`` returns (xdot_w, xddot_w).
    """
    from aeroeq import equivalency

    report = equivalency.check_global_condition(model, body.delta)
    if not report.holds:
        raise BadReferenceError(
            f"global equivalency condition fails (max residual {report.max_residual:.3e})"
        )
    lam = equivalency.lambda_general(model, 0.0, body.delta)
    cbl, cbd = equivalency.transformed_coeffs(model, 0.0, body.delta, lam)
    if not cbd > 0:
        raise BadReferenceError(f"transformed drag must be positive, got {cbd:.3e}")
    wind = wind or _no_wind
    S = np.array([[0.0, -1.0], [1.0, 0.0]])
    M = cbl * S - cbd * np.eye(2)
    c = body.k_a / body.m

    def rhs(t, v):
        va = v - _vec(wind(t)[0])
        return body.g * E1 + c * math.hypot(*va) * (M @ va)

    n = int(round(horizon / dt))
    ts = dt * np.arange(n + 1)
    vs = np.empty((n + 1, 2))
    vs[0] = _vec(xdot_b0)
    for k in range(n):
        t, v = ts[k], vs[k]
        k1 = rhs(t, v)
        k2 = rhs(t + dt / 2, v + dt / 2 * k1)
        k3 = rhs(t + dt / 2, v + dt / 2 * k2)
        k4 = rhs(t + dt, v + dt * k3)
        vs[k + 1] = v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    acc = np.array([rhs(t, v) for t, v in zip(ts, vs)])
    fp = np.empty(n + 1)
    for k in range(n + 1):
        w, wd = wind(ts[k])
        ref = ReferenceState(ts[k], vs[k], acc[k], np.zeros(2), w, wd)
        fp[k] = np.linalg.norm(equivalency.transformed_force(model, body, ref, vs[k], 0.0).F_p)
    return BadReferenceTrajectory(ts, vs, acc, fp)
