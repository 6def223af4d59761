import io
import math

import numpy as np
import pytest

from aeroeq.aero import BodyParams, Blended, FlatPlate
from aeroeq.control import ControlGains, ControllerModel
from aeroeq.sim import (
    LOG_HEADER,
    IntegrationError,
    ReferenceProfile,
    SimConfig,
    SimState,
    Wind,
    metrics,
    plant_step,
    reference_state,
    run_closed_loop,
    settle_time,
    spike_onset,
)

from conftest import NACA_PARAMS


def hover_config(**changes):
    body = BodyParams(m=10.0, k_a=0.646)
    model = Blended(**NACA_PARAMS)
    cfg = SimConfig(
        body=body,
        model=model,
        controller=ControllerModel(body, model),
        gains=ControlGains(0.1529, 0.0234, 6.0),
        t_end=0.5,
    )
    return cfg.replace(**changes) if changes else cfg


# reference and wind ---------------------------------------------------------------


def test_ramp_then_cruise_profile():
    prof = ReferenceProfile("ramp_then_cruise", rate=2.0, v_max=20.0, direction=(0.0, 1.0))
    assert prof.corner_time == 10.0
    v, a, j = prof.kinematics(3.0)
    assert np.allclose(v, [0.0, 6.0]) and np.allclose(a, [0.0, 2.0]) and np.allclose(j, 0.0)
    v, a, _ = prof.kinematics(10.0)
    # right-continuous acceleration at the corner
    assert np.allclose(v, [0.0, 20.0]) and np.allclose(a, 0.0)


def test_piecewise_profile():
    prof = ReferenceProfile("piecewise", knots=[[0.0, 0.0, 0.0], [2.0, 0.0, 4.0], [3.0, 1.0, 4.0]])
    v, a, _ = prof.kinematics(1.0)
    assert np.allclose(v, [0.0, 2.0]) and np.allclose(a, [0.0, 2.0])
    v, a, _ = prof.kinematics(2.5)
    assert np.allclose(v, [0.5, 4.0]) and np.allclose(a, [1.0, 0.0])
    v, a, _ = prof.kinematics(5.0)
    assert np.allclose(v, [1.0, 4.0]) and np.allclose(a, 0.0)
    assert np.allclose(prof.kinematics(-1.0)[0], 0.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="spiral"),
        dict(kind="ramp_then_cruise", rate=0.0, v_max=1.0),
        dict(kind="ramp_then_cruise", rate=1.0, v_max=1.0, direction=(0.0, 0.0)),
        dict(kind="piecewise", knots=[[0.0, 0.0, 0.0], [0.0, 1.0, 1.0]]),
        dict(kind="piecewise", knots=[[0.0, 0.0]]),
    ],
)
def test_profile_validation(kwargs):
    with pytest.raises(ValueError):
        ReferenceProfile(**kwargs)


def test_wind_and_reference_state():
    gust = Wind(func=lambda t: ((0.0, math.sin(t)), (0.0, math.cos(t))))
    w, wd = gust(0.0)
    assert np.allclose(w, 0.0) and np.allclose(wd, [0.0, 1.0])
    ref = reference_state(ReferenceProfile("constant", velocity=(1.0, 2.0)), Wind((0.0, 3.0)), 4.0)
    assert ref.t == 4.0 and np.allclose(ref.xdot_rw, [1.0, -1.0])


# plant integration -------------------------------------------------------------------


def test_plant_step_free_fall():
    body = BodyParams(m=2.0, k_a=0.0)
    state = SimState(0.0, [0.0, 0.0], [0.0, 0.0], 0.0)
    for _ in range(100):
        state = plant_step(body, FlatPlate(0.1, 1.0), state, (0.0, 0.5), Wind(), 0.01)
    assert state.t == pytest.approx(1.0)
    assert np.allclose(state.xdot, [9.81, 0.0], rtol=1e-12)
    assert np.allclose(state.x, [9.81 / 2, 0.0], rtol=1e-12)
    assert state.theta == pytest.approx(0.5)


def test_plant_step_hover_balance():
    body = BodyParams(m=2.0, k_a=0.3)
    state = SimState(0.0, [0.0, 0.0], [0.0, 0.0], 0.0)
    state = plant_step(body, FlatPlate(0.1, 1.0), state, (body.weight, 0.0), Wind(), 0.01)
    assert np.allclose(state.xdot, 0.0, atol=1e-15)


def test_plant_step_detects_blowup():
    body = BodyParams(m=1.0, k_a=0.5)
    state = SimState(0.0, [0.0, 0.0], [0.0, 0.0], 0.0)
    with pytest.raises(IntegrationError):
        plant_step(body, FlatPlate(0.1, 1.0), state, (math.inf, 0.0), Wind(), 0.01)


def test_energy_is_not_created_by_passive_aerodynamics(rng):
    body = BodyParams(m=3.0, k_a=0.7)
    model = Blended(**NACA_PARAMS)
    for _ in range(3):
        state = SimState(0.0, [0.0, 0.0], rng.uniform(-15, 15, 2), rng.uniform(-math.pi, math.pi))
        omega = rng.uniform(-2, 2)

        def energy(s):
            return 0.5 * body.m * float(s.xdot @ s.xdot) - body.m * body.g * s.x[0]

        e_prev = energy(state)
        for _ in range(2000):
            state = plant_step(body, model, state, (0.0, omega), Wind(), 1e-3)
            e = energy(state)
            assert e <= e_prev + 1e-6
            e_prev = e


def test_rk4_observed_order():
    # smooth sub-interval: the ramp part of the bundled scenario, before the
    # reference corner and before the stall transition
    from aeroeq.cli import DATA_DIR
    from aeroeq.config import load_sim_config

    base = load_sim_config(DATA_DIR / "naca0021_transition.toml").replace(t_end=2.0)
    finals = []
    for dt in (4e-3, 2e-3, 1e-3):
        log = run_closed_loop(base.replace(dt=dt))
        finals.append(np.r_[log.v[-1], math.radians(log.theta_deg[-1])])
    coarse = np.linalg.norm(finals[0] - finals[1])
    fine = np.linalg.norm(finals[1] - finals[2])
    assert math.log2(coarse / fine) >= 3.8


# closed loop ---------------------------------------------------------------------------


def test_hover_regulation_is_quiet():
    log = run_closed_loop(hover_config())
    assert np.allclose(log.thrust_over_mg, 1.0) and np.allclose(log.omega, 0.0, atol=1e-12)
    assert np.all(np.isnan(log.alpha_deg))
    assert len(log.t) == 501 and log.t[-1] == pytest.approx(0.5)


def test_hover_regulation_converges_with_decreasing_lyapunov():
    cfg = hover_config(
        gains=ControlGains(0.1529, 0.0234, 6.0, use_feedforward=True),
        law="ideal",
        xdot0=(0.0, 0.1),
        dt=1e-2,
        t_end=10.0,
    )
    log = run_closed_loop(cfg)
    assert np.max(np.diff(log.V)) <= 1e-9
    assert log.error_norm[-1] <= 1e-3


def test_omega_stays_finite_through_the_jump(shipped_run):
    _, log, _ = shipped_run
    window = (log.t >= 7.0) & (log.t <= 9.0)
    # the peak rate (about 12 rad/s) depends on tau; only finiteness is required
    assert np.all(np.isfinite(log.omega[window]))


def test_closed_loop_is_deterministic():
    cfg = hover_config(xdot0=(0.5, -0.3), theta0=0.2, law="robust")
    a, b = run_closed_loop(cfg), run_closed_loop(cfg)
    assert np.array_equal(a.columns(), b.columns(), equal_nan=True)


def test_log_csv_layout():
    log = run_closed_loop(hover_config(t_end=0.01))
    buf = io.StringIO()
    log.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(LOG_HEADER)
    assert len(lines) == 1 + len(log.t)
    assert len(lines[1].split(",")) == len(LOG_HEADER)


def test_sim_config_validation():
    with pytest.raises(ValueError):
        hover_config(dt=0.0)
    with pytest.raises(ValueError):
        hover_config(t_end=1e-4)
    with pytest.raises(ValueError):
        hover_config(law="pid")
    with pytest.raises(ValueError):
        hover_config(integrator="euler")
    assert hover_config(t_end=1.0, dt=0.01).n_steps == 100


def test_step_refinement_on_shipped_run(shipped_run):
    config, log, _ = shipped_run
    fine = run_closed_loop(config.replace(dt=config.dt / 2))
    assert np.linalg.norm(fine.v[-1] - log.v[-1]) < 1e-3


# metrics -------------------------------------------------------------------------------


def test_settle_time():
    t = np.linspace(0, 5, 501)
    err = np.where(t < 2.0, 1.0, 0.1)
    assert settle_time(t, err) == pytest.approx(2.0)
    assert settle_time(t, np.ones_like(t)) is None
    err_late = np.where(t < 4.5, 1.0, 0.1)
    assert settle_time(t, err_late, hold=1.0) is None


def test_spike_onset():
    t = np.linspace(0, 10, 1001)
    err = 0.05 + np.where(t > 7.3, (t - 7.3) * 2.0, 0.0) * np.exp(-(t - 7.3) * 3.0 * (t > 7.3))
    assert spike_onset(t, err) == pytest.approx(7.3, abs=0.011)
    assert spike_onset(t, np.exp(-t)) is None


def test_metrics_of_shipped_run(shipped_run):
    _, log, _ = shipped_run
    m = metrics(log)
    d = m.to_dict()
    assert not m.diverged and math.isfinite(m.max_error_post_transient)
    assert isinstance(d["thrust_bounds"], list) and d["thrust_bounds"][0] <= d["thrust_bounds"][1]
    assert m.final_error == pytest.approx(float(log.error_norm[-1]))
