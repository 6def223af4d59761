import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from aeroeq.aero import BodyParams, Blended, FlatPlate, SmallAlpha

settings.register_profile(
    "repo", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

# NACA 0021 fit at Re = 160e3
NACA_PARAMS = dict(c0=0.014, c1=0.95, c2=5.5, c3=0.3, alpha_bar=math.radians(11.0), kL=28.0, kD=167.0)


@pytest.fixture
def naca():
    return Blended(**NACA_PARAMS)


@pytest.fixture
def naca_body():
    return BodyParams(m=10.0, g=9.81, k_a=0.646)


@pytest.fixture
def flat():
    return FlatPlate(0.0139, 0.9430)


@pytest.fixture
def small():
    return SmallAlpha(0.02, 5.0, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def shipped_run():
    """The bundled transition scenario at its default step, run once per session.

    Returns (config, log, elapsed seconds).
    """
    import time

    from aeroeq.cli import DATA_DIR
    from aeroeq.config import load_sim_config
    from aeroeq.sim import run_closed_loop

    config = load_sim_config(DATA_DIR / "naca0021_transition.toml")
    start = time.perf_counter()
    log = run_closed_loop(config)
    return config, log, time.perf_counter() - start
