"""Longitudinal flight dynamics of thrust-propelled vehicles under steady
aerodynamics: coefficient models, equilibrium orientations, spherical
equivalency, velocity-tracking control and closed-loop simulation."""

from aeroeq.aero import (
    AeroModel,
    AirState,
    BodyParams,
    Blended,
    Custom,
    FlatPlate,
    SmallAlpha,
    Tabulated,
    aero_force,
    angle_of_attack,
    load_tabulated,
    passivity_counterexample,
    sigma,
)
from aeroeq.equilibrium import (
    ReferenceState,
    EquilibriumSolution,
    EquilibriumSet,
    BifurcationCurve,
    apparent_force,
    f_t,
    solve_equilibria,
    positive_thrust_subset,
    a_nu_of_alpha,
    bifurcation_sweep,
    track_branch,
)

__version__ = "0.1.0"
