"""Built-in forward simulators for the three case studies, the plug-in
simulator interface, and the ODE integration core."""

from popcal.models.ode import OdeSolverSettings, SimulatorFailure, rk4_fixed
from popcal.models.mixture import MixtureDenoiseModel, analytic_h_density, simulate_mixture
from popcal.models.growth import GrowthModel, solve_growth_ode, simulate_growth_pair
from popcal.models.internalisation import (
    InternalisationModel,
    flow_population_distribution,
    solve_internalisation,
    simulate_flow_measurement,
    simulate_flow_population,
)
from popcal.models.external import register_external_model, HookModel, ExternalExecutableModel

__all__ = [
    "OdeSolverSettings",
    "SimulatorFailure",
    "rk4_fixed",
    "MixtureDenoiseModel",
    "analytic_h_density",
    "simulate_mixture",
    "GrowthModel",
    "solve_growth_ode",
    "simulate_growth_pair",
    "InternalisationModel",
    "flow_population_distribution",
    "solve_internalisation",
    "simulate_flow_measurement",
    "simulate_flow_population",
    "register_external_model",
    "HookModel",
    "ExternalExecutableModel",
]
