"""Distributed Nash equilibrium seeking for players with unknown control directions."""
from .estimator import AdaptiveGains, EstimatorState, FixedGains, estimator_rhs
from .game_model import (
    GameDefinition,
    QuadraticGameSpec,
    connectivity_game,
    estimate_lipschitz,
    estimate_monotonicity,
    pseudo_gradient,
    solve_nash,
)
from .network import CommGraph, coupling_matrix, is_connected, laplacian
from .plants import PlantKind, PlantSpec, PlantState, plant_rhs
from .regulators import (
    NussbaumFn,
    backstepping_control,
    first_order_control,
    first_order_control_no_uncertainty,
    nussbaum,
    nussbaum_prime,
    second_order_control,
)
from .scenarios import builtin_scenario, builtins, scenario_from_config
from .sim_engine import Family, Player, RunLog, Scenario, assemble, integrate, metrics, rk4_step

__version__ = "0.1.0"
