"""Consensus estimation on its own: seven players find the Nash equilibrium
of the sensor-connectivity game while only talking to their ring neighbours.

No plant is attached, so each reference y_i is the player's action.  The
script prints the distance to the equilibrium over time, then repeats the
run with weaker consensus gains to show why delta has to be large enough.
"""
import numpy as np

from nussnash.game_model import connectivity_game, solve_nash
from nussnash.scenarios import builtin_config, integration_settings, scenario_from_config, set_path
from nussnash.sim_engine import integrate

game = connectivity_game()
x_star = solve_nash(game)
print("equilibrium per player:", x_star[:2], "(identical for all seven)")

cfg = builtin_config("estimator_only")
run = integrate(scenario_from_config(cfg), **integration_settings(cfg))
err = np.max(np.abs(run.parts()["y"] - x_star), axis=1)
print("\n   t     max |y - x*|")
for t in (0, 1, 2, 5, 10, 20, 30, 40):
    i = int(np.argmin(np.abs(run.t - t)))
    print(f"{run.t[i]:5.0f}   {err[i]:.3e}")

# the estimates must agree faster than the gradient flow moves them
print("\ndelta   final max |y - x*|")
for delta in (1.0, 2.0, 5.0, 10.0, 20.0):
    c = set_path(cfg, "estimator.delta", delta)
    r = integrate(scenario_from_config(c), **integration_settings(c))
    final = np.max(np.abs(r.parts()["y"][-1] - x_star))
    print(f"{delta:5.0f}   {final:.3e}{'  (diverged)' if r.diverged else ''}")
