"""Fully distributed gains.

Scenario D is scenario A with the fixed consensus gain replaced by one
adaptive gain per estimate, each starting at zero and growing with its own
squared consensus error.  No network-wide constant is needed.
"""
import numpy as np

from nussnash.scenarios import builtin_config, integration_settings, scenario_from_config
from nussnash.sim_engine import integrate, metrics

cfg = builtin_config("scenario_D")
print("estimator config:", cfg["estimator"])
sc = scenario_from_config(cfg)
run = integrate(sc, **integration_settings(cfg))
m = metrics(run, sc.game.analytic_ne)
delta = run.parts()["delta"]

print(f"final error {m['final_error']:.2e}")
print("\n   t    mean delta   max delta")
for t in (0, 1, 5, 20, 100, 300):
    i = int(np.argmin(np.abs(run.t - t)))
    print(f"{run.t[i]:5.0f}   {delta[i].mean():9.4f}   {delta[i].max():9.4f}")
print("\ngains never decrease:", m["delta"]["min_increment"] >= 0)
print("player 1's final gains towards each player's action block:")
print(np.round(delta[-1, 0].reshape(7, 2), 3))
