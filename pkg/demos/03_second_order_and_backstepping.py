"""Velocity-actuated players.

Scenario B gives every player a double integrator with an unknown input
gain.  Scenario C swaps player 7 for a general second-order system whose
velocity also enters through an unknown gain, handled by a two-stage
backstepping design with a Nussbaum gain at each stage.

Player 7's opening transient in C is very stiff, so its integration starts
with a short schedule of tiny fixed steps; see ``integration.warmup`` in the
built-in config.  Expect about 20 s for B and about a minute for C.
"""
import numpy as np

from nussnash.scenarios import builtin_config, integration_settings, scenario_from_config
from nussnash.sim_engine import integrate, metrics

for name in ("scenario_B", "scenario_C"):
    cfg = builtin_config(name)
    st = integration_settings(cfg)
    sc = scenario_from_config(cfg)
    run = integrate(sc, **st)
    m = metrics(run, sc.game.analytic_ne)
    print(f"\n{name}: T={st['T']:g}, h={st['h']:g}, warm-up {st['warmup'] or 'none'}")
    print(f"  final error {m['final_error']:.2e}, largest regulator drift over the last 10% {m['max_plateau']:.1e}")
    v = run.parts()["v"]
    print(f"  max |v| {m['max_abs_v']:.1f}, |v(T)| per player:",
          np.round(np.max(np.abs(v[-1].reshape(7, 2)), axis=1), 4))
    if name == "scenario_C":
        ch = m["channels"]["7_1"]
        print("  player 7 second stage:", {k: f"{ch['max_abs_' + k]:.3g}" for k in ("k2", "theta_bar1", "theta_bar2", "b_bar1")})
        # player 7's velocity settles where b*v balances the regressor: 2v + 7x = 0
        print("  player 7 v(T):", v[-1, 12:], "expected", -7 * sc.game.analytic_ne[12:] / 2)
