"""First-order players whose input gains have unknown sign.

Scenario A uses the built-in gains; the flipped variant negates every one of
them while the controllers stay exactly the same.  A Nussbaum gain N(k)
lets k wander until b*N(k) < 0 on every channel, after which the loop is
stabilising and k settles.  Each run takes around 20-30 s.
"""
import numpy as np

from nussnash.regulators import nussbaum
from nussnash.scenarios import builtin_config, integration_settings, scenario_from_config
from nussnash.sim_engine import integrate, metrics

for name in ("scenario_A", "scenario_A_flipped"):
    cfg = builtin_config(name)
    sc = scenario_from_config(cfg)
    run = integrate(sc, **integration_settings(cfg))
    m = metrics(run, sc.game.analytic_ne)
    parts = run.parts()
    k = parts["reg"][:, 0, :]
    b = np.concatenate([p.plant.b for p in sc.players])  # read here only to explain the result

    print(f"\n{name}: final error {m['final_error']:.2e}, T={run.T:g}")
    print("channel    b    k(T)      b*N(k(T))   max|k|")
    for col, label in enumerate(m["channels"]):
        kt = k[-1, col]
        print(f"  {label}  {b[col]:+4.0f}  {kt:+8.3f}  {b[col] * nussbaum(kt):+10.3f}  {np.max(np.abs(k[:, col])):7.3f}")
    print("every b*N(k) negative:", bool(np.all(b * nussbaum(k[-1]) < 0)))
