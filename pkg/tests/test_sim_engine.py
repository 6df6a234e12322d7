import copy

import numpy as np
import pytest

from nussnash import _kernel
from nussnash.game_model import GameDefinition, pseudo_gradient
from nussnash.regulators import nussbaum
from nussnash.scenarios import builtin_config, builtin_scenario, integration_settings, scenario_from_config
from nussnash.sim_engine import (
    ClosedLoop,
    ConfigError,
    DivergenceError,
    RunLog,
    Scenario,
    initial_state,
    integrate,
    kernel_params,
    layout_for,
    metrics,
    rk4_step,
    step_plan,
)

NE = np.tile([-0.25, -1.0], 7)


# --- rk4 ---------------------------------------------------------------------

def test_rk4_decay_step():
    s = rk4_step(lambda x: -x, np.array([1.0]), 0.1)
    assert abs(s[0] - np.exp(-0.1)) < 1e-7
    # one step reproduces the degree-4 Taylor polynomial of exp(-h)
    assert s[0] == pytest.approx(1 - 0.1 + 0.1**2 / 2 - 0.1**3 / 6 + 0.1**4 / 24, rel=1e-15)


def test_rk4_trivial_fields():
    s0 = np.array([1.5, -2.0])
    np.testing.assert_array_equal(rk4_step(lambda x: np.zeros(2), s0, 0.3), s0)
    np.testing.assert_allclose(rk4_step(lambda x: np.ones(2), s0, 0.25), s0 + 0.25, rtol=0, atol=0)


def test_rk4_is_fourth_order():
    def solve(rhs, s, exact, T, h):
        for _ in range(int(round(T / h))):
            s = rk4_step(rhs, s, h)
        return np.abs(s - exact).max()

    ratio = solve(lambda x: -x, np.array([1.0]), np.exp(-1.0), 1.0, 0.1) / \
        solve(lambda x: -x, np.array([1.0]), np.exp(-1.0), 1.0, 0.05)
    assert 12 < ratio < 20
    # same on a rotation, where errors are not monotone in a single coordinate
    rot = lambda x: np.array([x[1], -x[0]])
    exact = [np.cos(2.0), -np.sin(2.0)]
    ratio = solve(rot, np.array([1.0, 0.0]), exact, 2.0, 0.1) / solve(rot, np.array([1.0, 0.0]), exact, 2.0, 0.05)
    assert 12 < ratio < 20


def test_rk4_flags_non_finite():
    with pytest.raises(DivergenceError):
        rk4_step(lambda x: x * np.inf, np.array([1.0]), 0.1)
    with pytest.raises(ValueError):
        rk4_step(lambda x: x, np.array([1.0]), 0.0)


# --- layout ------------------------------------------------------------------

@pytest.mark.parametrize("name", ["scenario_A", "scenario_C", "scenario_D", "estimator_only"])
def test_pack_unpack_round_trip(name):
    sc = builtin_scenario(name)
    lay = layout_for(sc)
    s = np.random.default_rng(0).normal(size=lay.size)
    np.testing.assert_array_equal(lay.pack(lay.unpack(s)), s)
    assert [lay.describe(i) for i in range(lay.size)].count(lay.describe(0)) == 1


def test_initial_state_places_players():
    sc = builtin_scenario("scenario_B")
    parts = layout_for(sc).unpack(initial_state(sc))
    np.testing.assert_array_equal(parts["x"][:2], [-5, 3])
    assert np.all(parts["v"] == 0) and np.all(parts["z"] == 0) and np.all(parts["reg"] == 0)


# --- closed loop -------------------------------------------------------------

def _equilibrium_state(sc):
    """Actions and estimates at the NE with adaptive states that cancel the drift.

    With ``k = pi/2`` the gain is ``pi^2/4``; ``theta_hat`` then has to equal
    ``-theta / (b N(k))`` for ``dx/dt`` to vanish.
    """
    lay = layout_for(sc)
    b = np.concatenate([p.plant.b for p in sc.players])
    theta = np.concatenate([p.plant.theta for p in sc.players])
    k = np.full(14, np.pi / 2)
    reg = np.zeros((6, 14))
    reg[0] = k
    reg[1] = -theta / (b * nussbaum(k, 0))
    return lay.pack({"x": NE, "y": NE, "z": np.tile(NE, (7, 1)), "reg": reg})


def test_equilibrium_is_a_fixed_point():
    sc = builtin_scenario("scenario_A")
    s = _equilibrium_state(sc)
    assert np.max(np.abs(ClosedLoop(sc).rhs(s))) < 1e-12
    assert np.max(np.abs(_kernel.rhs(s, kernel_params(sc)))) < 1e-12
    P = kernel_params(sc)
    states, *_ , n_rec, bad, _ = _kernel.integrate(s, P, 2.5e-4, 10_000, 1000, 1e12)
    assert bad < 0
    assert np.max(np.abs(states[:n_rec] - s)) < 1e-9


def test_reference_rate_at_start():
    # all estimates start at zero, so every player descends its gradient at the origin
    sc = builtin_scenario("scenario_A")
    lay = layout_for(sc)
    s0 = initial_state(sc)
    expected = -pseudo_gradient(sc.game, np.zeros(14))
    np.testing.assert_allclose(ClosedLoop(sc).evaluate(s0)["y"], expected, atol=1e-12)
    np.testing.assert_allclose(lay.unpack(_kernel.rhs(s0, kernel_params(sc)))["y"], expected, atol=1e-12)


@pytest.mark.parametrize("name", ["scenario_A", "scenario_B", "scenario_C", "scenario_D", "estimator_only"])
def test_compiled_matches_reference_rhs(name):
    sc = builtin_scenario(name)
    lay, loop, P = layout_for(sc), ClosedLoop(sc), kernel_params(sc)
    rng = np.random.default_rng(1)
    for _ in range(5):
        s = rng.normal(size=lay.size)
        if lay.delta_shape is not None:
            sl = lay.slices()["delta"]
            s[sl] = np.abs(s[sl])
        ref = loop.rhs(s)
        np.testing.assert_allclose(_kernel.rhs(s, P), ref, rtol=1e-12, atol=1e-12 * np.max(np.abs(ref)))


def test_compiled_matches_reference_integration():
    sc = builtin_scenario("scenario_B")
    a = integrate(sc, T=0.2, h=2.5e-4, stride=40, compiled=True)
    b = integrate(sc, T=0.2, h=2.5e-4, stride=40, compiled=False)
    assert a.meta["compiled"] and not b.meta["compiled"]
    np.testing.assert_allclose(a.states, b.states, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(a.u, b.u, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(a.kdot, b.kdot, rtol=1e-9, atol=1e-9)


def test_generic_game_uses_reference_path():
    sc = builtin_scenario("estimator_only")
    g = sc.game
    generic = Scenario(GameDefinition(g.action_dims, g.objectives, g.gradients, analytic_ne=g.analytic_ne),
                       sc.graph, None, sc.estimator)
    assert kernel_params(generic) is None
    with pytest.raises(ConfigError):
        integrate(generic, T=0.01, h=1e-3, compiled=True)
    a = integrate(generic, T=0.05, h=1e-3, stride=5)
    b = integrate(sc, T=0.05, h=1e-3, stride=5)
    np.testing.assert_allclose(a.states, b.states, rtol=1e-12, atol=1e-12)


def test_runs_are_bit_identical():
    sc = builtin_scenario("scenario_A")
    a = integrate(sc, T=1.0, h=2.5e-4, stride=100)
    b = integrate(sc, T=1.0, h=2.5e-4, stride=100)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.u, b.u)
    assert a.meta["config_hash"] == b.meta["config_hash"]


def test_zero_horizon_logs_initial_state():
    sc = builtin_scenario("scenario_A")
    run = integrate(sc, T=0.0, h=1e-3)
    assert run.states.shape == (1, layout_for(sc).size)
    np.testing.assert_array_equal(run.states[0], initial_state(sc))
    np.testing.assert_array_equal(run.t, [0.0])


def test_sample_times():
    run = integrate(builtin_scenario("estimator_only"), T=1.0, h=1e-3, stride=10)
    np.testing.assert_allclose(run.t, np.arange(101) * 0.01, atol=1e-12)


def test_coarse_step_diverges_cleanly():
    sc = builtin_scenario("scenario_A")
    for compiled in (True, False):
        run = integrate(sc, T=50.0, h=1.0, stride=1, compiled=compiled)
        assert run.diverged
        assert "diverged at t=" in run.divergence
        assert np.all(np.isfinite(run.states))
        with pytest.raises(DivergenceError):
            metrics(run, NE)


def test_integrate_argument_errors():
    sc = builtin_scenario("estimator_only")
    for kw in ({"T": -1.0}, {"T": 1.0, "h": 0.0}, {"T": 1.0, "stride": 0}):
        with pytest.raises(ValueError):
            integrate(sc, **kw)


# --- warm-up schedule ------------------------------------------------------------

def test_step_plan():
    assert step_plan(1.0, 1e-3, 10) == [(1000, 1e-3, 10)]
    assert step_plan(1.0, 1e-3, 10, [(0.1, 1e-4)]) == [(1000, 1e-4, 100), (900, 1e-3, 10)]
    assert step_plan(0.1, 1e-3, 10, [(0.1, 1e-4)]) == [(1000, 1e-4, 100)]
    for bad in ([(0.105, 1e-4)], [(0.1, 3e-4)], [(0.1, 1e-4), (0.05, 1e-4)], [(2.0, 1e-4)], [(0.1, 0.0)]):
        with pytest.raises(ConfigError) as info:
            step_plan(1.0, 1e-3, 10, bad)
        assert info.value.key == "integration.warmup"


def test_warmup_keeps_the_sample_grid():
    sc = builtin_scenario("estimator_only")
    plain = integrate(sc, T=1.0, h=1e-3, stride=10)
    warm = integrate(sc, T=1.0, h=1e-3, stride=10, warmup=[(0.1, 1e-4), (0.2, 5e-4)])
    np.testing.assert_array_equal(warm.t, plain.t)
    np.testing.assert_allclose(warm.states, plain.states, atol=1e-9)
    assert warm.meta["warmup"] == [[0.1, 1e-4], [0.2, 5e-4]]
    assert warm.meta["config_hash"] != plain.meta["config_hash"]


def test_warmup_divergence_reports_absolute_time():
    sc = builtin_scenario("scenario_A")
    run = integrate(sc, T=50.0, h=1.0, stride=1, warmup=[(1.0, 2.5e-4)])
    assert run.diverged
    t = float(run.divergence.split("t=")[1].split()[0])
    assert t >= 1.0


# --- metrics -------------------------------------------------------------------

def test_metrics_on_constant_trajectory():
    sc = builtin_scenario("scenario_A")
    s = _equilibrium_state(sc)
    n, d = 11, 14
    run = RunLog(t=np.linspace(0, 1, n), states=np.tile(s, (n, 1)), u=np.ones((n, d)),
                 kdot=np.zeros((n, d)), kdot2=np.zeros((n, d)), ydot_sq=np.zeros(n),
                 layout=layout_for(sc), scenario=sc, h=0.1, T=1.0, stride=1)
    m = metrics(run, NE)
    assert m["final_error"] == 0 and m["final_y_error"] == 0
    assert m["max_plateau"] == 0 and m["max_terminal_abs_kdot"] == 0
    assert m["ydot_sq_tail_fraction"] == 0 and m["samples"] == n
    ch = m["channels"]["1_1"]
    assert ch["max_abs_k"] == pytest.approx(np.pi / 2) and ch["max_abs_u"] == 1.0
    assert "max_abs_v" not in ch


def test_metrics_tail_fraction():
    sc = builtin_scenario("estimator_only")
    run = integrate(sc, T=1.0, h=1e-3, stride=10)
    run.ydot_sq = np.ones_like(run.ydot_sq)
    assert metrics(run, NE)["ydot_sq_tail_fraction"] == pytest.approx(0.2, abs=1e-9)


# --- config validation -------------------------------------------------------------

def _expect_key(cfg, key):
    with pytest.raises(ConfigError) as info:
        scenario_from_config(cfg)
    assert info.value.key is not None and info.value.key.startswith(key)


def test_config_validation():
    base = builtin_config("scenario_A")

    cfg = copy.deepcopy(base)
    cfg["graph"]["edges"] = [[1, 2], [3, 4], [5, 6], [6, 7]]
    _expect_key(cfg, "graph")

    cfg = copy.deepcopy(base)
    cfg["players"][2]["hidden"]["b"] = [0, 1]
    _expect_key(cfg, "players.2.hidden")

    cfg = copy.deepcopy(base)
    cfg["players"][3]["controller"] = "second_order"
    _expect_key(cfg, "players.3.controller")

    cfg = copy.deepcopy(base)
    del cfg["players"][7]
    _expect_key(cfg, "players")

    cfg = copy.deepcopy(base)
    cfg["estimator"] = {"mode": "adaptive", "delta": 3.0}
    _expect_key(cfg, "estimator.delta")

    for field, val in (("h", 0.0), ("h", -1e-3), ("T", 0.0)):
        cfg = copy.deepcopy(base)
        cfg["integration"][field] = val
        with pytest.raises(ConfigError) as info:
            integration_settings(cfg)
        assert info.value.key == f"integration.{field}"


def test_builtin_scenario_c_settings():
    st = integration_settings(builtin_config("scenario_C"))
    plan = step_plan(st["T"], st["h"], st["stride"], st["warmup"])
    assert sum(n * h for n, h, _ in plan) == pytest.approx(st["T"], rel=1e-12)
