"""Declarative scenario configs and the built-in scenarios.

A config is a nested mapping (YAML or JSON on disk).  Players and graph nodes
are numbered from 1.  Ground-truth plant parameters live under
``players.<i>.hidden`` and never reach a regulator.

Example::

    name: my_run
    game: connectivity            # registry name, or {quadratic: {...}}
    graph:
      nodes: 7
      edges: [[1, 2], [2, 3, 0.5]]   # [i, j] or [i, j, weight]
      directed: false
    estimator: {mode: fixed, delta: 10}
    players:
      1:
        plant: first_order
        controller: first_order
        phi: {name: linear, c: 1}
        x0: [-5, 3]
        hidden: {b: [3, 3], theta: [1, 1]}
    integration: {T: 200, h: 2.5e-4, stride: 100}
"""
from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import yaml

from .estimator import AdaptiveGains, FixedGains
from .game_model import GameError, QuadraticGameSpec, get_game
from .network import CommGraph, GraphError
from .plants import PlantKind, PlantSpec
from .regulators import make_phi
from .sim_engine import ConfigError, Family, Player, Scenario, step_plan, validate

DEFAULT_INTEGRATION = {"T": 100.0, "h": 1e-3, "stride": 10}
DEFAULT_TOLERANCE = 1e-2


def load_config(path) -> dict:
    """Read a config file, or a built-in when ``path`` looks like ``builtin:<name>``."""
    path = str(path)
    if path.startswith("builtin:"):
        return builtin_config(path.split(":", 1)[1])
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    return cfg


def set_path(cfg: dict, dotted: str, value) -> dict:
    """Return a copy of ``cfg`` with ``a.b.c = value``; ``value`` strings are YAML-parsed."""
    if isinstance(value, str):
        value = yaml.safe_load(value)
    cfg = copy.deepcopy(cfg)
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        key = _key(node, key)
        if node.get(key) is None:
            node[key] = {}
        node = node[key]
        if not isinstance(node, dict):
            raise ConfigError("cannot descend into a non-mapping", dotted)
    node[_key(node, keys[-1])] = value
    return cfg


def get_path(cfg: dict, dotted: str):
    node = cfg
    for key in dotted.split("."):
        if not isinstance(node, dict):
            raise ConfigError("no such key", dotted)
        key = _key(node, key)
        if key not in node:
            raise ConfigError("no such key", dotted)
        node = node[key]
    return node


def _key(node: dict, key: str):
    # player tables may be keyed by int after YAML parsing
    if key not in node and key.isdigit() and int(key) in node:
        return int(key)
    return key


def redact(cfg: dict) -> dict:
    """Copy of ``cfg`` with every ``hidden`` section blanked."""
    cfg = copy.deepcopy(cfg)
    players = cfg.get("players")
    if isinstance(players, dict):
        for entry in players.values():
            if isinstance(entry, dict) and "hidden" in entry:
                entry["hidden"] = "<redacted>"
    return cfg


# --- parsing ---------------------------------------------------------------

def _game(spec):
    if spec is None:
        raise ConfigError("missing game", "game")
    if isinstance(spec, str):
        name = spec.removeprefix("builtin:")
        try:
            return get_game(name)
        except GameError as exc:
            raise ConfigError(str(exc), "game") from None
    if not isinstance(spec, dict):
        raise ConfigError("must be a registry name or a mapping", "game")
    if "quadratic" in spec:
        q = spec["quadratic"]
        try:
            qs = QuadraticGameSpec(
                self_terms=tuple(np.asarray(m, dtype=float) for m in q["self_terms"]),
                linear_terms=tuple(np.asarray(v, dtype=float) for v in q["linear_terms"]),
                offsets=tuple(q.get("offsets") or [0.0] * len(q["linear_terms"])),
                couplings=tuple((int(i) - 1, int(j) - 1) for i, j in q.get("couplings", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad quadratic game: {exc}", "game.quadratic") from None
        ne = spec.get("analytic_ne")
        return qs.to_game(spec.get("name", "quadratic"), None if ne is None else np.asarray(ne, dtype=float))
    name = spec.get("registry") or spec.get("builtin")
    if name is None:
        raise ConfigError("expected 'quadratic', 'registry' or 'builtin'", "game")
    try:
        return get_game(name, **spec.get("params", {}))
    except GameError as exc:
        raise ConfigError(str(exc), "game") from None


def _graph(spec, n_players):
    if spec is None:
        raise ConfigError("missing graph", "graph")
    n = int(spec.get("nodes", n_players))
    directed = bool(spec.get("directed", False))
    edges = []
    for k, e in enumerate(spec.get("edges", [])):
        key = f"graph.edges[{k}]"
        if not isinstance(e, (list, tuple)) or len(e) not in (2, 3):
            raise ConfigError(f"edge {e!r} must be [i, j] or [i, j, weight]", key)
        i, j = int(e[0]), int(e[1])
        w = float(e[2]) if len(e) == 3 else 1.0
        if i == j:
            raise ConfigError(f"edge {e!r} is a self-loop on node {i}", key)
        if not (1 <= i <= n and 1 <= j <= n):
            raise ConfigError(f"edge {e!r} references a node outside 1..{n}", key)
        if not w > 0:
            raise ConfigError(f"edge {e!r} needs a positive weight", key)
        edges.append((i - 1, j - 1, w))
    try:
        return CommGraph.from_edges(n, edges, directed=directed)
    except GraphError as exc:
        raise ConfigError(str(exc), "graph") from None


def _estimator(spec, n_players):
    spec = spec or {}
    mode = spec.get("mode", "fixed")
    if mode == "adaptive":
        if "delta" in spec:
            raise ConfigError("adaptive mode takes no global delta", "estimator.delta")
        try:
            return AdaptiveGains(share=spec.get("share", "component"))
        except ValueError as exc:
            raise ConfigError(str(exc), "estimator.share") from None
    if mode != "fixed":
        raise ConfigError(f"unknown mode {mode!r}", "estimator.mode")
    delta = float(spec.get("delta", 10.0))
    bar = None
    overrides = spec.get("delta_bar")
    if overrides:
        bar = np.ones((n_players, n_players))
        for k, item in enumerate(overrides):
            i, j, val = int(item[0]), int(item[1]), float(item[2])
            if not (1 <= i <= n_players and 1 <= j <= n_players) or not val > 0:
                raise ConfigError(f"bad override {item!r}", f"estimator.delta_bar[{k}]")
            bar[i - 1, j - 1] = val
    try:
        return FixedGains(delta=delta, delta_bar=bar)
    except ValueError as exc:
        raise ConfigError(str(exc), "estimator.delta") from None


def _player(idx, spec, dim):
    key = f"players.{idx}"
    if not isinstance(spec, dict):
        raise ConfigError("must be a mapping", key)
    hidden = spec.get("hidden") or {}
    try:
        kind = PlantKind(spec.get("plant", "first_order"))
    except ValueError:
        raise ConfigError(f"unknown plant {spec.get('plant')!r}", f"{key}.plant") from None
    try:
        family = Family(spec.get("controller", "first_order"))
    except ValueError:
        raise ConfigError(f"unknown controller {spec.get('controller')!r}", f"{key}.controller") from None
    try:
        phi = make_phi(spec.get("phi"))
        phi2 = make_phi(spec.get("phi2")) if kind is PlantKind.GENERAL_SECOND_ORDER else None
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), f"{key}.phi") from None
    if "b" not in hidden:
        raise ConfigError("missing hidden gain b", f"{key}.hidden.b")
    try:
        plant = PlantSpec(
            kind=kind, dim=dim, b=hidden["b"], theta=hidden.get("theta", 1.0), phi=phi,
            b2=hidden.get("b2"), theta2=hidden.get("theta2"), phi2=phi2,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), f"{key}.hidden") from None
    try:
        return Player(plant=plant, family=family, x0=spec.get("x0", 0.0), v0=spec.get("v0"),
                      nussbaum=spec.get("nussbaum", "sin"))
    except ValueError as exc:
        raise ConfigError(str(exc), key) from None


def scenario_from_config(cfg: dict) -> Scenario:
    """Build and validate a scenario; raises ``ConfigError`` naming the bad key."""
    game = _game(cfg.get("game"))
    graph = _graph(cfg.get("graph"), game.n_players)
    est = _estimator(cfg.get("estimator"), game.n_players)
    players_cfg = cfg.get("players")
    players = None
    if players_cfg is not None:
        if not isinstance(players_cfg, dict):
            raise ConfigError("must map player numbers to player specs", "players")
        entries = {int(k): v for k, v in players_cfg.items()}
        expected = set(range(1, game.n_players + 1))
        if set(entries) != expected:
            raise ConfigError(f"need exactly players 1..{game.n_players}", "players")
        players = tuple(_player(i, entries[i], game.action_dims[i - 1]) for i in sorted(entries))
    sc = Scenario(game=game, graph=graph, players=players, estimator=est,
                  name=str(cfg.get("name", "custom")), meta={"config": redact(cfg)})
    validate(sc)
    return sc


def integration_settings(cfg: dict) -> dict:
    out = dict(DEFAULT_INTEGRATION)
    out.update(cfg.get("integration") or {})
    T, h, stride = float(out["T"]), float(out["h"]), int(out["stride"])
    if not T > 0:
        raise ConfigError("horizon must be positive", "integration.T")
    if not h > 0:
        raise ConfigError("step size must be positive", "integration.h")
    if stride < 1:
        raise ConfigError("stride must be at least 1", "integration.stride")
    raw = out.get("warmup") or []
    try:
        warmup = [(float(a), float(b)) for a, b in raw]
    except (TypeError, ValueError):
        raise ConfigError("warm-up must be a list of [t_end, h] pairs", "integration.warmup") from None
    step_plan(T, h, stride, warmup)
    return {"T": T, "h": h, "stride": stride, "warmup": warmup}


# --- built-ins ---------------------------------------------------------------

# Player-major initial actions of the 7 sensors.
X0 = [[-5, 3], [-4, -6], [1, 8], [0, -8], [-1, 10], [1, 2], [3, 0]]
B_FIRST = [[3, 3], [5, 5], [-2, -2], [1, 2], [-3, -3], [-1, -1], [2, 2]]
CYCLE7 = [[i, i % 7 + 1] for i in range(1, 8)]

# Stiff Nussbaum transients: h = 1e-3 diverges for these loops, 2.5e-4 does not.
_INTEGRATION = {"T": 300.0, "h": 2.5e-4, "stride": 100}
# The backstepping player's opening transient needs h <= 2.5e-7 for a few
# hundredths of a second; afterwards the Jacobian norm sits near 2e4.
_INTEGRATION_C = {"T": 200.0, "h": 1e-4, "stride": 100,
                  "warmup": [[0.05, 2.5e-7], [1.0, 2e-6], [5.0, 2e-5]]}


def _player_cfg(i, plant, controller, b, **extra):
    cfg = {
        "plant": plant,
        "controller": controller,
        "nussbaum": "sin",
        "phi": {"name": "linear", "c": float(i)},
        "x0": X0[i - 1],
        "hidden": {"b": b, "theta": [1.0, 1.0]},
    }
    cfg.update(extra)
    return cfg


def _base(name, **kw):
    cfg = {
        "name": name,
        "game": "connectivity",
        "graph": {"nodes": 7, "edges": CYCLE7, "directed": False},
        "estimator": {"mode": "fixed", "delta": 10.0},
        "integration": dict(_INTEGRATION),
        "tolerance": DEFAULT_TOLERANCE,
    }
    cfg.update(kw)
    return cfg


def _scenario_a():
    players = {i: _player_cfg(i, "first_order", "first_order", B_FIRST[i - 1]) for i in range(1, 8)}
    return _base("scenario_A", players=players)


def _scenario_a_flipped():
    cfg = _scenario_a()
    cfg["name"] = "scenario_A_flipped"
    for p in cfg["players"].values():
        p["hidden"]["b"] = [-v for v in p["hidden"]["b"]]
    return cfg


def _scenario_b():
    players = {i: _player_cfg(i, "second_order_chain", "second_order", B_FIRST[i - 1], v0=[0, 0])
               for i in range(1, 8)}
    return _base("scenario_B", players=players)


def _scenario_c():
    cfg = _scenario_b()
    cfg["name"] = "scenario_C"
    cfg["integration"] = {k: (list(map(list, v)) if k == "warmup" else v) for k, v in _INTEGRATION_C.items()}
    cfg["players"][7] = {
        "plant": "general_second_order",
        "controller": "backstepping",
        "nussbaum": "sin",
        "phi": {"name": "linear", "c": 7.0},
        "phi2": {"name": "component_linear", "c": 7.0, "index": 1},
        "x0": X0[6],
        "v0": [0, 0],
        "hidden": {"b": [2, 2], "theta": [1.0, 1.0], "b2": [2, 2], "theta2": [1.0, 1.0]},
    }
    return cfg


def _scenario_d():
    cfg = _scenario_a()
    cfg["name"] = "scenario_D"
    cfg["estimator"] = {"mode": "adaptive", "share": "component"}
    return cfg


def _estimator_only():
    return _base("estimator_only", integration={"T": 40.0, "h": 1e-3, "stride": 10})


BUILTINS = {
    "estimator_only": _estimator_only,
    "scenario_A": _scenario_a,
    "scenario_A_flipped": _scenario_a_flipped,
    "scenario_B": _scenario_b,
    "scenario_C": _scenario_c,
    "scenario_D": _scenario_d,
}


def builtins() -> list[str]:
    return list(BUILTINS)


def builtin_config(name: str) -> dict:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise ConfigError(f"unknown builtin {name!r}; available: {builtins()}") from None


def builtin_scenario(name: str) -> Scenario:
    return scenario_from_config(builtin_config(name))
