"""Closed-loop assembly, fixed-step RK4 integration and run diagnostics.

The closed loop stacks, in order: player actions ``x``, velocities ``v``,
regulator states (six slots per action coordinate), references ``y``,
estimates ``z`` and, with adaptive gains, ``delta``.  Estimator-only
scenarios carry just ``y``, ``z`` and ``delta``.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

from . import _kernel
from .estimator import AdaptiveGains, EstimatorState, FixedGains, estimator_rhs
from .game_model import GameDefinition
from .network import CommGraph, GraphError, is_connected, laplacian
from .plants import PlantKind, PlantSpec, PlantState, plant_rhs
from .regulators import (
    backstepping_control,
    first_order_control,
    first_order_control_no_uncertainty,
    nussbaum_code,
    second_order_control,
)

log = logging.getLogger(__name__)

REG_SLOTS = ("k", "theta_hat", "k2", "theta_bar1", "theta_bar2", "b_bar1")


class ConfigError(ValueError):
    """Invalid scenario; ``key`` names the offending config entry when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class DivergenceError(FloatingPointError):
    def __init__(self, message: str, t: float | None = None, where: str | None = None):
        super().__init__(message)
        self.t = t
        self.where = where


class Family(str, Enum):
    FIRST_ORDER = "first_order"
    FIRST_ORDER_NO_UNCERTAINTY = "first_order_no_uncertainty"
    SECOND_ORDER = "second_order"
    BACKSTEPPING = "backstepping"

    @property
    def code(self) -> int:
        return {
            Family.FIRST_ORDER: _kernel.FO,
            Family.FIRST_ORDER_NO_UNCERTAINTY: _kernel.FO_NU,
            Family.SECOND_ORDER: _kernel.SO,
            Family.BACKSTEPPING: _kernel.BS,
        }[self]

    @property
    def slots(self) -> tuple[str, ...]:
        if self is Family.BACKSTEPPING:
            return REG_SLOTS
        if self is Family.FIRST_ORDER_NO_UNCERTAINTY:
            return ("k",)
        return ("k", "theta_hat")


PLANT_FOR = {
    Family.FIRST_ORDER: PlantKind.FIRST_ORDER,
    Family.FIRST_ORDER_NO_UNCERTAINTY: PlantKind.FIRST_ORDER,
    Family.SECOND_ORDER: PlantKind.SECOND_ORDER_CHAIN,
    Family.BACKSTEPPING: PlantKind.GENERAL_SECOND_ORDER,
}


@dataclass(frozen=True)
class Player:
    plant: PlantSpec
    family: Family
    x0: np.ndarray
    v0: np.ndarray | None = None
    nussbaum: str = "sin"

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        nussbaum_code(self.nussbaum)
        d = self.plant.dim
        object.__setattr__(self, "x0", np.broadcast_to(np.asarray(self.x0, dtype=float), (d,)).copy())
        v0 = np.zeros(d) if self.v0 is None else self.v0
        object.__setattr__(self, "v0", np.broadcast_to(np.asarray(v0, dtype=float), (d,)).copy())

    def controller_view(self) -> dict:
        """Everything a regulator may know about this player: no ``b``, no ``theta``."""
        return {
            "family": self.family,
            "dim": self.plant.dim,
            "phi": self.plant.phi,
            "phi2": self.plant.phi2,
            "nussbaum": self.nussbaum,
        }


@dataclass(frozen=True)
class Scenario:
    game: GameDefinition
    graph: CommGraph
    players: tuple[Player, ...] | None
    estimator: FixedGains | AdaptiveGains = field(default_factory=FixedGains)
    name: str = "custom"
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def has_plants(self) -> bool:
        return self.players is not None


def validate(sc: Scenario) -> None:
    g, game = sc.graph, sc.game
    if g.n_nodes != game.n_players:
        raise ConfigError(f"graph has {g.n_nodes} nodes for {game.n_players} players", "graph")
    if not is_connected(g):
        raise ConfigError("communication graph is not connected", "graph")
    if isinstance(sc.estimator, FixedGains):
        try:
            sc.estimator.gain_matrix(game.n_players)
        except ValueError as exc:
            raise ConfigError(str(exc), "estimator.delta_bar") from None
    if sc.players is None:
        return
    if len(sc.players) != game.n_players:
        raise ConfigError(f"{len(sc.players)} players configured for a {game.n_players}-player game", "players")
    for i, p in enumerate(sc.players):
        key = f"players.{i + 1}"
        if p.plant.dim != game.action_dims[i]:
            raise ConfigError(f"plant dimension {p.plant.dim} != action dimension {game.action_dims[i]}", key)
        if PLANT_FOR[p.family] is not p.plant.kind:
            raise ConfigError(
                f"controller {p.family.value!r} cannot drive a {p.plant.kind.value!r} plant", f"{key}.controller")


# --- state layout ------------------------------------------------------------

@dataclass(frozen=True)
class Layout:
    n_players: int
    action_dims: tuple[int, ...]
    has_plants: bool
    delta_shape: tuple[int, int] | None

    @property
    def total_dim(self) -> int:
        return sum(self.action_dims)

    @property
    def offsets(self) -> np.ndarray:
        """Start of x, v, reg, y, z, delta and the end of the vector."""
        d, n = self.total_dim, self.n_players
        plant = d if self.has_plants else 0
        sizes = [plant, plant, len(REG_SLOTS) * plant, d, n * d,
                 0 if self.delta_shape is None else int(np.prod(self.delta_shape))]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def slices(self) -> dict[str, slice]:
        o = self.offsets
        names = ("x", "v", "reg", "y", "z", "delta")
        return {name: slice(int(o[i]), int(o[i + 1])) for i, name in enumerate(names)}

    def unpack(self, s: np.ndarray) -> dict[str, np.ndarray]:
        s = np.asarray(s)
        if s.shape[-1] != self.size:
            raise ValueError(f"state has length {s.shape[-1]}, layout expects {self.size}")
        d, n = self.total_dim, self.n_players
        sl = self.slices()
        lead = s.shape[:-1]
        out = {
            "x": s[..., sl["x"]],
            "v": s[..., sl["v"]],
            "reg": s[..., sl["reg"]].reshape(lead + (len(REG_SLOTS), d if self.has_plants else 0)),
            "y": s[..., sl["y"]],
            "z": s[..., sl["z"]].reshape(lead + (n, d)),
        }
        out["delta"] = None if self.delta_shape is None else s[..., sl["delta"]].reshape(lead + self.delta_shape)
        return out

    def pack(self, parts: dict) -> np.ndarray:
        s = np.zeros(self.size)
        for name, sl in self.slices().items():
            if sl.stop > sl.start and parts.get(name) is not None:
                s[sl] = np.asarray(parts[name], dtype=float).ravel()
        return s

    def describe(self, index: int) -> str:
        """Human-readable name of one state entry (1-based players/coordinates)."""
        d, n = self.total_dim, self.n_players
        owner = np.repeat(np.arange(n), self.action_dims)
        local = np.concatenate([np.arange(k) for k in self.action_dims])

        def coord(col):
            return f"{owner[col] + 1}_{local[col] + 1}"

        for name, sl in self.slices().items():
            if sl.start <= index < sl.stop:
                r = index - sl.start
                if name in ("x", "v", "y"):
                    return f"{name}_{coord(r)}"
                if name == "reg":
                    return f"{REG_SLOTS[r // d]}_{coord(r % d)}"
                if name == "z":
                    return f"z_{r // d + 1}[{coord(r % d)}]"
                cols = self.delta_shape[1]
                return f"delta_{r // cols + 1}_{r % cols + 1}"
        raise IndexError(index)


def layout_for(sc: Scenario) -> Layout:
    delta_shape = None
    if isinstance(sc.estimator, AdaptiveGains):
        delta_shape = sc.estimator.gain_shape(sc.game.n_players, sc.game.total_dim)
    return Layout(sc.game.n_players, sc.game.action_dims, sc.has_plants, delta_shape)


def initial_state(sc: Scenario) -> np.ndarray:
    """Players at ``x0``/``v0``; every other state at zero."""
    lay = layout_for(sc)
    parts = {}
    if sc.has_plants:
        parts["x"] = np.concatenate([p.x0 for p in sc.players])
        parts["v"] = np.concatenate([p.v0 for p in sc.players])
    return lay.pack(parts)


# --- reference (uncompiled) closed loop ----------------------------------------

class ClosedLoop:
    """Closed-loop vector field built from the public module functions."""

    def __init__(self, sc: Scenario):
        validate(sc)
        self.scenario = sc
        self.layout = layout_for(sc)
        self.game = sc.game
        self.graph = sc.graph

    def _estimator_part(self, parts):
        est = EstimatorState(parts["y"], parts["z"], parts["delta"])
        return estimator_rhs(est, self.game, self.graph, self.scenario.estimator)

    def evaluate(self, s: np.ndarray) -> dict[str, np.ndarray]:
        lay = self.layout
        parts = lay.unpack(np.asarray(s, dtype=float))
        ydot, zdot, ddot = self._estimator_part(parts)
        d = lay.total_dim
        out = {"y": ydot, "z": zdot, "delta": ddot}
        u = np.zeros(d if lay.has_plants else 0)
        reg_dot = np.zeros((len(REG_SLOTS), d if lay.has_plants else 0))
        xdot = np.zeros_like(u)
        vdot = np.zeros_like(u)
        if lay.has_plants:
            x, v, reg, y = parts["x"], parts["v"], parts["reg"], parts["y"]
            for i, p in enumerate(self.scenario.players):
                blk = self.game.block(i)
                ctrl = p.controller_view()
                ui, dreg = control_law(ctrl, x[blk], v[blk], y[blk], ydot[blk], reg[:, blk])
                u[blk] = ui
                reg_dot[:, blk] = dreg
                dx, dv = plant_rhs(p.plant, PlantState(x[blk], v[blk] if p.plant.kind.has_velocity else None), ui)
                xdot[blk] = dx
                if dv is not None:
                    vdot[blk] = dv
        out.update(x=xdot, v=vdot, reg=reg_dot, u=u)
        return out

    def rhs(self, s: np.ndarray) -> np.ndarray:
        out = self.evaluate(s)
        return self.layout.pack(out)


def control_law(ctrl: dict, x, v, y, ydot, reg) -> tuple[np.ndarray, np.ndarray]:
    """Apply a player's regulator to each of its coordinates.

    ``ctrl`` is ``Player.controller_view()``; ``reg`` has one row per
    regulator slot.  Returns the control and the slot derivatives.
    """
    fam, kind = ctrl["family"], nussbaum_code(ctrl["nussbaum"])
    phi = ctrl["phi"](x, v)
    dreg = np.zeros_like(reg)
    if fam is Family.FIRST_ORDER:
        u, dreg[0], dreg[1] = first_order_control(x, y, ydot, reg[0], reg[1], phi, kind)
    elif fam is Family.FIRST_ORDER_NO_UNCERTAINTY:
        u, dreg[0] = first_order_control_no_uncertainty(x, y, reg[0], kind)
    elif fam is Family.SECOND_ORDER:
        u, dreg[0], dreg[1] = second_order_control(x, y, v, ydot, v, reg[0], reg[1], phi, kind)
    else:
        dphi = ctrl["phi"].dx_diag(x, v)
        phi2 = ctrl["phi2"](x, v)
        res = backstepping_control(x, y, ydot, v, reg[0], reg[2], reg[1], reg[3], reg[4], reg[5],
                                   phi, dphi, phi2, kind)
        u = res[0]
        dreg[:] = np.vstack(res[3:9])
    return np.asarray(u, dtype=float), dreg


def assemble(sc: Scenario) -> tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Initial closed-loop state and its vector field."""
    loop = ClosedLoop(sc)
    return initial_state(sc), loop.rhs


# --- compiled path -----------------------------------------------------------

def kernel_params(sc: Scenario) -> _kernel.KernelParams | None:
    """Compiled-kernel parameters, or ``None`` if the scenario needs the reference path."""
    validate(sc)
    game = sc.game
    if game.quadratic is None:
        return None
    n, d = game.n_players, game.total_dim
    owner = game.owner.astype(np.int64)
    Q, c = game.quadratic.affine()
    a = sc.graph.adjacency
    rows, cols = np.nonzero(a)
    nbr_ptr = np.searchsorted(rows, np.arange(n + 1)).astype(np.int64)
    nbr_idx = cols.astype(np.int64)
    adaptive = isinstance(sc.estimator, AdaptiveGains)
    gains = np.zeros((n, d)) if adaptive else sc.estimator.gain_matrix(n)[:, owner]

    ctrl = _controller_arrays(sc)
    if ctrl is None:
        return None
    plant = _plant_arrays(sc)
    return _kernel.KernelParams(
        n=n, dim=d, owner=owner, has_plants=sc.has_plants, offsets=layout_for(sc).offsets,
        Q=Q, c=c, adj=np.ascontiguousarray(a), nbr_ptr=nbr_ptr, nbr_idx=nbr_idx,
        adaptive=adaptive, share_channel=adaptive and sc.estimator.share == "channel",
        gains=np.ascontiguousarray(gains), **ctrl, **plant,
    )


def _controller_arrays(sc: Scenario):
    d = sc.game.total_dim
    out = {
        "fam": np.zeros(d, np.int64), "nkind": np.zeros(d, np.int64),
        "phi_coef": np.zeros(d), "phi_src": np.arange(d, dtype=np.int64), "phi_v": np.zeros(d, np.bool_),
        "phi2_coef": np.zeros(d), "phi2_src": np.arange(d, dtype=np.int64), "phi2_v": np.zeros(d, np.bool_),
        "dphi1": np.zeros(d),
    }
    if not sc.has_plants:
        return out
    for i, p in enumerate(sc.players):
        view = p.controller_view()
        blk = sc.game.block(i)
        out["fam"][blk] = view["family"].code
        out["nkind"][blk] = nussbaum_code(view["nussbaum"])
        for tag, phi in (("phi", view["phi"]), ("phi2", view["phi2"])):
            if phi is None:
                continue
            enc = phi.encode(view["dim"])
            if enc is None:
                return None
            coef, src, from_v = enc
            out[f"{tag}_coef"][blk] = coef
            out[f"{tag}_src"][blk] = np.asarray(src) + blk.start
            out[f"{tag}_v"][blk] = from_v
            if tag == "phi":
                own = (np.asarray(src) == np.arange(view["dim"])) & ~np.asarray(from_v)
                out["dphi1"][blk] = np.where(own, coef, 0.0)
    return out


def _plant_arrays(sc: Scenario):
    d = sc.game.total_dim
    out = {"pkind": np.zeros(d, np.int64), "b1": np.ones(d), "th1": np.zeros(d),
           "b2": np.ones(d), "th2": np.zeros(d)}
    if not sc.has_plants:
        return out
    codes = {PlantKind.FIRST_ORDER: _kernel.P_FIRST, PlantKind.SECOND_ORDER_CHAIN: _kernel.P_CHAIN,
             PlantKind.GENERAL_SECOND_ORDER: _kernel.P_GENERAL}
    for i, p in enumerate(sc.players):
        blk = sc.game.block(i)
        out["pkind"][blk] = codes[p.plant.kind]
        out["b1"][blk] = p.plant.b
        out["th1"][blk] = p.plant.theta
        if p.plant.b2 is not None:
            out["b2"][blk] = p.plant.b2
            out["th2"][blk] = p.plant.theta2
    return out


# --- integration ---------------------------------------------------------------

def rk4_step(rhs: Callable[[np.ndarray], np.ndarray], state: np.ndarray, h: float,
             t: float | None = None, layout: Layout | None = None) -> np.ndarray:
    """One classical Runge-Kutta step of size ``h``."""
    if not h > 0:
        raise ValueError("step size must be positive")
    k1 = _finite(rhs(state), t, layout)
    k2 = _finite(rhs(state + 0.5 * h * k1), t, layout)
    k3 = _finite(rhs(state + 0.5 * h * k2), t, layout)
    k4 = _finite(rhs(state + h * k3), t, layout)
    return state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _finite(v, t, layout):
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        idx = int(np.flatnonzero(~np.isfinite(v))[0])
        where = layout.describe(idx) if layout is not None else f"index {idx}"
        raise DivergenceError(f"non-finite derivative at t={t} in {where}", t, where)
    return v


@dataclass
class RunLog:
    t: np.ndarray
    states: np.ndarray
    u: np.ndarray
    kdot: np.ndarray
    kdot2: np.ndarray
    ydot_sq: np.ndarray
    layout: Layout
    scenario: Scenario
    h: float
    T: float
    stride: int
    diverged: bool = False
    divergence: str | None = None
    meta: dict = field(default_factory=dict)

    def parts(self) -> dict[str, np.ndarray]:
        return self.layout.unpack(self.states)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _n_steps(T: float, h: float) -> int:
    ratio = T / h
    n = int(round(ratio))
    return n if abs(n - ratio) < 1e-9 * max(1.0, ratio) else int(np.floor(ratio))


def scenario_hash(sc: Scenario, T: float, h: float, stride: int, warmup=()) -> str:
    payload = json.dumps({"meta": sc.meta, "name": sc.name, "T": T, "h": h, "stride": stride,
                          "warmup": [list(w) for w in warmup]}, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _whole(a: float, b: float) -> int | None:
    """``a / b`` if it is (numerically) an integer, else None."""
    r = a / b
    n = int(round(r))
    return n if abs(n - r) < 1e-9 * max(1.0, r) else None


def step_plan(T: float, h: float, stride: int, warmup=()) -> list[tuple[int, float, int]]:
    """Split ``[0, T]`` into constant-step segments ``(n_steps, h, stride)``.

    ``warmup`` is a list of ``(t_end, h_w)`` pairs run before the main step
    ``h``; useful when the opening transient is much stiffer than the rest of
    the run.  Every segment samples on the same grid of spacing ``h*stride``,
    so each ``t_end`` must lie on that grid and each ``h_w`` must divide it.
    """
    dt = h * stride
    plan, t0 = [], 0.0
    for t_end, hw in warmup:
        t_end, hw = float(t_end), float(hw)
        if not (hw > 0 and t0 < t_end <= T):
            raise ConfigError(f"warm-up segment ({t_end}, {hw}) must have h>0 and end in ({t0}, {T}]",
                              "integration.warmup")
        sw = _whole(dt, hw)
        if sw is None or _whole(t_end, dt) is None:
            raise ConfigError(f"warm-up segment ({t_end}, {hw}) is off the sampling grid of spacing {dt:g}",
                              "integration.warmup")
        plan.append((_whole(t_end - t0, hw) or int(round((t_end - t0) / hw)), hw, sw))
        t0 = t_end
    if T > t0 or not plan:
        plan.append((_n_steps(T - t0, h), float(h), int(stride)))
    return plan


def integrate(sc: Scenario, T: float, h: float = 1e-3, stride: int = 10, compiled: bool | None = None,
              blowup: float = 1e12, warmup=()) -> RunLog:
    """Integrate the closed loop on ``[0, T]`` with fixed-step RK4.

    Logs every ``stride``-th step.  A run whose state turns non-finite or
    exceeds ``blowup`` in magnitude stops and comes back flagged as diverged
    with the samples recorded so far.  ``compiled=None`` uses the compiled
    kernel whenever the scenario allows it.  See ``step_plan`` for
    ``warmup``.
    """
    if not T >= 0:
        raise ValueError("horizon must be nonnegative")
    if not h > 0:
        raise ValueError("step size must be positive")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    warmup = [tuple(map(float, w)) for w in warmup]
    plan = step_plan(T, h, stride, warmup)
    lay = layout_for(sc)
    s = initial_state(sc)
    params = kernel_params(sc) if compiled in (None, True) else None
    if compiled and params is None:
        raise ConfigError("scenario has no compiled form (non-quadratic game or custom regressor)")

    chunks, t0, diverged, note = [], 0.0, False, None
    for n_steps, hs, ss in plan:
        if params is not None:
            states, u, kd, kd2, ysq, n_rec, bad_step, bad_idx = _kernel.integrate(
                s, params, hs, n_steps, ss, float(blowup))
            diverged = bad_step >= 0
            if diverged:
                note = f"diverged at t={t0 + bad_step * hs:.6g} in {lay.describe(int(bad_idx))}"
            out = states[:n_rec], u[:n_rec], kd[:n_rec], kd2[:n_rec], ysq[:n_rec]
        else:
            *out, diverged, note = _integrate_reference(sc, lay, s, hs, n_steps, ss, blowup, t0)
        # segments share their boundary sample
        chunks.append(out if not chunks else tuple(a[1:] for a in out))
        if diverged:
            break
        s = out[0][-1]
        t0 += n_steps * hs

    states, u, kd, kd2, ysq = (np.concatenate(c) for c in zip(*chunks))
    if diverged:
        log.warning("%s: %s", sc.name, note)
    t = np.arange(states.shape[0]) * h * stride
    return RunLog(t=t, states=states, u=u, kdot=kd, kdot2=kd2, ydot_sq=ysq, layout=lay, scenario=sc,
                  h=float(h), T=float(T), stride=int(stride), diverged=bool(diverged), divergence=note,
                  meta={"config_hash": scenario_hash(sc, T, h, stride, warmup), "h": float(h), "T": float(T),
                        "stride": int(stride), "warmup": [list(w) for w in warmup],
                        "compiled": params is not None})


def _integrate_reference(sc, lay, s0, h, n_steps, stride, blowup, t0=0.0):
    loop = ClosedLoop(sc)
    d = lay.total_dim if lay.has_plants else 0
    states, us, kds, kd2s, ysqs = [], [], [], [], []
    s = s0.copy()
    for step in range(n_steps + 1):
        if step % stride == 0:
            out = loop.evaluate(s)
            states.append(s.copy())
            us.append(out["u"])
            kds.append(out["reg"][0] if d else np.zeros(0))
            kd2s.append(out["reg"][2] if d else np.zeros(0))
            ysqs.append(float(out["y"] @ out["y"]))
        if step == n_steps:
            break
        try:
            s = rk4_step(loop.rhs, s, h, t=t0 + step * h, layout=lay)
        except DivergenceError as exc:
            return (*_stack(states, us, kds, kd2s, ysqs), True, str(exc))
        bad = np.flatnonzero(~np.isfinite(s) | (np.abs(s) > blowup))
        if bad.size:
            note = f"diverged at t={t0 + (step + 1) * h:.6g} in {lay.describe(int(bad[0]))}"
            return (*_stack(states, us, kds, kd2s, ysqs), True, note)
    return (*_stack(states, us, kds, kd2s, ysqs), False, None)


def _stack(states, us, kds, kd2s, ysqs):
    return np.array(states), np.array(us), np.array(kds), np.array(kd2s), np.array(ysqs)


# --- diagnostics ---------------------------------------------------------------

def _coord_names(dims) -> list[str]:
    return [f"{i + 1}_{c + 1}" for i, d in enumerate(dims) for c in range(d)]


def metrics(log: RunLog, x_star) -> dict:
    """Summary of a finished run.

    Plateau measures are the spread (max - min) of each regulator state over
    the last 10% of samples; the tail fraction is the share of the integral
    of ``||dy/dt||^2`` accumulated in the last 20% of the horizon.
    """
    if log.diverged:
        raise DivergenceError(f"cannot summarise a diverged run: {log.divergence}")
    if x_star is None:
        raise ValueError("metrics need a reference equilibrium")
    x_star = np.asarray(x_star, dtype=float)
    lay, sc = log.layout, log.scenario
    parts = log.parts()
    n = log.states.shape[0]
    tail10 = slice(max(0, n - max(1, int(np.ceil(0.1 * n)))), n)

    total = float(trapezoid(log.ydot_sq, log.t)) if n > 1 else 0.0
    cut = log.t[-1] * 0.8
    mask = log.t >= cut
    tail = float(trapezoid(log.ydot_sq[mask], log.t[mask])) if mask.sum() > 1 else 0.0
    summary = {
        "final_y_error": float(np.max(np.abs(parts["y"][-1] - x_star))),
        "ydot_sq_integral": total,
        "ydot_sq_tail_fraction": tail / total if total > 0 else 0.0,
        "samples": n,
    }
    if lay.has_plants:
        summary["final_error"] = float(np.max(np.abs(parts["x"][-1] - x_star)))
        channels = {}
        names = _coord_names(lay.action_dims)
        worst_plateau = 0.0
        worst_kdot = 0.0
        for i, p in enumerate(sc.players):
            blk = sc.game.block(i)
            for col in range(blk.start, blk.stop):
                ch = {}
                for slot in p.family.slots:
                    series = parts["reg"][:, REG_SLOTS.index(slot), col]
                    ch[f"max_abs_{slot}"] = float(np.max(np.abs(series)))
                    ch[f"plateau_{slot}"] = float(np.ptp(series[tail10]))
                    worst_plateau = max(worst_plateau, ch[f"plateau_{slot}"])
                ch["terminal_abs_kdot"] = float(abs(log.kdot[-1, col]))
                worst_kdot = max(worst_kdot, ch["terminal_abs_kdot"])
                if p.family is Family.BACKSTEPPING:
                    ch["terminal_abs_kdot2"] = float(abs(log.kdot2[-1, col]))
                    worst_kdot = max(worst_kdot, ch["terminal_abs_kdot2"])
                ch["max_abs_u"] = float(np.max(np.abs(log.u[:, col])))
                if p.plant.kind.has_velocity:
                    ch["max_abs_v"] = float(np.max(np.abs(parts["v"][:, col])))
                    ch["final_abs_v"] = float(abs(parts["v"][-1, col]))
                ch["final_abs_error"] = float(abs(parts["x"][-1, col] - x_star[col]))
                channels[names[col]] = ch
        summary["channels"] = channels
        summary["max_plateau"] = worst_plateau
        summary["max_terminal_abs_kdot"] = worst_kdot
        vs = [ch["final_abs_v"] for ch in channels.values() if "final_abs_v" in ch]
        if vs:
            summary["max_final_abs_v"] = float(max(vs))
            summary["max_abs_v"] = float(max(ch["max_abs_v"] for ch in channels.values() if "max_abs_v" in ch))
    if parts["delta"] is not None:
        delta = parts["delta"].reshape(n, -1)
        steps = np.diff(delta, axis=0)
        summary["delta"] = {
            "max": float(np.max(delta)),
            "min": float(np.min(delta)),
            "min_increment": float(np.min(steps)) if steps.size else 0.0,
            "final_plateau": float(np.max(np.ptp(delta[tail10], axis=0))),
        }
    return summary
