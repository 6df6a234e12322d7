"""Reference generator: each player tracks estimates of every action.

Player ``i`` keeps ``z[i]``, its estimate of the whole action profile, and a
reference ``y`` for its own block.  The reference follows the negative own
gradient evaluated at the player's estimate; estimates are pulled toward
neighbours' estimates and, where ``i`` hears ``j`` directly, toward ``y_j``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .game_model import GameDefinition
from .network import CommGraph, laplacian


class EstimatorDivergence(FloatingPointError):
    pass


@dataclass(frozen=True)
class FixedGains:
    """Gains ``delta * delta_bar[i, j]``; ``delta_bar`` defaults to all ones."""

    delta: float = 10.0
    delta_bar: np.ndarray | None = None

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise ValueError("delta must be positive")
        if self.delta_bar is not None:
            db = np.asarray(self.delta_bar, dtype=float)
            if db.ndim != 2 or db.shape[0] != db.shape[1] or np.any(db <= 0) or not np.all(np.isfinite(db)):
                raise ValueError("delta_bar must be a square matrix of positive entries")
            object.__setattr__(self, "delta_bar", db)

    def gain_matrix(self, n_players: int) -> np.ndarray:
        """Per (estimator, target player) gain."""
        if self.delta_bar is None:
            return np.full((n_players, n_players), float(self.delta))
        if self.delta_bar.shape != (n_players, n_players):
            raise ValueError(f"delta_bar must be {n_players}x{n_players}")
        return self.delta * self.delta_bar


@dataclass(frozen=True)
class AdaptiveGains:
    """Locally adapted gains.

    ``share="component"`` keeps one gain per (estimator, target coordinate);
    ``share="channel"`` keeps one per (estimator, target player) and feeds it
    the squared error summed over that player's coordinates.
    """

    share: str = "component"

    def __post_init__(self):
        if self.share not in ("component", "channel"):
            raise ValueError("share must be 'component' or 'channel'")

    def gain_shape(self, n_players: int, total_dim: int) -> tuple[int, int]:
        return (n_players, total_dim) if self.share == "component" else (n_players, n_players)


@dataclass
class EstimatorState:
    y: np.ndarray
    z: np.ndarray
    delta: np.ndarray | None = None

    @classmethod
    def zeros(cls, game: GameDefinition, mode=None) -> "EstimatorState":
        n, total = game.n_players, game.total_dim
        delta = None
        if isinstance(mode, AdaptiveGains):
            delta = np.zeros(mode.gain_shape(n, total))
        return cls(np.zeros(total), np.zeros((n, total)), delta)


def consensus_error(y, z, g: CommGraph, owner) -> np.ndarray:
    """``sum_k a_ik (z_i - z_k) + a_i,owner (z_i - y)`` for every estimate entry."""
    a = g.adjacency
    return laplacian(g) @ z + a[:, owner] * (z - y[None, :])


def estimator_rhs(s: EstimatorState, game: GameDefinition, g: CommGraph, mode=FixedGains()):
    """Time derivatives ``(dy, dz, ddelta)`` of the reference generator.

    ``ddelta`` is ``None`` in fixed-gain mode.
    """
    n, total = game.n_players, game.total_dim
    y = np.asarray(s.y, dtype=float)
    z = np.asarray(s.z, dtype=float)
    if g.n_nodes != n:
        raise ValueError(f"graph has {g.n_nodes} nodes for {n} players")
    if y.shape != (total,) or z.shape != (n, total):
        raise ValueError(f"expected y of shape ({total},) and z of shape ({n}, {total})")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
        raise EstimatorDivergence("non-finite estimator state")

    owner = game.owner
    ydot = np.concatenate([-game.partial_gradient(i, z[i]) for i in range(n)])
    err = consensus_error(y, z, g, owner)

    if isinstance(mode, FixedGains):
        gains = mode.gain_matrix(n)[:, owner]
        return ydot, -gains * err, None

    if not isinstance(mode, AdaptiveGains):
        raise TypeError(f"unknown estimator mode {mode!r}")
    delta = np.asarray(s.delta, dtype=float)
    if delta.shape != mode.gain_shape(n, total):
        raise ValueError(f"adaptive gains have shape {delta.shape}, expected {mode.gain_shape(n, total)}")
    if not np.all(np.isfinite(delta)):
        raise EstimatorDivergence("non-finite adaptive gains")
    sq = err * err
    if mode.share == "component":
        return ydot, -delta * err, sq
    per_player = np.zeros((n, n))
    np.add.at(per_player.T, owner, sq.T)
    return ydot, -delta[:, owner] * err, per_player
