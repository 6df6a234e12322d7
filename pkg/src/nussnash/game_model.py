"""Games, pseudo-gradients and Nash equilibrium oracles.

A game is a list of per-player costs ``f_i(x)`` over the stacked action
profile ``x``.  Player ``i`` controls the block ``x[game.block(i)]``.  The
pseudo-gradient stacks each player's gradient of its own cost with respect to
its own block; for the strongly monotone games handled here its unique zero is
the Nash equilibrium.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Objective = Callable[[np.ndarray], float]
Gradient = Callable[[np.ndarray], np.ndarray]

_GAME_REGISTRY: dict[str, Callable[..., "GameDefinition"]] = {}


class GameError(ValueError):
    """Malformed game or profile."""


class NashSolverError(RuntimeError):
    """Raised when the fixed-point iteration does not reach tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class QuadraticGameSpec:
    """Declarative quadratic game.

    Player ``i`` pays ``x_i^T M_ii x_i + x_i^T m_i + offset_i`` plus
    ``||x_i - x_j||^2`` for every coupling ``(i, j)`` it owns.  Couplings are
    directed: the pair ``(i, j)`` only enters player ``i``'s cost.
    """

    self_terms: tuple[np.ndarray, ...]
    linear_terms: tuple[np.ndarray, ...]
    offsets: tuple[float, ...]
    couplings: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        n = len(self.self_terms)
        if n == 0 or len(self.linear_terms) != n or len(self.offsets) != n:
            raise GameError("self_terms, linear_terms and offsets must have one entry per player")
        mats = tuple(np.atleast_2d(np.asarray(m, dtype=float)) for m in self.self_terms)
        vecs = tuple(np.atleast_1d(np.asarray(v, dtype=float)) for v in self.linear_terms)
        for i, (m, v) in enumerate(zip(mats, vecs)):
            d = v.shape[0]
            if m.shape != (d, d):
                raise GameError(f"player {i}: self term has shape {m.shape}, expected {(d, d)}")
            if not (np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
                raise GameError(f"player {i}: non-finite coefficients")
        for i, j in self.couplings:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise GameError(f"invalid coupling ({i}, {j}) for {n} players")
            if vecs[i].shape != vecs[j].shape:
                raise GameError(f"coupling ({i}, {j}) joins players of different dimension")
        object.__setattr__(self, "self_terms", mats)
        object.__setattr__(self, "linear_terms", vecs)
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))
        object.__setattr__(self, "couplings", tuple((int(i), int(j)) for i, j in self.couplings))

    @property
    def action_dims(self) -> tuple[int, ...]:
        return tuple(v.shape[0] for v in self.linear_terms)

    def affine(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(Q, c)`` with pseudo-gradient ``P(x) = Q x + c``."""
        dims = self.action_dims
        offs = np.concatenate([[0], np.cumsum(dims)])
        total = offs[-1]
        Q = np.zeros((total, total))
        c = np.zeros(total)
        for i, (m, v) in enumerate(zip(self.self_terms, self.linear_terms)):
            bi = slice(offs[i], offs[i + 1])
            Q[bi, bi] += m + m.T
            c[bi] = v
        for i, j in self.couplings:
            bi = slice(offs[i], offs[i + 1])
            bj = slice(offs[j], offs[j + 1])
            eye = np.eye(dims[i])
            Q[bi, bi] += 2 * eye
            Q[bi, bj] -= 2 * eye
        return Q, c

    def to_game(self, name: str = "quadratic", analytic_ne: np.ndarray | None = None) -> "GameDefinition":
        dims = self.action_dims
        offs = np.concatenate([[0], np.cumsum(dims)])
        Q, c = self.affine()
        owned: list[list[int]] = [[] for _ in dims]
        for i, j in self.couplings:
            owned[i].append(j)

        def make(i):
            bi = slice(offs[i], offs[i + 1])
            m, v, off = self.self_terms[i], self.linear_terms[i], self.offsets[i]

            def objective(x):
                xi = x[bi]
                cost = xi @ m @ xi + xi @ v + off
                for j in owned[i]:
                    diff = xi - x[offs[j]:offs[j + 1]]
                    cost += diff @ diff
                return float(cost)

            def gradient(x):
                return Q[bi] @ x + c[bi]

            return objective, gradient

        pairs = [make(i) for i in range(len(dims))]
        return GameDefinition(
            action_dims=dims,
            objectives=tuple(p[0] for p in pairs),
            gradients=tuple(p[1] for p in pairs),
            analytic_ne=analytic_ne,
            name=name,
            quadratic=self,
        )


@dataclass(frozen=True)
class GameDefinition:
    action_dims: tuple[int, ...]
    objectives: tuple[Objective, ...]
    gradients: tuple[Gradient, ...]
    analytic_ne: np.ndarray | None = None
    name: str = "custom"
    quadratic: QuadraticGameSpec | None = field(default=None, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.action_dims)
        if not dims or min(dims) < 1:
            raise GameError("every player needs a positive action dimension")
        if len(self.objectives) != len(dims) or len(self.gradients) != len(dims):
            raise GameError("one objective and one gradient per player required")
        object.__setattr__(self, "action_dims", dims)
        if self.analytic_ne is not None:
            ne = np.asarray(self.analytic_ne, dtype=float)
            if ne.shape != (sum(dims),):
                raise GameError(f"analytic_ne has shape {ne.shape}, expected ({sum(dims)},)")
            object.__setattr__(self, "analytic_ne", ne)

    @property
    def n_players(self) -> int:
        return len(self.action_dims)

    @property
    def total_dim(self) -> int:
        return sum(self.action_dims)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.action_dims)]).astype(int)

    @property
    def owner(self) -> np.ndarray:
        """Player index owning each stacked coordinate."""
        return np.repeat(np.arange(self.n_players), self.action_dims)

    def block(self, i: int) -> slice:
        offs = self.offsets
        return slice(int(offs[i]), int(offs[i + 1]))

    def _check_profile(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.total_dim,):
            raise GameError(f"profile has shape {x.shape}, expected ({self.total_dim},)")
        return x

    def objective(self, i: int, x) -> float:
        return float(self.objectives[i](self._check_profile(x)))

    def partial_gradient(self, i: int, x) -> np.ndarray:
        g = np.asarray(self.gradients[i](self._check_profile(x)), dtype=float).reshape(-1)
        if g.shape != (self.action_dims[i],):
            raise GameError(f"gradient of player {i} has shape {g.shape}")
        return g


def register_game(name: str):
    """Register a game factory under ``name`` so configs can refer to it."""

    def deco(factory):
        _GAME_REGISTRY[name] = factory
        return factory

    return deco


def get_game(name: str, **kwargs) -> GameDefinition:
    try:
        factory = _GAME_REGISTRY[name]
    except KeyError:
        raise GameError(f"unknown game {name!r}; registered: {sorted(_GAME_REGISTRY)}") from None
    return factory(**kwargs)


def registered_games() -> list[str]:
    return sorted(_GAME_REGISTRY)


# 7 mobile sensors; player i owns ||x_i - x_j||^2 for each j listed.
CONNECTIVITY_COUPLINGS = ((1, 2), (2, 3), (3, 1), (4, 3), (5, 1), (5, 6), (6, 3), (6, 1), (7, 2))


@register_game("connectivity")
def connectivity_game() -> GameDefinition:
    """Connectivity control game among 7 mobile sensors in the plane."""
    n = 7
    players = np.arange(1, n + 1)
    spec = QuadraticGameSpec(
        self_terms=tuple(np.diag([2.0 * i, float(i)]) for i in players),
        linear_terms=tuple(np.array([i, 2.0 * i]) for i in players),
        offsets=tuple(float(i * i) for i in players),
        couplings=tuple((i - 1, j - 1) for i, j in CONNECTIVITY_COUPLINGS),
    )
    return spec.to_game("connectivity", analytic_ne=np.tile([-0.25, -1.0], n))


def pseudo_gradient(game: GameDefinition, x) -> np.ndarray:
    x = game._check_profile(x)
    return np.concatenate([game.partial_gradient(i, x) for i in range(game.n_players)])


def _as_box(sample_box, dim: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = sample_box
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,))
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi >= lo)):
        raise GameError("sample_box must be a bounded (low, high) pair")
    return lo, hi


def _sample_pairs(game, sample_box, n_pairs, rng):
    if n_pairs < 1:
        raise GameError("n_pairs must be at least 1")
    rng = np.random.default_rng(rng)
    lo, hi = _as_box(sample_box, game.total_dim)
    xs = rng.uniform(lo, hi, size=(n_pairs, game.total_dim))
    zs = rng.uniform(lo, hi, size=(n_pairs, game.total_dim))
    return xs, zs


def estimate_monotonicity(game: GameDefinition, sample_box=(-10.0, 10.0), n_pairs: int = 200, rng=0) -> float:
    """Strong-monotonicity constant of the pseudo-gradient.

    Exact ``lambda_min((Q + Q^T) / 2)`` for quadratic games, otherwise the
    smallest ratio ``(x - z)^T (P(x) - P(z)) / ||x - z||^2`` over random pairs
    drawn from ``sample_box``.
    """
    if game.quadratic is not None:
        Q, _ = game.quadratic.affine()
        return float(np.linalg.eigvalsh(0.5 * (Q + Q.T))[0])
    xs, zs = _sample_pairs(game, sample_box, n_pairs, rng)
    best = np.inf
    for x, z in zip(xs, zs):
        dx = x - z
        nrm2 = dx @ dx
        if nrm2 == 0.0:
            continue
        best = min(best, dx @ (pseudo_gradient(game, x) - pseudo_gradient(game, z)) / nrm2)
    if not np.isfinite(best):
        raise GameError("all sampled pairs were degenerate")
    return float(best)


def estimate_lipschitz(game: GameDefinition, i: int, sample_box=(-10.0, 10.0), n_pairs: int = 200, rng=0) -> float:
    """Lipschitz constant of player ``i``'s own-action gradient."""
    if game.quadratic is not None:
        Q, _ = game.quadratic.affine()
        return float(np.linalg.norm(Q[game.block(i)], 2))
    xs, zs = _sample_pairs(game, sample_box, n_pairs, rng)
    best = -np.inf
    for x, z in zip(xs, zs):
        nrm = np.linalg.norm(x - z)
        if nrm == 0.0:
            continue
        best = max(best, np.linalg.norm(game.partial_gradient(i, x) - game.partial_gradient(i, z)) / nrm)
    if not np.isfinite(best):
        raise GameError("all sampled pairs were degenerate")
    return float(best)


def _stacked_lipschitz(game, sample_box, n_pairs, rng) -> float:
    xs, zs = _sample_pairs(game, sample_box, n_pairs, rng)
    best = 0.0
    for x, z in zip(xs, zs):
        nrm = np.linalg.norm(x - z)
        if nrm > 0.0:
            best = max(best, np.linalg.norm(pseudo_gradient(game, x) - pseudo_gradient(game, z)) / nrm)
    return best


def solve_nash(
    game: GameDefinition,
    tol: float = 1e-9,
    max_iter: int = 200_000,
    x0=None,
    sample_box=(-10.0, 10.0),
    n_pairs: int = 200,
    rng=0,
) -> np.ndarray:
    """Nash equilibrium of a strongly monotone game.

    Quadratic games are solved as the linear system ``Q x = -c``.  Other games
    run ``x <- x - tau P(x)`` with ``tau = m / L^2`` from sampled estimates.
    """
    if game.quadratic is not None:
        Q, c = game.quadratic.affine()
        x = np.linalg.solve(Q, -c)
        res = float(np.max(np.abs(pseudo_gradient(game, x))))
        if res >= tol:
            # one refinement step absorbs round-off on ill-conditioned Q
            x = x - np.linalg.solve(Q, pseudo_gradient(game, x))
            res = float(np.max(np.abs(pseudo_gradient(game, x))))
        if res >= tol:
            raise NashSolverError("linear solve did not reach tolerance", res)
        return x

    m = estimate_monotonicity(game, sample_box, n_pairs, rng)
    if m <= 0.0:
        raise NashSolverError("game is not strongly monotone on the sample box", np.inf)
    lip = _stacked_lipschitz(game, sample_box, n_pairs, rng)
    tau = m / lip**2 if lip > 0 else 1.0
    x = np.zeros(game.total_dim) if x0 is None else np.array(x0, dtype=float)
    res = np.inf
    for _ in range(max_iter):
        p = pseudo_gradient(game, x)
        res = float(np.max(np.abs(p)))
        if res < tol:
            return x
        x = x - tau * p
    raise NashSolverError(f"no convergence after {max_iter} iterations", res)


def gradient_check(
    game: GameDefinition,
    n_samples: int = 20,
    sample_box=(-10.0, 10.0),
    step: float = 1e-5,
    rng=0,
) -> float:
    """Worst relative error between analytic partial gradients and central differences."""
    rng = np.random.default_rng(rng)
    lo, hi = _as_box(sample_box, game.total_dim)
    worst = 0.0
    for _ in range(n_samples):
        x = rng.uniform(lo, hi)
        for i in range(game.n_players):
            blk = game.block(i)
            fd = np.empty(game.action_dims[i])
            for c, col in enumerate(range(blk.start, blk.stop)):
                xp, xm = x.copy(), x.copy()
                xp[col] += step
                xm[col] -= step
                fd[c] = (game.objective(i, xp) - game.objective(i, xm)) / (2 * step)
            g = game.partial_gradient(i, x)
            err = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1.0)
            worst = max(worst, float(err))
    return worst


def scalar_game(objectives: Sequence[Objective], gradients: Sequence[Gradient], name: str = "custom",
                analytic_ne=None) -> GameDefinition:
    """Game where every player picks one real number."""
    return GameDefinition(
        action_dims=(1,) * len(objectives),
        objectives=tuple(objectives),
        gradients=tuple(gradients),
        analytic_ne=analytic_ne,
        name=name,
    )
