"""Two-player finite games: payoffs, best replies, Nash gap, exact values."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .landscape import TAU_TIE, argmax_set
from .markov_core import StateSpace

NASH_TOL = 1e-9


@dataclass(frozen=True)
class TwoPlayerGame:
    """Payoffs U1, U2 indexed by (row action of player 1, column action of player 2)."""

    U1: np.ndarray
    U2: np.ndarray
    E1: Optional[StateSpace] = None
    E2: Optional[StateSpace] = None

    def __post_init__(self):
        U1 = np.asarray(self.U1, dtype=float)
        U2 = np.asarray(self.U2, dtype=float)
        if U1.ndim != 2 or U1.shape != U2.shape:
            raise ValueError(f"payoff matrices must share a 2-d shape, got {U1.shape} and {U2.shape}")
        if not (np.all(np.isfinite(U1)) and np.all(np.isfinite(U2))):
            raise ValueError("payoffs must be finite")
        object.__setattr__(self, "U1", U1)
        object.__setattr__(self, "U2", U2)
        if self.E1 is None:
            object.__setattr__(self, "E1", StateSpace.of_size(U1.shape[0]))
        if self.E2 is None:
            object.__setattr__(self, "E2", StateSpace.of_size(U1.shape[1]))
        if (self.E1.size, self.E2.size) != U1.shape:
            raise ValueError("action labels do not match payoff shape")

    @classmethod
    def zero_sum(cls, U1, **kw) -> "TwoPlayerGame":
        U1 = np.asarray(U1, dtype=float)
        return cls(U1, -U1, **kw)

    @classmethod
    def potential(cls, U, **kw) -> "TwoPlayerGame":
        U = np.asarray(U, dtype=float)
        return cls(U, U.copy(), **kw)

    @property
    def shape(self) -> tuple[int, int]:
        return self.U1.shape

    @property
    def is_zero_sum(self) -> bool:
        return bool(np.array_equal(self.U2, -self.U1))

    @property
    def is_potential(self) -> bool:
        return bool(np.array_equal(self.U2, self.U1))

    def payoff(self, player: int) -> np.ndarray:
        if player not in (1, 2):
            raise ValueError("player is 1 or 2")
        return self.U1 if player == 1 else self.U2

    def own_payoff(self, player: int) -> np.ndarray:
        """Payoff with the player's own actions as rows."""
        return self.U1 if player == 1 else self.U2.T


def mixed_payoff(game: TwoPlayerGame, v1, v2, player: int) -> float:
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if v1.shape != (game.shape[0],) or v2.shape != (game.shape[1],):
        raise ValueError("mixed strategies do not match the game's action sets")
    return float(v1 @ game.payoff(player) @ v2)


def best_response_support(game: TwoPlayerGame, player: int, opponent_v, tau_tie: float = TAU_TIE) -> tuple[int, ...]:
    """Argmax of the player's expected payoff against ``opponent_v``."""
    scores = game.own_payoff(player) @ np.asarray(opponent_v, dtype=float)
    return argmax_set(scores, tau_tie)


def nash_gap(game: TwoPlayerGame, v1, v2) -> float:
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    r1 = game.U1 @ v2
    r2 = v1 @ game.U2
    return float(max(r1.max() - v1 @ r1, r2.max() - r2 @ v2))


def _indifferent_mix(A: np.ndarray) -> Optional[np.ndarray]:
    """Mixed column strategy q >= 0, sum 1, making every row of A pay the same."""
    k, m = A.shape
    lhs = np.zeros((k + 1, m + 1))
    lhs[:k, :m] = A
    lhs[:k, m] = -1.0
    lhs[k, :m] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    if np.max(np.abs(lhs @ sol - rhs)) > 1e-9:
        return None
    q = sol[:m]
    if np.any(q < -1e-12):
        return None
    q = np.clip(q, 0.0, None)
    return q / q.sum()


def _support_pairs(n1: int, n2: int):
    sizes = sorted(itertools.product(range(1, n1 + 1), range(1, n2 + 1)), key=lambda s: (s[0] + s[1], s))
    for k1, k2 in sizes:
        for S1 in itertools.combinations(range(n1), k1):
            for S2 in itertools.combinations(range(n2), k2):
                yield S1, S2


def support_enumeration(game: TwoPlayerGame, tol: float = NASH_TOL) -> list[tuple[np.ndarray, np.ndarray]]:
    """Equilibria found by solving the indifference system on every support pair.

    Degenerate games have continua of equilibria; for an underdetermined
    support pair only the least-norm solution is kept, so the output is a
    sample of the Nash set, not a description of it.
    """
    n1, n2 = game.shape
    found: list[tuple[np.ndarray, np.ndarray]] = []
    for S1, S2 in _support_pairs(n1, n2):
        q = _indifferent_mix(game.U1[np.ix_(S1, S2)])
        if q is None:
            continue
        p = _indifferent_mix(game.U2[np.ix_(S1, S2)].T)
        if p is None:
            continue
        v1 = np.zeros(n1)
        v1[list(S1)] = p
        v2 = np.zeros(n2)
        v2[list(S2)] = q
        if nash_gap(game, v1, v2) > tol:
            continue
        if not any(np.allclose(v1, a, atol=1e-10) and np.allclose(v2, b, atol=1e-10) for a, b in found):
            found.append((v1, v2))
    return found


@dataclass(frozen=True)
class GameValue:
    value: float
    v1: np.ndarray
    v2: np.ndarray


def zero_sum_value(game: TwoPlayerGame) -> GameValue:
    """Exact value and optimal strategies of a zero-sum game by support enumeration."""
    if not game.is_zero_sum:
        raise ValueError("game is not zero-sum")
    n1, n2 = game.shape
    if max(n1, n2) > 12:
        raise ValueError("support enumeration is limited to 12 actions per player")
    for S1, S2 in _support_pairs(n1, n2):
        q = _indifferent_mix(game.U1[np.ix_(S1, S2)])
        if q is None:
            continue
        p = _indifferent_mix(-game.U1[np.ix_(S1, S2)].T)
        if p is None:
            continue
        v1 = np.zeros(n1)
        v1[list(S1)] = p
        v2 = np.zeros(n2)
        v2[list(S2)] = q
        if nash_gap(game, v1, v2) <= NASH_TOL:
            return GameValue(float(v1 @ game.U1 @ v2), v1, v2)
    raise ArithmeticError("no equilibrium found; payoffs may be numerically degenerate")


def _simplex_grid(n: int, steps: int) -> np.ndarray:
    pts = [c for c in itertools.product(range(steps + 1), repeat=n - 1) if sum(c) <= steps]
    grid = np.array([list(c) + [steps - sum(c)] for c in pts], dtype=float)
    return grid / steps


def nash_set_samples(game: TwoPlayerGame, grid_steps: int = 20) -> list[tuple[np.ndarray, np.ndarray]]:
    """Support-enumeration equilibria plus exact equilibria lying on a simplex grid."""
    samples = support_enumeration(game)
    if grid_steps:
        g1 = _simplex_grid(game.shape[0], grid_steps)
        g2 = _simplex_grid(game.shape[1], grid_steps)
        r1 = g2 @ game.U1.T  # (n_g2, n1): payoffs of player 1's pure actions
        r2 = g1 @ game.U2  # (n_g1, n2)
        best1 = r1.max(axis=1)
        best2 = r2.max(axis=1)
        # gap of profile (i, j): max(best1[j] - g1[i] @ r1[j], best2[i] - r2[i] @ g2[j])
        gap1 = best1[None, :] - g1 @ r1.T
        gap2 = best2[:, None] - r2 @ g2.T
        for i, j in zip(*np.nonzero(np.maximum(gap1, gap2) <= NASH_TOL)):
            samples.append((g1[i], g2[j]))
    return samples


def nash_set_distance(game: TwoPlayerGame, v1, v2, grid_steps: int = 20) -> float:
    """Product-Euclidean distance from (v1, v2) to the sampled Nash set."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    samples = nash_set_samples(game, grid_steps)
    return float(min(np.sqrt(np.sum((v1 - a) ** 2) + np.sum((v2 - b) ** 2)) for a, b in samples))


MATCHING = np.array([[0.0, -1.0], [-1.0, 0.0]])
