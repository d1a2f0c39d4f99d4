"""Elevations and energy barriers of a potential on an exploration graph."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .markov_core import as_markov_matrix, is_irreducible

TAU_TIE = 1e-9


@dataclass(frozen=True)
class Landscape:
    exploration: np.ndarray
    potential: np.ndarray

    def __post_init__(self):
        M0 = as_markov_matrix(self.exploration)
        U = np.asarray(self.potential, dtype=float)
        if U.shape != (M0.shape[0],):
            raise ValueError(f"potential has shape {U.shape}, expected ({M0.shape[0]},)")
        if not is_irreducible(M0):
            raise ValueError("exploration matrix must be irreducible")
        object.__setattr__(self, "exploration", M0)
        object.__setattr__(self, "potential", U)

    @property
    def size(self) -> int:
        return self.potential.size


def _elevations_from(adj: np.ndarray, U: np.ndarray, source: int) -> np.ndarray:
    # bottleneck search: the key of a node is the smallest achievable path-max of U
    n = U.size
    best = np.full(n, np.inf)
    best[source] = U[source]
    heap = [(U[source], source)]
    done = np.zeros(n, dtype=bool)
    while heap:
        h, x = heapq.heappop(heap)
        if done[x]:
            continue
        done[x] = True
        for y in np.flatnonzero(adj[x]):
            cand = max(h, U[y])
            if cand < best[y]:
                best[y] = cand
                heapq.heappush(heap, (cand, int(y)))
    return best


def elevation_matrix(L: Landscape) -> np.ndarray:
    """Elev(x, y) for every pair; Elev(x, x) = U(x)."""
    adj = L.exploration > 0
    np.fill_diagonal(adj, False)
    return np.array([_elevations_from(adj, L.potential, x) for x in range(L.size)])


def elevation(L: Landscape, x: int, y: int) -> float:
    """Lowest possible highest point of U over paths from x to y, endpoints included."""
    adj = L.exploration > 0
    np.fill_diagonal(adj, False)
    return float(_elevations_from(adj, L.potential, x)[y])


def energy_barrier(L: Landscape) -> float:
    """max over (x, y) of Elev(x, y) - U(x) - U(y) + min U."""
    U = L.potential
    elev = elevation_matrix(L)
    return float(np.max(elev - U[:, None] - U[None, :]) + U.min())


def argmin_set(U, tau_tie: float = TAU_TIE) -> tuple[int, ...]:
    U = np.asarray(U, dtype=float)
    return tuple(int(i) for i in np.flatnonzero(U <= U.min() + tau_tie))


def argmax_set(U, tau_tie: float = TAU_TIE) -> tuple[int, ...]:
    U = np.asarray(U, dtype=float)
    return tuple(int(i) for i in np.flatnonzero(U >= U.max() - tau_tie))


def game_barrier(U1, M0) -> float:
    """Largest energy barrier over the opponent's pure actions.

    For each column y the row player climbs x -> U1(x, y), so the landscape
    is the shifted loss max_z U1(z, y) - U1(x, y).
    """
    U1 = np.asarray(U1, dtype=float)
    if U1.ndim != 2:
        raise ValueError("payoff must be a matrix")
    barriers = []
    for y in range(U1.shape[1]):
        col = U1[:, y]
        barriers.append(energy_barrier(Landscape(M0, col.max() - col)))
    return float(max(barriers))


def path_exploration(n: int) -> np.ndarray:
    """Nearest-neighbour walk on a path, holding at the ends; reversible w.r.t. uniform."""
    M0 = np.zeros((n, n))
    for x in range(n):
        if x > 0:
            M0[x, x - 1] = 0.5
        if x < n - 1:
            M0[x, x + 1] = 0.5
        M0[x, x] = 1.0 - M0[x].sum()
    return M0


def complete_exploration(n: int) -> np.ndarray:
    """Uniform proposal over all states (including staying put)."""
    return np.full((n, n), 1.0 / n)


def interaction_barrier(Umat, M0) -> float:
    """Largest energy barrier of x -> Umat(x, y) over the columns y."""
    Umat = np.asarray(Umat, dtype=float)
    return float(max(energy_barrier(Landscape(M0, Umat[:, y])) for y in range(Umat.shape[1])))
