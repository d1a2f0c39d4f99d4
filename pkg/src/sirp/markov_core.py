"""Finite Markov chain primitives.

Matrices and vectors are plain dense ``numpy`` arrays indexed in the
canonical order of a :class:`StateSpace`.  Validation happens at the
boundary (``as_markov_matrix``, ``as_prob_vector``); everything else is a
pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

ROW_TOL = 1e-12


class DecomposableError(ValueError):
    """Raised when an operation needs a unique recurrent class."""


@dataclass(frozen=True)
class StateSpace:
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) < 1:
            raise ValueError("state space must have at least one state")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"state labels are not distinct: {self.labels}")

    @classmethod
    def of_size(cls, n: int) -> "StateSpace":
        return cls(tuple(str(i) for i in range(n)))

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


def as_markov_matrix(M, tol: float = ROW_TOL) -> np.ndarray:
    """Return ``M`` as a float array after checking it is row-stochastic."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise ValueError(f"Markov matrix must be square and non-empty, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("Markov matrix has non-finite entries")
    if np.any(M < 0):
        raise ValueError("Markov matrix has negative entries")
    dev = np.abs(M.sum(axis=1) - 1.0)
    if np.any(dev > tol):
        row = int(np.argmax(dev))
        raise ValueError(f"row {row} sums to {M[row].sum()!r}, not 1")
    return M


def as_prob_vector(mu, tol: float = ROW_TOL) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or mu.size == 0:
        raise ValueError(f"probability vector must be 1-d and non-empty, got shape {mu.shape}")
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise ValueError("probability vector has negative or non-finite entries")
    if abs(mu.sum() - 1.0) > tol:
        raise ValueError(f"probability vector sums to {mu.sum()!r}, not 1")
    return mu


def apply_to_function(M, f) -> np.ndarray:
    """(Mf)(x) = sum_y M(x, y) f(y)."""
    M = as_markov_matrix(M)
    f = np.asarray(f, dtype=float)
    if f.shape != (M.shape[0],):
        raise ValueError(f"function has shape {f.shape}, expected ({M.shape[0]},)")
    return M @ f


def apply_to_measure(mu, M) -> np.ndarray:
    """(mu M)(y) = sum_x mu(x) M(x, y)."""
    M = as_markov_matrix(M)
    mu = as_prob_vector(mu)
    if mu.shape != (M.shape[0],):
        raise ValueError(f"measure has shape {mu.shape}, expected ({M.shape[0]},)")
    return mu @ M


@dataclass(frozen=True)
class ClassDecomposition:
    """Communicating classes of a chain and which of them are closed.

    Classes are listed in order of their smallest member.
    """

    classes: tuple[tuple[int, ...], ...]
    recurrent_flags: tuple[bool, ...]

    @property
    def recurrent_classes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(c for c, r in zip(self.classes, self.recurrent_flags) if r)


def _reachability(adj: np.ndarray) -> np.ndarray:
    # Warshall closure, reflexive: x reaches x with the zero-length path.
    n = adj.shape[0]
    reach = adj.copy()
    np.fill_diagonal(reach, True)
    for k in range(n):
        reach |= np.outer(reach[:, k], reach[k, :])
    return reach


def class_decomposition(M) -> ClassDecomposition:
    M = as_markov_matrix(M)
    adj = M > 0
    reach = _reachability(adj)
    related = reach & reach.T
    n = M.shape[0]
    seen = np.zeros(n, dtype=bool)
    classes = []
    flags = []
    for x in range(n):
        if seen[x]:
            continue
        members = np.flatnonzero(related[x])
        seen[members] = True
        outside = np.ones(n, dtype=bool)
        outside[members] = False
        closed = not np.any(adj[np.ix_(members, outside)])
        classes.append(tuple(int(m) for m in members))
        flags.append(bool(closed))
    return ClassDecomposition(tuple(classes), tuple(flags))


def is_indecomposable(M) -> bool:
    return len(class_decomposition(M).recurrent_classes) == 1


def is_irreducible(M) -> bool:
    dec = class_decomposition(M)
    return len(dec.classes) == 1


def invariant_measure(M) -> np.ndarray:
    """Unique invariant probability of an indecomposable chain.

    Solves ``pi (I - M) = 0`` with one equation replaced by ``sum(pi) = 1``.
    """
    M = as_markov_matrix(M)
    if not is_indecomposable(M):
        raise DecomposableError("invariant measure is not unique: chain has several closed classes")
    return _solve_invariant(M)


def _solve_invariant(M: np.ndarray) -> np.ndarray:
    n = M.shape[0]
    A = np.eye(n) - M.T
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    # transient states carry exactly zero mass; clip solver noise there
    pi[np.abs(pi) < 1e-15] = 0.0
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True)
class PseudoInverse:
    """The matrix Q with Q1 = 0 and Q(I - M) = (I - M)Q = I - Pi."""

    entries: np.ndarray
    for_matrix: np.ndarray
    pi: np.ndarray

    @property
    def Pi(self) -> np.ndarray:
        return np.tile(self.pi, (self.pi.size, 1))

    def identity_residuals(self) -> tuple[float, float, float]:
        """Sup-norm residuals of ``Q1 = 0``, ``Q(I-M) = I-Pi``, ``(I-M)Q = I-Pi``."""
        Q, M = self.entries, self.for_matrix
        n = M.shape[0]
        L = np.eye(n) - M
        target = np.eye(n) - self.Pi
        return (
            float(np.max(np.abs(Q.sum(axis=1)))),
            float(np.max(np.abs(Q @ L - target))),
            float(np.max(np.abs(L @ Q - target))),
        )


def pseudo_inverse(M) -> PseudoInverse:
    """Pseudo-inverse of ``I - M`` computed as ``(I - M + Pi)^-1 - Pi``."""
    M = as_markov_matrix(M)
    pi = invariant_measure(M)
    n = M.shape[0]
    Pi = np.tile(pi, (n, 1))
    try:
        Z = np.linalg.solve(np.eye(n) - M + Pi, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"pseudo-inverse solve failed (numerically degenerate chain): {exc}") from exc
    Q = Z - Pi
    Q.setflags(write=False)
    return PseudoInverse(Q, M, pi)


def sup_norm(a) -> float:
    """max |a| over all entries of a vector or matrix."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        raise ValueError("sup norm of an empty array")
    return float(np.max(np.abs(a)))


def stationary_projector(pi: Sequence[float]) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    return np.tile(pi, (pi.size, 1))
