"""Strategy families: annealing, reinforced walks, fictitious play.

Every constructor returns a dense row-stochastic matrix whose diagonal
absorbs whatever mass the off-diagonal proposals reject.  The ``*_row``
functions are jitted single-row versions of the same formulas used by the
simulator's inner loop; tests keep the two in agreement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numba import njit

from .markov_core import as_markov_matrix, as_prob_vector, invariant_measure

SHAPES = ("metropolis", "logistic")


def shape_code(shape: str) -> int:
    try:
        return SHAPES.index(shape)
    except ValueError:
        raise ValueError(f"unknown acceptance shape {shape!r}; expected one of {SHAPES}") from None


def psi(u, shape: str = "metropolis"):
    """Acceptance function: min(1, u) or u / (1 + u)."""
    u = np.asarray(u, dtype=float)
    if shape_code(shape) == 0:
        return np.minimum(1.0, u)
    return u / (1.0 + u)


def accept(s, shape: str = "metropolis"):
    """psi(exp(-s)) evaluated without overflow for any real s."""
    s = np.asarray(s, dtype=float)
    if shape_code(shape) == 0:
        return np.exp(-np.maximum(s, 0.0))
    # exp(-s) / (1 + exp(-s)) = 1 / (1 + exp(s))
    out = np.empty_like(s)
    pos = s >= 0
    e = np.exp(-s[pos])
    out[pos] = e / (1.0 + e)
    out[~pos] = 1.0 / (1.0 + np.exp(s[~pos]))
    return out


@dataclass(frozen=True)
class CoolingSchedule:
    """beta(t) = beta0 + A log(max(t, 1))."""

    beta0: float = 0.0
    A: float = 0.0

    def __post_init__(self):
        if self.beta0 < 0 or self.A < 0:
            raise ValueError("cooling schedule needs beta0 >= 0 and A >= 0")

    def __call__(self, t):
        return self.beta0 + self.A * np.log(np.maximum(t, 1.0))

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t > 1, self.A / np.maximum(t, 1.0), 0.0)


def schedule_eval(s: CoolingSchedule, n) -> float:
    if np.any(np.asarray(n) < 1):
        raise ValueError("schedule is evaluated at n >= 1")
    return s(n)


def admissible_A(barrier: float, safety: float = 0.95) -> float:
    """Largest logarithmic cooling rate used for a given barrier.

    Strictly below 1 / (2 barrier) by the factor ``safety``; infinite for a
    flat landscape.
    """
    if barrier < 0:
        raise ValueError("energy barrier is nonnegative")
    if barrier == 0:
        return math.inf
    return safety / (2.0 * barrier)


def _fill_diagonal(off: np.ndarray) -> np.ndarray:
    np.fill_diagonal(off, 0.0)
    rows = off.sum(axis=1)
    if np.any(rows > 1.0 + 1e-12):
        raise AssertionError(f"off-diagonal mass exceeds 1 in row {int(np.argmax(rows))}")
    np.fill_diagonal(off, np.maximum(1.0 - rows, 0.0))
    return off


def metropolis_kernel(M0, W, beta: float, shape: str = "metropolis") -> np.ndarray:
    """M(x, y) = M0(x, y) psi(exp(-beta W(x, y))) off the diagonal."""
    M0 = as_markov_matrix(M0)
    W = np.asarray(W, dtype=float)
    if W.shape != M0.shape:
        raise ValueError(f"pair potential has shape {W.shape}, expected {M0.shape}")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return _fill_diagonal(M0 * accept(beta * W, shape))


def annealing_kernel(M0, U, beta: float, shape: str = "metropolis") -> np.ndarray:
    U = np.asarray(U, dtype=float)
    return metropolis_kernel(M0, U[None, :] - U[:, None], beta, shape)


def gibbs_measure(pi0, U, beta: float) -> np.ndarray:
    """pi(x) proportional to exp(-beta U(x)) pi0(x)."""
    pi0 = as_prob_vector(pi0)
    if np.any(pi0 <= 0):
        raise ValueError("reference measure must be strictly positive")
    U = np.asarray(U, dtype=float)
    logw = -beta * U + np.log(pi0)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def vrrw_linear_kernel(Umat, eps: float, v) -> np.ndarray:
    """K(x, y) proportional to Umat(x, y) (eps + v(y))."""
    Umat = np.asarray(Umat, dtype=float)
    v = np.asarray(v, dtype=float)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    K = Umat * (eps + v)[None, :]
    den = K.sum(axis=1)
    if np.any(den <= 0):
        raise ValueError(f"zero row denominator in row {int(np.argmin(den))}")
    return K / den[:, None]


def vrrw_limit_measure(Umat, v) -> np.ndarray:
    """pi(v): invariant measure of the linear reinforcement kernel at eps = 0."""
    return invariant_measure(vrrw_linear_kernel(Umat, 0.0, v))


def vrrw_field(Umat, v) -> np.ndarray:
    """Mean-field vector -v + pi(v) of linear reinforcement."""
    return vrrw_limit_measure(Umat, v) - np.asarray(v, dtype=float)


def interaction_potential(Umat, v) -> np.ndarray:
    """U(x, v) = sum_y Umat(x, y) v(y)."""
    return np.asarray(Umat, dtype=float) @ np.asarray(v, dtype=float)


def vrrw_exponential_kernel(M0, Umat, beta: float, v, shape: str = "metropolis") -> np.ndarray:
    """Metropolis kernel with W(x, y, v) = U(y, v) - U(x, v)."""
    Uv = interaction_potential(Umat, v)
    return metropolis_kernel(M0, Uv[None, :] - Uv[:, None], beta, shape)


def fictitious_kernel(M0, payoff, beta: float, opponent_v, shape: str = "metropolis") -> np.ndarray:
    """Pairwise-comparison kernel climbing the expected payoff.

    ``payoff`` has the player's own actions as rows; W(x, y) is the payoff
    at x minus the payoff at y against ``opponent_v``, so moves towards
    better replies are accepted with probability one under ``metropolis``.
    """
    gain = np.asarray(payoff, dtype=float) @ np.asarray(opponent_v, dtype=float)
    return metropolis_kernel(M0, gain[:, None] - gain[None, :], beta, shape)


def product_kernel(M1, M2) -> np.ndarray:
    """Independent moves on E1 x E2; state (x, y) has index x * |E2| + y."""
    return np.kron(as_markov_matrix(M1), as_markov_matrix(M2))


def derivative_bound(M0, W) -> float:
    """Constant c with |dM(beta)/dbeta| <= c entrywise, for either shape.

    Uses |psi'(u) u| <= 1; the diagonal derivative is minus the row sum of
    the off-diagonal ones.
    """
    M0 = np.asarray(M0, dtype=float)
    W = np.asarray(W, dtype=float)
    off = M0 * np.abs(W)
    np.fill_diagonal(off, 0.0)
    return float(off.sum(axis=1).max())


# --- family specifications ------------------------------------------------


@dataclass(frozen=True)
class ConstantSpec:
    M: np.ndarray
    family: str = field(default="constant", init=False)

    def __post_init__(self):
        object.__setattr__(self, "M", as_markov_matrix(self.M))

    @property
    def size(self):
        return self.M.shape[0]


@dataclass(frozen=True)
class AnnealingSpec:
    M0: np.ndarray
    W: np.ndarray
    schedule: CoolingSchedule
    shape: str = "metropolis"
    family: str = field(default="annealing", init=False)

    def __post_init__(self):
        M0 = as_markov_matrix(self.M0)
        W = np.asarray(self.W, dtype=float)
        if W.shape != M0.shape:
            raise ValueError("pair potential and exploration matrix differ in shape")
        shape_code(self.shape)
        object.__setattr__(self, "M0", M0)
        object.__setattr__(self, "W", W)

    @classmethod
    def from_potential(cls, M0, U, schedule, shape="metropolis"):
        U = np.asarray(U, dtype=float)
        return cls(M0, U[None, :] - U[:, None], schedule, shape)

    @property
    def size(self):
        return self.M0.shape[0]

    def matrix(self, n) -> np.ndarray:
        return metropolis_kernel(self.M0, self.W, float(self.schedule(n)), self.shape)


@dataclass(frozen=True)
class LinearVRRWSpec:
    Umat: np.ndarray
    family: str = field(default="vrrw_linear", init=False)

    def __post_init__(self):
        Umat = np.asarray(self.Umat, dtype=float)
        if Umat.ndim != 2 or Umat.shape[0] != Umat.shape[1]:
            raise ValueError("interaction matrix must be square")
        if np.any(Umat <= 0):
            raise ValueError("linear reinforcement needs a positive interaction matrix")
        object.__setattr__(self, "Umat", Umat)

    @property
    def size(self):
        return self.Umat.shape[0]


@dataclass(frozen=True)
class ExponentialVRRWSpec:
    M0: np.ndarray
    Umat: np.ndarray
    schedule: CoolingSchedule
    shape: str = "metropolis"
    family: str = field(default="vrrw_exponential", init=False)

    def __post_init__(self):
        M0 = as_markov_matrix(self.M0)
        Umat = np.asarray(self.Umat, dtype=float)
        if Umat.shape != M0.shape:
            raise ValueError("interaction matrix and exploration matrix differ in shape")
        shape_code(self.shape)
        object.__setattr__(self, "M0", M0)
        object.__setattr__(self, "Umat", Umat)

    @property
    def size(self):
        return self.M0.shape[0]


KernelSpec = Union[ConstantSpec, AnnealingSpec, LinearVRRWSpec, ExponentialVRRWSpec]


# --- jitted single-row builders --------------------------------------------


@njit(cache=True, nogil=True)
def accept_scalar(s, shape):
    if shape == 0:
        if s <= 0.0:
            return 1.0
        return math.exp(-s)
    if s >= 0.0:
        e = math.exp(-s)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(s))


@njit(cache=True, nogil=True)
def metropolis_row(out, M0, x, beta, w_row, shape):
    """Row x of the Metropolis kernel with pair potential row ``w_row``."""
    n = M0.shape[0]
    off = 0.0
    for y in range(n):
        if y != x and M0[x, y] > 0.0:
            p = M0[x, y] * accept_scalar(beta * w_row[y], shape)
            out[y] = p
            off += p
        else:
            out[y] = 0.0
    out[x] = max(1.0 - off, 0.0)


@njit(cache=True, nogil=True)
def linear_vrrw_row(out, Umat, x, mass):
    """Row x of the linear reinforcement kernel, ``mass = eps + w`` up to scale."""
    n = Umat.shape[0]
    den = 0.0
    for y in range(n):
        out[y] = Umat[x, y] * mass[y]
        den += out[y]
    if den <= 0.0:
        return False
    for y in range(n):
        out[y] /= den
    return True


@njit(cache=True, nogil=True)
def sample_row(row, u):
    """Inverse CDF: smallest k whose cumulative mass exceeds u."""
    c = 0.0
    last = -1
    for k in range(row.shape[0]):
        p = row[k]
        if p > 0.0:
            last = k
            c += p
            if u < c:
                return k
    return last
