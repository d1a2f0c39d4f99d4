"""Dirichlet forms, spectral gap, log-Sobolev bracket and bounds on |Q|."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import mpmath
import numpy as np
from scipy import optimize

from .markov_core import (
    as_markov_matrix,
    as_prob_vector,
    invariant_measure,
    is_irreducible,
)

INVARIANCE_TOL = 1e-8


def _check_invariant(M, pi):
    res = np.max(np.abs(pi @ M - pi))
    if res > INVARIANCE_TOL:
        raise ValueError(f"pi is not invariant for M (residual {res:.3g})")


def variance(f, pi) -> float:
    f = np.asarray(f, dtype=float)
    pi = as_prob_vector(pi)
    return float(pi @ f**2 - (pi @ f) ** 2)


def entropy(f, pi) -> float:
    """sum_x f(x)^2 log(f(x)^2 / pi(f^2)) pi(x), with 0 log 0 = 0."""
    f = np.asarray(f, dtype=float)
    pi = as_prob_vector(pi)
    f2 = f**2
    norm = pi @ f2
    if norm == 0.0:
        return 0.0
    mask = (f2 > 0) & (pi > 0)
    return float(np.sum(f2[mask] * np.log(f2[mask] / norm) * pi[mask]))


def energy(f, M, pi) -> float:
    """Dirichlet form 1/2 sum_{x,y} (f(y) - f(x))^2 M(x, y) pi(x)."""
    M = as_markov_matrix(M)
    pi = as_prob_vector(pi)
    _check_invariant(M, pi)
    f = np.asarray(f, dtype=float)
    diff = f[None, :] - f[:, None]
    return float(0.5 * np.sum(diff**2 * M * pi[:, None]))


@dataclass(frozen=True)
class DirichletData:
    chain: np.ndarray
    pi: np.ndarray

    @classmethod
    def of(cls, M) -> "DirichletData":
        M = as_markov_matrix(M)
        return cls(M, invariant_measure(M))

    @property
    def pi_star(self) -> float:
        return float(self.pi.min())


def _require_irreducible(M):
    if not is_irreducible(M):
        raise ValueError("chain must be irreducible")


def symmetrized_generator(M, pi) -> np.ndarray:
    """D^1/2 (I - (M + M*)/2) D^-1/2 with M* the time reversal of M."""
    s = np.sqrt(pi)
    A = s[:, None] * M / s[None, :]
    return np.eye(M.shape[0]) - 0.5 * (A + A.T)


def spectral_gap(M, pi=None) -> float:
    M = as_markov_matrix(M)
    _require_irreducible(M)
    if M.shape[0] < 2:
        raise ValueError("spectral gap needs at least two states")
    pi = invariant_measure(M) if pi is None else as_prob_vector(pi)
    _check_invariant(M, pi)
    eig = np.linalg.eigvalsh(symmetrized_generator(M, pi))
    return float(eig[1])


def _pi_star_factor(pi_star: float) -> float:
    # log((1-p)/p) / (1-2p); removable singularity at p = 1/2 with limit 2
    if abs(1.0 - 2.0 * pi_star) < 1e-12:
        return 2.0
    return math.log((1.0 - pi_star) / pi_star) / (1.0 - 2.0 * pi_star)


def log_sobolev_bracket(lam: float, pi_star: float) -> tuple[float, float]:
    """Rough estimates (1-2p)/log((1-p)/p) * lam <= alpha <= lam/2."""
    return lam / _pi_star_factor(pi_star), lam / 2.0


@dataclass(frozen=True)
class SpectralConstants:
    lam: float
    alpha_lower: float
    alpha_upper: float
    alpha_numeric: Optional[float] = None
    converged: bool = True
    clamped: bool = False


def _ls_ratio(g, M, pi):
    # parametrize f = exp(g) > 0; ratio is invariant under scaling f
    f = np.exp(g - g.max())
    L = entropy(f, pi)
    if L <= 1e-300:
        return np.inf
    diff = f[None, :] - f[:, None]
    E = 0.5 * np.sum(diff**2 * M * pi[:, None])
    return E / L


def log_sobolev_search(M, pi=None, restarts: int = 8, iters: int = 200, seed: int = 0) -> SpectralConstants:
    """Bracket the log-Sobolev constant and search numerically inside it.

    The search minimizes E(f)/L(f) over positive f by multistart quasi-Newton
    descent.  One start is the near-constant perturbation along the spectral
    gap eigenfunction, which approaches lambda/2 from above.  A value found
    outside the bracket is clamped into it and ``clamped`` is set.
    """
    M = as_markov_matrix(M)
    pi = invariant_measure(M) if pi is None else as_prob_vector(pi)
    lam = spectral_gap(M, pi)
    lo, hi = log_sobolev_bracket(lam, float(pi.min()))
    n = M.shape[0]

    S = symmetrized_generator(M, pi)
    _, vecs = np.linalg.eigh(S)
    phi = vecs[:, 1] / np.sqrt(pi)
    phi /= np.max(np.abs(phi))

    rng = np.random.default_rng(seed)
    starts = [1e-3 * phi, -1e-3 * phi]
    starts += [rng.normal(scale=2.0, size=n) for _ in range(restarts)]
    best = np.inf
    n_ok = 0
    for g0 in starts:
        res = optimize.minimize(_ls_ratio, g0, args=(M, pi), method="L-BFGS-B", options={"maxiter": iters})
        if np.isfinite(res.fun):
            best = min(best, float(res.fun))
            n_ok += bool(res.success)
    converged = n_ok > 0
    clamped = False
    if not np.isfinite(best):
        best = hi
    if best < lo * (1 - 1e-6) or best > hi * (1 + 1e-6):
        clamped = True
        best = min(max(best, lo), hi)
    return SpectralConstants(lam, lo, hi, best, converged, clamped)


def q_bound_spectral(M) -> np.ndarray:
    """Entrywise bound sqrt(pi(y)/pi(x)) / lambda on |Q(x, y)|."""
    M = as_markov_matrix(M)
    pi = invariant_measure(M)
    lam = spectral_gap(M, pi)
    return np.sqrt(pi[None, :] / pi[:, None]) / lam


def q_bound_uniform(M) -> float:
    """Uniform bound on |Q| from the spectral gap alone."""
    M = as_markov_matrix(M)
    pi = invariant_measure(M)
    lam = spectral_gap(M, pi)
    return uniform_bound_from(lam, float(pi.min()))


def uniform_bound_from(lam: float, pi_star: float) -> float:
    loglog = math.log(math.log(1.0 / pi_star)) if pi_star < math.exp(-1) else 0.0
    log_plus = max(0.0, loglog)
    return (log_plus * _pi_star_factor(pi_star) + math.e) / lam


def q_bound_entropy(M, alpha: float) -> np.ndarray:
    """Entrywise bound (1/alpha) log+(log(1/pi(x))) + e/lambda.

    Any lower estimate of the log-Sobolev constant gives a valid bound.
    """
    M = as_markov_matrix(M)
    pi = invariant_measure(M)
    lam = spectral_gap(M, pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = np.log(np.log(1.0 / pi))
    log_plus = np.where(pi < math.exp(-1), np.maximum(ll, 0.0), 0.0)
    row = log_plus / alpha + math.e / lam
    return np.tile(row[:, None], (1, pi.size))


# --- high precision sweep of lambda(beta) for annealing kernels ----------


def _mp_psi(u, shape):
    if shape == "metropolis":
        return mpmath.mpf(1) if u >= 1 else u
    return u / (1 + u)


def _mp_gap(M0, W, beta, shape, dps):
    n = M0.shape[0]
    with mpmath.workdps(dps):
        b = mpmath.mpf(beta)
        M = mpmath.zeros(n, n)
        for x in range(n):
            off = mpmath.mpf(0)
            for y in range(n):
                if x != y and M0[x, y] > 0:
                    M[x, y] = mpmath.mpf(M0[x, y]) * _mp_psi(mpmath.exp(-b * mpmath.mpf(W[x, y])), shape)
                    off += M[x, y]
            M[x, x] = 1 - off
        A = mpmath.eye(n) - M.T
        for j in range(n):
            A[n - 1, j] = 1
        rhs = mpmath.zeros(n, 1)
        rhs[n - 1] = 1
        pi = mpmath.lu_solve(A, rhs)
        s = [mpmath.sqrt(pi[i]) for i in range(n)]
        S = mpmath.zeros(n, n)
        for x in range(n):
            for y in range(n):
                a_xy = s[x] * M[x, y] / s[y]
                a_yx = s[y] * M[y, x] / s[x]
                S[x, y] = (1 if x == y else 0) - (a_xy + a_yx) / 2
        ev = sorted(mpmath.eigsy(S, eigvals_only=True))
        return ev[1], [pi[i] for i in range(n)]


def annealing_gap_sweep(M0, U, betas: Sequence[float], shape: str = "metropolis"):
    """Spectral gap of the annealing kernel at each beta, in extended precision.

    The gap decays like exp(-beta * barrier), far below double precision
    resolution of a dense eigensolver at moderate beta, so the kernel, its
    invariant measure and the symmetrized generator are all formed with
    enough decimal digits to resolve it.  Returns ``(log_lambda, pi_star)``
    arrays, one entry per beta.
    """
    M0 = as_markov_matrix(M0)
    _require_irreducible(M0)
    U = np.asarray(U, dtype=float)
    W = U[None, :] - U[:, None]
    spread = float(U.max() - U.min())
    log_lams, pi_stars = [], []
    for beta in betas:
        dps = int(2 * beta * spread / math.log(10)) + 40
        lam, pi = _mp_gap(M0, W, beta, shape, dps)
        if lam <= 0:
            raise ArithmeticError(f"gap not resolved at beta={beta}; increase precision")
        log_lams.append(float(mpmath.log(lam)))
        pi_stars.append(float(min(pi)))
    return np.array(log_lams), np.array(pi_stars)


def holley_stroock_slope(M0, U, beta_grid: Sequence[float], shape: str = "metropolis") -> float:
    """Least-squares slope of log lambda(beta) against beta on the top half of the grid."""
    betas = np.asarray(beta_grid, dtype=float)
    if betas.size < 2 or np.any(np.diff(betas) <= 0):
        raise ValueError("beta grid must be increasing with at least two points")
    log_lams, _ = annealing_gap_sweep(M0, U, betas, shape)
    top = slice(betas.size // 2, None)
    if betas[top].size < 2:
        top = slice(None)
    slope, _ = np.polyfit(betas[top], log_lams[top], 1)
    return float(slope)
