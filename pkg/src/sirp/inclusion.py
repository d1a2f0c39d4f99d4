"""Euler solutions of dv/dt in -v + C(v) for face-valued maps C.

A face-valued map sends v to the face Delta(S(v)) of a product of simplices,
where S(v) is the tolerance-argmin of a linear score in each block.  The
integrator follows one representative solution by always moving towards
the reference measure conditioned on S(v).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .games import TwoPlayerGame
from .landscape import TAU_TIE, argmin_set


@dataclass(frozen=True)
class FaceValuedMap:
    """Set-valued map v -> product over blocks of Delta(S_b(v)).

    ``scores(v)`` returns one score vector per block; the block's support is
    the argmin of its score within ``tau_tie``.  In ``constant_set`` mode
    the map ignores v and ``target`` is the single point of C(v).
    """

    mode: str
    blocks: tuple[int, ...]
    base_measures: tuple[np.ndarray, ...]
    scores: Optional[Callable[[np.ndarray], Sequence[np.ndarray]]] = None
    target: Optional[np.ndarray] = None
    tau_tie: float = TAU_TIE
    interaction: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return sum(self.blocks)

    def split(self, v) -> list[np.ndarray]:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"point has shape {v.shape}, expected ({self.dim},)")
        return np.split(v, np.cumsum(self.blocks)[:-1])

    def supports(self, v) -> list[tuple[int, ...]]:
        if self.mode == "constant_set":
            return [tuple(int(i) for i in np.flatnonzero(t > 0)) for t in self.split(self.target)]
        return [argmin_set(s, self.tau_tie) for s in self.scores(np.asarray(v, dtype=float))]


def argmin_interaction(Umat, pi0=None, tau_tie: float = TAU_TIE) -> FaceValuedMap:
    """C(v) = Delta(Argmin_x sum_y Umat(x, y) v(y))."""
    Umat = np.asarray(Umat, dtype=float)
    n = Umat.shape[0]
    pi0 = np.full(n, 1.0 / n) if pi0 is None else np.asarray(pi0, dtype=float)
    return FaceValuedMap(
        "argmin_interaction", (n,), (pi0,), scores=lambda v: [Umat @ v], tau_tie=tau_tie, interaction=Umat
    )


def best_response(game: TwoPlayerGame, pi0s=None, tau_tie: float = TAU_TIE) -> FaceValuedMap:
    """C(v1, v2) = Delta(Argmax U1(., v2)) x Delta(Argmax U2(v1, .))."""
    n1, n2 = game.shape
    if pi0s is None:
        pi0s = (np.full(n1, 1.0 / n1), np.full(n2, 1.0 / n2))

    def scores(v):
        v1, v2 = v[:n1], v[n1:]
        return [-(game.U1 @ v2), -(v1 @ game.U2)]

    return FaceValuedMap("best_response", (n1, n2), tuple(pi0s), scores=scores, tau_tie=tau_tie)


def constant_set(point) -> FaceValuedMap:
    point = np.asarray(point, dtype=float)
    return FaceValuedMap("constant_set", (point.size,), (point,), target=point)


def canonical_selection(C: FaceValuedMap, v) -> np.ndarray:
    """Reference measure of each block conditioned on its support."""
    if C.mode == "constant_set":
        return C.target.copy()
    parts = []
    for pi0, S in zip(C.base_measures, C.supports(v)):
        c = np.zeros_like(pi0)
        idx = list(S)
        c[idx] = pi0[idx] / pi0[idx].sum()
        parts.append(c)
    return np.concatenate(parts)


@dataclass(frozen=True)
class InclusionSolution:
    times: np.ndarray
    points: np.ndarray
    selections: np.ndarray
    h: float


def integrate(C: FaceValuedMap, v0, h: float, T: float) -> InclusionSolution:
    """Explicit Euler: v_{k+1} = (1 - h) v_k + h c_k with c_k the canonical selection."""
    if not 0 < h <= 1:
        raise ValueError("step must lie in (0, 1]")
    if T <= 0:
        raise ValueError("horizon must be positive")
    v = np.asarray(v0, dtype=float).copy()
    C.split(v)
    K = int(round(T / h))
    points = np.empty((K + 1, v.size))
    sels = np.empty((K, v.size))
    points[0] = v
    for k in range(K):
        c = canonical_selection(C, v)
        sels[k] = c
        v = (1.0 - h) * v + h * c
        points[k + 1] = v
    return InclusionSolution(h * np.arange(K + 1), points, sels, h)


def project_to_simplex(y) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, y.size + 1)
    rho = np.nonzero(u * k > css - 1.0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1)
    return np.maximum(y - theta, 0.0)


def distance_to_face(v, support) -> float:
    """Distance from v to the simplex face spanned by ``support``."""
    v = np.asarray(v, dtype=float)
    idx = list(support)
    out = np.ones(v.size, dtype=bool)
    out[idx] = False
    near = project_to_simplex(v[idx])
    return float(np.sqrt(np.sum(v[out] ** 2) + np.sum((v[idx] - near) ** 2)))


def fixed_point_residual(C: FaceValuedMap, v) -> float:
    """Euclidean distance from v to C(v)."""
    if C.mode == "constant_set":
        return float(np.linalg.norm(np.asarray(v, dtype=float) - C.target))
    parts = C.split(v)
    d2 = sum(distance_to_face(p, S) ** 2 for p, S in zip(parts, C.supports(v)))
    return float(np.sqrt(d2))


def lyapunov_H(Umat, v) -> float:
    """H(v) = U(v, v) / 2 for a symmetric interaction matrix."""
    Umat = np.asarray(Umat, dtype=float)
    if not np.allclose(Umat, Umat.T, atol=1e-12, rtol=0):
        raise ValueError("Lyapunov function needs a symmetric interaction matrix")
    v = np.asarray(v, dtype=float)
    return float(0.5 * v @ Umat @ v)


@dataclass(frozen=True)
class LyapunovVerdict:
    ok: bool
    tol_h: float
    worst_increase: float
    worst_step: int
    values: np.ndarray


def lyapunov_check(solution: InclusionSolution, Umat) -> LyapunovVerdict:
    """Check H(v_{k+1}) <= H(v_k) + 10 h^2 max|U| along an argmin-interaction solution."""
    Umat = np.asarray(Umat, dtype=float)
    H = np.array([lyapunov_H(Umat, p) for p in solution.points])
    tol = 10.0 * solution.h**2 * np.max(np.abs(Umat))
    inc = np.diff(H)
    k = int(np.argmax(inc)) if inc.size else 0
    worst = float(inc[k]) if inc.size else 0.0
    return LyapunovVerdict(bool(worst <= tol), float(tol), worst, k, H)


@dataclass(frozen=True)
class CriticalSet:
    points: list
    values: list
    skipped_faces: list
    degenerate: Optional[str] = None


def critical_set_quadratic(Umat, tol: float = 1e-10) -> CriticalSet:
    """Critical points of v -> U(v, v) on the simplex, face by face.

    On a face with support S the critical point makes (Uv)(x) constant for
    x in S and lies in the relative interior of the face.
    """
    Umat = np.asarray(Umat, dtype=float)
    n = Umat.shape[0]
    if n > 8:
        raise ValueError("face enumeration is limited to 8 states")
    if np.allclose(Umat, Umat.flat[0], atol=tol, rtol=0):
        return CriticalSet([], [], [], degenerate="constant")
    points, values, skipped = [], [], []
    for k in range(1, n + 1):
        for S in itertools.combinations(range(n), k):
            A = np.zeros((k + 1, k + 1))
            A[:k, :k] = Umat[np.ix_(S, S)]
            A[:k, k] = -1.0
            A[k, :k] = 1.0
            b = np.zeros(k + 1)
            b[k] = 1.0
            if np.linalg.matrix_rank(A) < k + 1:
                skipped.append(S)
                continue
            sol = np.linalg.solve(A, b)
            vS = sol[:k]
            if np.all(vS > tol):
                v = np.zeros(n)
                v[list(S)] = vS
                points.append(v)
                values.append(float(v @ Umat @ v))
    return CriticalSet(points, values, skipped)


def distance_to_hull(p, vertices) -> float:
    """Euclidean distance from p to the convex hull of ``vertices``."""
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    p = np.asarray(p, dtype=float)
    if V.shape[0] == 0:
        raise ValueError("empty target set")
    if V.shape[0] == 1:
        return float(np.linalg.norm(p - V[0]))
    # nonnegative weights with a heavily weighted sum-to-one row
    big = 1e4
    A = np.vstack([V.T, big * np.ones(V.shape[0])])
    b = np.concatenate([p, [big]])
    lam, _ = optimize.nnls(A, b)
    lam = lam / lam.sum()
    return float(np.linalg.norm(p - lam @ V))


def limit_set_distance(tail_points, target, hull: bool = False) -> float:
    """Largest distance from the tail of a trajectory to a target set.

    ``target`` is either a finite point set (distance to the nearest point,
    or to its convex hull with ``hull=True``) or a callable giving the
    distance of one point to the set.
    """
    tail = np.atleast_2d(np.asarray(tail_points, dtype=float))
    if tail.shape[0] < 10:
        raise ValueError("need at least 10 tail checkpoints")
    if callable(target):
        dist = target
    else:
        pts = np.atleast_2d(np.asarray(target, dtype=float))
        if pts.size == 0:
            raise ValueError("empty target set")
        if hull:
            dist = lambda q: distance_to_hull(q, pts)  # noqa: E731
        else:
            dist = lambda q: float(np.min(np.linalg.norm(pts - q, axis=1)))  # noqa: E731
    return float(max(dist(q) for q in tail))
