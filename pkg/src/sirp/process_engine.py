"""Seeded simulation of self-interacting chains and their diagnostics.

A run produces the state path X_1, ..., X_N (and Y_1, ..., Y_N for games)
from a jitted loop that rebuilds the current row of M_n at every step.
Empirical averages, weighted averages and the hypothesis diagnostics are
then evaluated at checkpoint indices from prefix counts of that path.
The loop runs one step past the horizon so that every checkpoint,
including N itself, has the n + 1 data its one-step quantities need.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from numba import njit

from .games import TwoPlayerGame
from .kernels import (
    AnnealingSpec,
    ConstantSpec,
    CoolingSchedule,
    ExponentialVRRWSpec,
    LinearVRRWSpec,
    fictitious_kernel,
    linear_vrrw_row,
    metropolis_row,
    product_kernel,
    sample_row,
    shape_code,
    vrrw_exponential_kernel,
    vrrw_linear_kernel,
)
from .markov_core import DecomposableError, as_markov_matrix, as_prob_vector, pseudo_inverse, sup_norm

OBSERVATIONS = ("occupation", "game_pair", "game_full")


class KernelError(RuntimeError):
    """A strategy matrix could not be built at some step of a run."""


# --- weights ---------------------------------------------------------------


@dataclass(frozen=True)
class WeightSequence:
    """a_i = (log(i + 1))^alpha with running sums r_n."""

    alpha: float = 0.0

    def a(self, n: int) -> np.ndarray:
        """a_1, ..., a_n."""
        i = np.arange(1, n + 1, dtype=float)
        return np.log(i + 1.0) ** self.alpha

    def r(self, n: int) -> np.ndarray:
        return np.cumsum(self.a(n))

    @property
    def unit(self) -> bool:
        return self.alpha == 0.0


# --- player rules for games -------------------------------------------------


@dataclass(frozen=True)
class MarkovianFP:
    """Pairwise-comparison play climbing the payoff against the opponent's empirical mix."""

    M0: np.ndarray
    schedule: CoolingSchedule
    shape: str = "metropolis"
    kind: str = field(default="fictitious", init=False)

    def __post_init__(self):
        object.__setattr__(self, "M0", as_markov_matrix(self.M0))
        shape_code(self.shape)


@dataclass(frozen=True)
class ConstantStrategy:
    M: np.ndarray
    kind: str = field(default="constant", init=False)

    def __post_init__(self):
        object.__setattr__(self, "M", as_markov_matrix(self.M))


@dataclass(frozen=True)
class Mirror:
    """Replays the other player's previous action: Y_{n+1} = X_n."""

    kind: str = field(default="mirror", init=False)

    def next_action(self, other_prev: int, u: float = 0.0) -> int:
        return int(other_prev)


@dataclass(frozen=True)
class FixedMixed:
    """I.i.d. actions drawn from ``q``."""

    q: np.ndarray
    kind: str = field(default="fixed_mixed", init=False)

    def __post_init__(self):
        object.__setattr__(self, "q", as_prob_vector(self.q))

    def next_action(self, other_prev: int, u: float) -> int:
        return int(sample_row(self.q, u))


PlayerRule = Union[MarkovianFP, ConstantStrategy, Mirror, FixedMixed]


def scripted_opponent(kind: str, q=None) -> Union[Mirror, FixedMixed]:
    if kind == "mirror":
        return Mirror()
    if kind == "fixed_mixed":
        if q is None:
            raise ValueError("fixed_mixed opponent needs a mixture q")
        return FixedMixed(q)
    raise ValueError(f"unknown scripted opponent {kind!r}")


@dataclass(frozen=True)
class FictitiousPlaySpec:
    game: TwoPlayerGame
    player1: PlayerRule
    player2: PlayerRule
    family: str = field(default="fictitious_play", init=False)

    def __post_init__(self):
        if not isinstance(self.player1, (MarkovianFP, ConstantStrategy)):
            raise ValueError("player 1 must follow a Markov strategy")
        n1, n2 = self.game.shape
        for rule, n in ((self.player1, n1), (self.player2, n2)):
            M = getattr(rule, "M0", getattr(rule, "M", None))
            if M is not None and M.shape != (n, n):
                raise ValueError(f"{rule.kind} strategy has shape {M.shape}, expected ({n}, {n})")
        if isinstance(self.player2, FixedMixed) and self.player2.q.size != n2:
            raise ValueError("opponent mixture does not match player 2's actions")
        if isinstance(self.player2, Mirror) and n1 != n2:
            raise ValueError("mirror opponent needs equal action sets")

    @property
    def joint_view(self) -> bool:
        """Both moves are Markov given the past, so the chain lives on E1 x E2."""
        return not isinstance(self.player2, Mirror)


# --- primitive steps --------------------------------------------------------


def step(current_state: int, M_row, uniform_draw: float) -> int:
    """Next state by inverse-CDF sampling of ``M_row`` (a row, or a full matrix)."""
    row = np.asarray(M_row, dtype=float)
    if row.ndim == 2:
        row = row[current_state]
    if abs(row.sum() - 1.0) > 1e-9 or np.any(row < 0):
        raise ValueError(f"transition row is not a probability vector (sum {row.sum()!r})")
    if not 0.0 <= uniform_draw < 1.0:
        raise ValueError("uniform draw must lie in [0, 1)")
    return int(sample_row(row, uniform_draw))


def update_average(v_prev, V_new, n: int) -> np.ndarray:
    """v_n = v_{n-1} + (V_n - v_{n-1}) / n."""
    if n < 1:
        raise ValueError("n starts at 1")
    v_prev = np.asarray(v_prev, dtype=float)
    return v_prev + (np.asarray(V_new, dtype=float) - v_prev) / n


def update_weighted(w_prev, V_new, a_n: float, r_prev: float):
    """(w_n, r_n) with r_n = r_{n-1} + a_n and w_n the a-weighted running mean."""
    if a_n <= 0:
        raise ValueError("weights must be positive")
    r_n = r_prev + a_n
    w_prev = np.asarray(w_prev, dtype=float)
    return w_prev + a_n * (np.asarray(V_new, dtype=float) - w_prev) / r_n, r_n


# --- jitted loops -----------------------------------------------------------
# xs[k] holds X_{k+1}; the transition out of X_n uses M_n with n = k.


@njit(cache=True, nogil=True)
def _loop_constant(M, x0, draws):
    T = draws.shape[0] + 1
    xs = np.empty(T, np.int32)
    xs[0] = x0
    for k in range(1, T):
        xs[k] = sample_row(M[xs[k - 1]], draws[k - 1])
    return xs, -1


@njit(cache=True, nogil=True)
def _loop_annealing(M0, W, shape, beta0, A, x0, draws):
    T = draws.shape[0] + 1
    xs = np.empty(T, np.int32)
    xs[0] = x0
    row = np.empty(M0.shape[0])
    for k in range(1, T):
        x = xs[k - 1]
        beta = beta0 + A * math.log(k)
        metropolis_row(row, M0, x, beta, W[x], shape)
        xs[k] = sample_row(row, draws[k - 1])
    return xs, -1


@njit(cache=True, nogil=True)
def _loop_vrrw_linear(Umat, a, x0, draws):
    T = draws.shape[0] + 1
    n_states = Umat.shape[0]
    xs = np.empty(T, np.int32)
    xs[0] = x0
    mass = np.ones(n_states)
    mass[x0] += a[0]
    row = np.empty(n_states)
    for k in range(1, T):
        if not linear_vrrw_row(row, Umat, xs[k - 1], mass):
            return xs, k
        z = sample_row(row, draws[k - 1])
        xs[k] = z
        mass[z] += a[k]
    return xs, -1


@njit(cache=True, nogil=True)
def _loop_vrrw_exponential(M0, Umat, shape, beta0, A, x0, draws):
    T = draws.shape[0] + 1
    n_states = M0.shape[0]
    xs = np.empty(T, np.int32)
    xs[0] = x0
    Uc = Umat[:, x0].copy()  # Umat @ counts
    row = np.empty(n_states)
    w_row = np.empty(n_states)
    for k in range(1, T):
        x = xs[k - 1]
        for y in range(n_states):
            w_row[y] = (Uc[y] - Uc[x]) / k
        metropolis_row(row, M0, x, beta0 + A * math.log(k), w_row, shape)
        z = sample_row(row, draws[k - 1])
        xs[k] = z
        for y in range(n_states):
            Uc[y] += Umat[y, z]
    return xs, -1


@njit(cache=True, nogil=True)
def _fp_row(row, M0, x, gains, k, beta, shape, w_row):
    for y in range(M0.shape[0]):
        w_row[y] = (gains[x] - gains[y]) / k
    metropolis_row(row, M0, x, beta, w_row, shape)


@njit(cache=True, nogil=True)
def _loop_game(
    kind1, M1, P1, beta0_1, A_1,
    kind2, M2, P2, beta0_2, A_2, q,
    shape, x0, y0, draws1, draws2,
):
    # kind: 0 fictitious (M = exploration), 1 constant (M = strategy), 2 mirror, 3 fixed mixed
    T = draws1.shape[0] + 1
    n1, n2 = P1.shape
    xs = np.empty(T, np.int32)
    ys = np.empty(T, np.int32)
    xs[0] = x0
    ys[0] = y0
    G1 = P1[:, y0].copy()  # own payoff against the opponent's counts
    G2 = P2[:, x0].copy()
    row1 = np.empty(n1)
    row2 = np.empty(n2)
    w1 = np.empty(n1)
    w2 = np.empty(n2)
    for k in range(1, T):
        x = xs[k - 1]
        y = ys[k - 1]
        if kind1 == 0:
            _fp_row(row1, M1, x, G1, k, beta0_1 + A_1 * math.log(k), shape, w1)
            xn = sample_row(row1, draws1[k - 1])
        else:
            xn = sample_row(M1[x], draws1[k - 1])
        if kind2 == 0:
            _fp_row(row2, M2, y, G2, k, beta0_2 + A_2 * math.log(k), shape, w2)
            yn = sample_row(row2, draws2[k - 1])
        elif kind2 == 1:
            yn = sample_row(M2[y], draws2[k - 1])
        elif kind2 == 2:
            yn = x
        else:
            yn = sample_row(q, draws2[k - 1])
        xs[k] = xn
        ys[k] = yn
        for i in range(n1):
            G1[i] += P1[i, yn]
        for j in range(n2):
            G2[j] += P2[j, xn]
    return xs, ys, -1


# --- traces -----------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticsRow:
    n: int
    q_norm: float
    q_step: float
    pi_step: float
    hyp1_i: float
    prop34_ii: float
    prop34_iii: float
    hyp2: float
    m_step: float
    flag: Optional[str] = None

    COLUMNS = ("q_norm", "q_step", "pi_step", "hyp1_i", "prop34_ii", "prop34_iii", "hyp2")

    @classmethod
    def flagged(cls, n: int, reason: str) -> "DiagnosticsRow":
        nan = float("nan")
        return cls(n, nan, nan, nan, nan, nan, nan, nan, nan, reason)


@dataclass(frozen=True)
class Checkpoint:
    n: int
    state: int
    state2: Optional[int]
    v: np.ndarray
    w: Optional[np.ndarray]
    r: float
    v_next: np.ndarray
    V_next: np.ndarray
    payoff_mean: Optional[float]
    theta: Optional[np.ndarray] = None
    diagnostics: Optional[DiagnosticsRow] = None


@dataclass(frozen=True)
class ProcessTrace:
    spec: object
    seed: int
    replica: Optional[int]
    horizon: int
    observation: str
    states: np.ndarray
    states2: Optional[np.ndarray]
    weights: Optional[WeightSequence]
    checkpoints: tuple

    @property
    def final(self) -> Checkpoint:
        return self.checkpoints[-1]

    def column_names(self) -> list[str]:
        c = self.checkpoints[0]
        cols = ["n", "state"]
        if self.states2 is not None:
            cols.append("state2")
        cols += [f"v{i}" for i in range(c.v.size)]
        if c.w is not None:
            cols += [f"w{i}" for i in range(c.w.size)]
        cols += list(DiagnosticsRow.COLUMNS) + ["payoff_mean"]
        return cols

    def to_csv(self, dest=None) -> str:
        """Checkpoint table as CSV text; also written to ``dest`` when given."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.column_names())
        for c in self.checkpoints:
            row = [c.n, c.state]
            if self.states2 is not None:
                row.append(c.state2)
            row += [_fmt(x) for x in c.v]
            if c.w is not None:
                row += [_fmt(x) for x in c.w]
            d = c.diagnostics
            row += [_fmt(getattr(d, k)) if d is not None else "" for k in DiagnosticsRow.COLUMNS]
            row.append("" if c.payoff_mean is None else _fmt(c.payoff_mean))
            wr.writerow(row)
        text = buf.getvalue()
        if dest is not None:
            with open(dest, "w", newline="") as fh:
                fh.write(text)
        return text


def _fmt(x) -> str:
    return repr(float(x))


def dyadic_checkpoints(horizon: int) -> list[int]:
    out = []
    n = 2
    while n < horizon:
        out.append(n)
        n *= 2
    out.append(horizon)
    return [c for c in out if c >= 2]


def _generator(seed: int, replica: Optional[int]) -> np.random.Generator:
    ss = np.random.SeedSequence(seed) if replica is None else np.random.SeedSequence(seed, spawn_key=(replica,))
    return np.random.Generator(np.random.Philox(ss))


def _prefix_sums(values: np.ndarray, positions: Sequence[int], n_bins: int, weights=None) -> dict:
    """Histogram of values[:p] for every p in increasing ``positions``."""
    out = {}
    acc = np.zeros(n_bins)
    prev = 0
    for p in positions:
        seg = values[prev:p]
        w = None if weights is None else weights[prev:p]
        acc = acc + np.bincount(seg, weights=w, minlength=n_bins)
        out[p] = acc.copy()
        prev = p
    return out


# --- simulation -------------------------------------------------------------


def simulate(
    spec,
    horizon: int,
    seed: int = 0,
    checkpoints: Optional[Sequence[int]] = None,
    weights: Optional[WeightSequence] = None,
    x0: int = 0,
    y0: int = 0,
    observation: Optional[str] = None,
    replica: Optional[int] = None,
    diagnostics: bool = True,
) -> ProcessTrace:
    """Run one replica of the adapted process up to ``horizon``.

    Parameters
    ----------
    spec : kernel spec or FictitiousPlaySpec
        Strategy family and its parameters.
    horizon : int
        Number of states X_1..X_N recorded.
    seed, replica : int
        The Philox stream is keyed by ``seed`` and, when given, ``replica``.
    checkpoints : sequence of int, optional
        Indices 2 <= n <= N at which averages and diagnostics are recorded;
        dyadic by default, always ending at N.
    weights : WeightSequence, optional
        Weights for the weighted average w_n.  For linear reinforcement they
        are also the reinforcement weights (unit weights by default).
    observation : str, optional
        ``occupation`` for single chains; ``game_pair`` or ``game_full``
        (default) for games.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    is_game = isinstance(spec, FictitiousPlaySpec)
    if observation is None:
        observation = "game_full" if is_game else "occupation"
    if observation not in OBSERVATIONS:
        raise ValueError(f"unknown observation {observation!r}")
    if is_game == (observation == "occupation"):
        raise ValueError(f"observation {observation!r} does not fit a {spec.family} process")
    if isinstance(spec, LinearVRRWSpec) and weights is None:
        weights = WeightSequence(0.0)
    if is_game and weights is not None:
        raise ValueError("weighted averages are tracked for occupation measures only")
    if checkpoints is None:
        checkpoints = dyadic_checkpoints(horizon)
    checkpoints = sorted(set(int(c) for c in checkpoints))
    if not checkpoints or checkpoints[0] < 2 or checkpoints[-1] > horizon:
        raise ValueError("checkpoints must lie in [2, horizon]")

    rng = _generator(seed, replica)
    draws = rng.random(horizon)
    a = weights.a(horizon + 1) if weights is not None else None

    ys = None
    fail = -1
    if isinstance(spec, ConstantSpec):
        _check_start(x0, spec.size)
        xs, fail = _loop_constant(spec.M, x0, draws)
    elif isinstance(spec, AnnealingSpec):
        _check_start(x0, spec.size)
        s = spec.schedule
        xs, fail = _loop_annealing(spec.M0, spec.W, shape_code(spec.shape), s.beta0, s.A, x0, draws)
    elif isinstance(spec, LinearVRRWSpec):
        _check_start(x0, spec.size)
        xs, fail = _loop_vrrw_linear(spec.Umat, a, x0, draws)
    elif isinstance(spec, ExponentialVRRWSpec):
        _check_start(x0, spec.size)
        s = spec.schedule
        xs, fail = _loop_vrrw_exponential(spec.M0, spec.Umat, shape_code(spec.shape), s.beta0, s.A, x0, draws)
    elif is_game:
        draws2 = rng.random(horizon)
        xs, ys, fail = _run_game(spec, x0, y0, draws, draws2)
    else:
        raise TypeError(f"unsupported process spec {type(spec).__name__}")
    if fail >= 0:
        raise KernelError(f"{spec.family} kernel has a zero row at step {fail}")

    cps = _checkpoints(spec, xs, ys, checkpoints, weights, a, observation, diagnostics)
    return ProcessTrace(
        spec, seed, replica, horizon, observation,
        xs[:horizon], None if ys is None else ys[:horizon], weights, tuple(cps),
    )


def _check_start(x0, n):
    if not 0 <= x0 < n:
        raise ValueError(f"initial state {x0} outside 0..{n - 1}")


def _player_args(rule: PlayerRule, n: int):
    dummy = np.eye(n)
    if isinstance(rule, MarkovianFP):
        return 0, rule.M0, rule.schedule.beta0, rule.schedule.A, shape_code(rule.shape)
    if isinstance(rule, ConstantStrategy):
        return 1, rule.M, 0.0, 0.0, None
    if isinstance(rule, Mirror):
        return 2, dummy, 0.0, 0.0, None
    return 3, dummy, 0.0, 0.0, None


def _run_game(spec: FictitiousPlaySpec, x0, y0, draws1, draws2):
    n1, n2 = spec.game.shape
    _check_start(x0, n1)
    _check_start(y0, n2)
    k1, M1, b1, A1, s1 = _player_args(spec.player1, n1)
    k2, M2, b2, A2, s2 = _player_args(spec.player2, n2)
    shapes = {s for s in (s1, s2) if s is not None}
    if len(shapes) > 1:
        raise ValueError("both players must use the same acceptance shape")
    shape = shapes.pop() if shapes else 0
    q = spec.player2.q if isinstance(spec.player2, FixedMixed) else np.ones(n2) / n2
    return _loop_game(
        k1, M1, spec.game.own_payoff(1), b1, A1,
        k2, M2, spec.game.own_payoff(2), b2, A2, q,
        shape, x0, y0, draws1, draws2,
    )


# --- checkpoint reconstruction ----------------------------------------------


@dataclass
class _Snapshot:
    n: int
    x: int
    y: Optional[int]
    counts: np.ndarray
    counts2: Optional[np.ndarray]
    wsum: Optional[np.ndarray]
    r: float


def _matrix_at(spec, snap: _Snapshot) -> np.ndarray:
    n = snap.n
    if isinstance(spec, ConstantSpec):
        return spec.M
    if isinstance(spec, AnnealingSpec):
        return spec.matrix(n)
    if isinstance(spec, LinearVRRWSpec):
        return vrrw_linear_kernel(spec.Umat, 1.0 / snap.r, snap.wsum / snap.r)
    if isinstance(spec, ExponentialVRRWSpec):
        return vrrw_exponential_kernel(spec.M0, spec.Umat, float(spec.schedule(n)), snap.counts / n, spec.shape)
    M1 = _player_matrix(spec.player1, spec.game.own_payoff(1), snap.counts2 / n, n)
    if not spec.joint_view:
        return M1
    M2 = _player_matrix(spec.player2, spec.game.own_payoff(2), snap.counts / n, n)
    return product_kernel(M1, M2)


def _player_matrix(rule, payoff, opponent_v, n) -> np.ndarray:
    if isinstance(rule, MarkovianFP):
        return fictitious_kernel(rule.M0, payoff, float(rule.schedule(n)), opponent_v, rule.shape)
    if isinstance(rule, ConstantStrategy):
        return rule.M
    if isinstance(rule, FixedMixed):
        return np.tile(rule.q, (rule.q.size, 1))
    raise TypeError(f"{rule.kind} opponent has no strategy matrix")


def _vhat(spec, observation, snap: _Snapshot, nu=None) -> np.ndarray:
    """Rows are V-hat_n(state) for each state of the analysed chain."""
    if observation == "occupation":
        return np.eye(snap.counts.size)
    game = spec.game
    n1, n2 = game.shape
    full = observation == "game_full"
    if spec.joint_view:
        rows = []
        for x in range(n1):
            for y in range(n2):
                r = [np.eye(n1)[x], np.eye(n2)[y]]
                if full:
                    r.append([game.U1[x, y], game.U2[x, y]])
                rows.append(np.concatenate(r))
        return np.array(rows)
    rows = []
    for x in range(n1):
        r = [np.eye(n1)[x], nu]
        if full:
            r.append([game.U1[x] @ nu, game.U2[x] @ nu])
        rows.append(np.concatenate(r))
    return np.array(rows)


def _opponent_forecast(spec, snap: _Snapshot) -> Optional[np.ndarray]:
    # law of Y_{n+1} given the past, for the player-1 view
    if spec.joint_view:
        return None
    return np.eye(spec.game.shape[1])[snap.x]


def _hyp2(spec, observation, snap: _Snapshot, M_n, MQ_next) -> float:
    """Expected size of M_{n+1} Q_{n+1} (V-hat_{n+1} - V-hat_n) over X_{n+1}.

    Only the player-1 view against a mirror opponent has a V-hat that moves
    with the state; elsewhere the difference is constant in x and the term
    vanishes because Q 1 = 0.
    """
    if observation == "occupation" or spec.joint_view:
        return 0.0
    nu = _opponent_forecast(spec, snap)
    V_now = _vhat(spec, observation, snap, nu)
    row = M_n[snap.x]
    total = 0.0
    for x_next in np.flatnonzero(row > 0):
        nu_next = np.eye(spec.game.shape[1])[x_next]
        D = _vhat(spec, observation, snap, nu_next) - V_now
        total += row[x_next] * sup_norm(MQ_next @ D)
    return float(total)


def _checkpoints(spec, xs, ys, checkpoints, weights, a, observation, with_diag):
    is_game = ys is not None
    n_states = spec.game.shape[0] if is_game else spec.size
    n_states2 = spec.game.shape[1] if is_game else 0
    positions = sorted(set(checkpoints) | {c + 1 for c in checkpoints})
    counts = _prefix_sums(xs, positions, n_states)
    counts2 = _prefix_sums(ys, positions, n_states2) if is_game else None
    wsums = _prefix_sums(xs, positions, n_states, weights=a) if weights is not None else None
    r_all = np.cumsum(a) if weights is not None else None
    if is_game:
        pay = np.stack([spec.game.U1[xs, ys], spec.game.U2[xs, ys]], axis=1)
        pay_cum = np.cumsum(pay, axis=0)

    def snap(p):
        return _Snapshot(
            p, int(xs[p - 1]), None if ys is None else int(ys[p - 1]),
            counts[p], None if counts2 is None else counts2[p],
            None if wsums is None else wsums[p],
            float(r_all[p - 1]) if r_all is not None else float(p),
        )

    def obs_average(s: _Snapshot):
        v = s.counts / s.n
        if not is_game:
            return v
        parts = [v, s.counts2 / s.n]
        if observation == "game_full":
            parts.append(pay_cum[s.n - 1] / s.n)
        return np.concatenate(parts)

    def obs_value(p):
        x = int(xs[p - 1])
        V = np.eye(n_states)[x]
        if not is_game:
            return V
        y = int(ys[p - 1])
        parts = [V, np.eye(n_states2)[y]]
        if observation == "game_full":
            parts.append(pay[p - 1])
        return np.concatenate(parts)

    out = []
    for n in checkpoints:
        s, s1 = snap(n), snap(n + 1)
        w = None if wsums is None else s.wsum / s.r
        theta, diag = None, None
        if with_diag:
            theta, diag = _diagnose(spec, observation, s, s1)
        out.append(
            Checkpoint(
                n=n, state=s.x, state2=s.y, v=obs_average(s), w=w, r=s.r,
                v_next=obs_average(s1), V_next=obs_value(n + 1),
                payoff_mean=float(pay_cum[n - 1, 0] / n) if is_game else None,
                theta=theta, diagnostics=diag,
            )
        )
    return out


def _diagnose(spec, observation, s: _Snapshot, s1: _Snapshot):
    n = s.n
    M_n = _matrix_at(spec, s)
    M_next = _matrix_at(spec, s1)
    try:
        P_n = pseudo_inverse(M_n)
        P_next = pseudo_inverse(M_next)
    except DecomposableError:
        return None, DiagnosticsRow.flagged(n, "decomposable")
    except np.linalg.LinAlgError:
        return None, DiagnosticsRow.flagged(n, "singular")
    Q_n, Q_next = P_n.entries, P_next.entries
    q_norm = sup_norm(Q_n)
    m_step = sup_norm(M_next - M_n)
    pi_step = sup_norm(P_next.pi - P_n.pi)
    logn = math.log(n)
    nu = None if (observation == "occupation" or spec.joint_view) else _opponent_forecast(spec, s)
    theta = P_n.pi @ _vhat(spec, observation, s, nu)
    row = DiagnosticsRow(
        n=n,
        q_norm=q_norm,
        q_step=sup_norm(Q_next - Q_n),
        pi_step=pi_step,
        hyp1_i=q_norm**2 * logn / n,
        prop34_ii=m_step * n / logn,
        prop34_iii=pi_step * math.sqrt(n / logn),
        hyp2=_hyp2(spec, observation, s, M_n, M_next @ Q_next),
        m_step=m_step,
    )
    return theta, row


# --- reports ----------------------------------------------------------------


# q_norm itself may grow; only the scaled and one-step quantities must fade
TREND_COLUMNS = ("q_step", "pi_step", "hyp1_i", "prop34_ii", "prop34_iii", "hyp2")


@dataclass(frozen=True)
class Verdict:
    column: str
    consistent: bool
    offending_n: Optional[int] = None


@dataclass(frozen=True)
class HypothesisReport:
    rows: tuple
    verdicts: dict

    def table(self) -> str:
        head = "n," + ",".join(DiagnosticsRow.COLUMNS) + ",flag"
        lines = [head]
        for r in self.rows:
            lines.append(",".join([str(r.n)] + [_fmt(getattr(r, k)) for k in DiagnosticsRow.COLUMNS] + [r.flag or ""]))
        return "\n".join(lines)


def _decreasing_verdict(column, ns, values, rtol=1e-9, atol=1e-12) -> Verdict:
    for k in range(1, len(values)):
        if values[k] > values[k - 1] * (1 + rtol) + atol:
            return Verdict(column, False, ns[k])
    if values[-1] <= atol or values[-1] < values[0] * (1 - rtol):
        return Verdict(column, True)
    return Verdict(column, False, ns[-1])


def hypothesis_report(trace: ProcessTrace) -> HypothesisReport:
    """Diagnostics table with a trend verdict per column.

    A column is consistent when it is nonincreasing over the last half of
    the checkpoints and ends either at zero or strictly below where the
    window started; otherwise the verdict names the first offending index.
    A flagged (decomposable) row in the window makes every column violated.
    """
    rows = tuple(c.diagnostics for c in trace.checkpoints if c.diagnostics is not None)
    if not rows:
        raise ValueError("trace carries no diagnostics")
    window = rows[len(rows) // 2:]
    if len(rows) >= 2 and len(window) < 2:
        window = rows[-2:]
    verdicts = {}
    flagged = [r.n for r in window if r.flag]
    for col in TREND_COLUMNS:
        if flagged:
            verdicts[col] = Verdict(col, False, flagged[0])
            continue
        verdicts[col] = _decreasing_verdict(col, [r.n for r in window], [getattr(r, col) for r in window])
    return HypothesisReport(rows, verdicts)


@dataclass(frozen=True)
class WeightedGapRow:
    n: int
    gap: float
    bound: float


def weighted_bound(weights: WeightSequence, horizon: int) -> np.ndarray:
    """(2 / r_n) sum_{i<=n} |r_i / i - a_{i+1}| for n = 1..horizon."""
    a = weights.a(horizon + 1)
    r = np.cumsum(a)
    i = np.arange(1, horizon + 1, dtype=float)
    terms = np.abs(r[:horizon] / i - a[1:])
    return 2.0 * np.cumsum(terms) / r[:horizon]


def weighted_gap_bound(trace: ProcessTrace, weights: Optional[WeightSequence] = None) -> list[WeightedGapRow]:
    """l1 distance between the weighted and plain occupation measures, with its bound."""
    weights = weights or trace.weights
    if weights is None or trace.observation != "occupation":
        raise ValueError("weighted gap needs an occupation trace with weights")
    bound = weighted_bound(weights, trace.horizon)
    return [
        WeightedGapRow(c.n, float(np.sum(np.abs(c.w - c.v))), float(bound[c.n - 1]))
        for c in trace.checkpoints
    ]


def run_replicas(spec, horizon: int, seed: int, replicas: int, workers: Optional[int] = None, **kw) -> list[ProcessTrace]:
    """Independent replicas keyed by (seed, replica index); order is by index."""
    if replicas < 1:
        raise ValueError("need at least one replica")

    def one(r):
        return simulate(spec, horizon, seed=seed, replica=r, **kw)

    workers = workers or 1
    if workers == 1:
        return [one(r) for r in range(replicas)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(replicas)))
