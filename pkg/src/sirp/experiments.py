"""Named experiments, their configuration, and summary-only pass/fail rules.

An experiment turns an :class:`ExperimentConfig` into a :class:`Summary`
(one row of replica statistics per named quantity) plus optional trace
tables.  Verdicts are a pure function of the summary, so ``report`` can
recompute them from the CSV written by ``run``.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import formats
from .games import TwoPlayerGame, nash_set_distance, zero_sum_value
from .inclusion import (
    argmin_interaction,
    constant_set,
    critical_set_quadratic,
    fixed_point_residual,
    integrate,
    lyapunov_check,
    lyapunov_H,
)
from .kernels import (
    AnnealingSpec,
    ConstantSpec,
    CoolingSchedule,
    ExponentialVRRWSpec,
    LinearVRRWSpec,
    admissible_A,
    derivative_bound,
    vrrw_field,
)
from .landscape import argmin_set, complete_exploration, energy_barrier, game_barrier, interaction_barrier
from .markov_core import (
    invariant_measure,
    is_indecomposable,
    is_irreducible,
    pseudo_inverse,
    stationary_projector,
    sup_norm,
)
from .process_engine import (
    ConstantStrategy,
    FictitiousPlaySpec,
    MarkovianFP,
    ProcessTrace,
    WeightSequence,
    hypothesis_report,
    run_replicas,
    scripted_opponent,
    weighted_bound,
    weighted_gap_bound,
)
from .spectral import holley_stroock_slope, q_bound_spectral, q_bound_uniform


class ConfigError(ValueError):
    pass


# --- configuration ----------------------------------------------------------


@dataclass
class ExperimentConfig:
    name: str
    source: Path
    output: Path
    sections: dict
    horizon: int = 1
    replicas: int = 1
    seed: int = 0
    checkpoints: Optional[list] = None
    workers: int = 1

    def get(self, section: str, key: str, default=None):
        # configparser folds option names to lower case
        return self.sections.get(section, {}).get(key.lower(), default)

    def require(self, section: str, key: str) -> str:
        v = self.get(section, key)
        if v is None:
            raise ConfigError(f"{self.source}: missing [{section}] {key}")
        return v

    def number(self, section: str, key: str, default=None, kind=float):
        raw = self.get(section, key)
        if raw is None:
            if default is None:
                raise ConfigError(f"{self.source}: missing [{section}] {key}")
            return default
        try:
            return kind(raw)
        except ValueError:
            raise ConfigError(f"{self.source}: [{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None

    def numbers(self, section: str, key: str, default=None) -> list[float]:
        raw = self.get(section, key)
        if raw is None:
            if default is None:
                raise ConfigError(f"{self.source}: missing [{section}] {key}")
            return list(default)
        try:
            return [float(t) for t in raw.replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"{self.source}: [{section}] {key} = {raw!r} is not a list of numbers") from None

    def path(self, section: str, key: str) -> Path:
        p = Path(self.require(section, key))
        p = p if p.is_absolute() else self.source.parent / p
        if not p.is_file():
            raise ConfigError(f"{self.source}: [{section}] {key} refers to missing file {p}")
        return p


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    sections = {s: dict(cp.items(s)) for s in cp.sections()}
    name = sections.get("experiment", {}).get("name")
    if name is None:
        raise ConfigError(f"{path}: missing [experiment] name")
    if name not in REGISTRY:
        raise ConfigError(f"{path}: unknown experiment {name!r}; known: {', '.join(sorted(REGISTRY))}")
    out = Path(sections["experiment"].get("output", f"out/{name}"))
    cfg = ExperimentConfig(name, path, out if out.is_absolute() else path.parent / out, sections)
    cfg.horizon = cfg.number("run", "horizon", 1, int)
    cfg.replicas = cfg.number("run", "replicas", 1, int)
    cfg.seed = cfg.number("run", "seed", 0, int)
    cfg.workers = cfg.number("run", "workers", 1, int)
    if cfg.horizon < 1:
        raise ConfigError(f"{path}: [run] horizon must be at least 1")
    if cfg.replicas < 1:
        raise ConfigError(f"{path}: [run] replicas must be at least 1")
    raw = cfg.get("run", "checkpoints", "dyadic")
    if raw.strip() != "dyadic":
        try:
            cps = sorted({int(t) for t in raw.replace(",", " ").split()})
        except ValueError:
            raise ConfigError(f"{path}: [run] checkpoints must be 'dyadic' or a list of integers") from None
        if not cps or cps[0] < 2 or cps[-1] > cfg.horizon:
            raise ConfigError(f"{path}: [run] checkpoints must lie in [2, horizon]")
        cfg.checkpoints = cps
    return cfg


# --- summaries and rules ----------------------------------------------------


@dataclass
class Summary:
    experiment: str
    target: str
    stats: dict = field(default_factory=dict)

    def add(self, name: str, values):
        vals = np.atleast_1d(np.asarray(values, dtype=float))
        self.stats[name] = vals

    def row(self, name: str) -> dict:
        v = self.stats[name]
        return {
            "mean": float(np.mean(v)),
            "sd": float(np.std(v, ddof=1)) if v.size > 1 else 0.0,
            "min": float(np.min(v)),
            "max": float(np.max(v)),
            "replicas": int(v.size),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# experiment: {self.experiment}\n")
        buf.write(f"# target: {self.target}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["statistic", "mean", "sd", "min", "max", "replicas"])
        for name in self.stats:
            r = self.row(name)
            wr.writerow([name] + [repr(r[k]) for k in ("mean", "sd", "min", "max")] + [r["replicas"]])
        return buf.getvalue()


def read_summary(text: str) -> tuple[str, dict]:
    """(experiment name, {statistic: row dict}) from a summary CSV."""
    name = None
    body = []
    for line in text.splitlines():
        if line.startswith("# experiment:"):
            name = line.split(":", 1)[1].strip()
        elif not line.startswith("#"):
            body.append(line)
    if name is None:
        raise ValueError("summary has no '# experiment:' line")
    rows = {}
    for r in csv.DictReader(body):
        rows[r["statistic"]] = {k: float(r[k]) for k in ("mean", "sd", "min", "max", "replicas")}
    return name, rows


_OPS = {"<=": operator.le, ">=": operator.ge, "<": operator.lt, ">": operator.gt}


@dataclass(frozen=True)
class Rule:
    statistic: str
    field: str
    op: str
    threshold: float

    def evaluate(self, rows: dict) -> tuple[bool, float]:
        if self.statistic not in rows:
            return False, math.nan
        observed = rows[self.statistic][self.field]
        return bool(_OPS[self.op](observed, self.threshold)), observed

    def describe(self) -> str:
        return f"{self.field}({self.statistic}) {self.op} {self.threshold!r}"


@dataclass(frozen=True)
class Verdict:
    passed: bool
    lines: tuple

    def text(self) -> str:
        return "\n".join(self.lines + (f"OVERALL {'PASS' if self.passed else 'FAIL'}",)) + "\n"


def evaluate(name: str, rows: dict) -> Verdict:
    lines = []
    ok = True
    rules = summary_rules(name, rows)
    for rule in rules:
        passed, observed = rule.evaluate(rows)
        ok &= passed
        lines.append(f"{'PASS' if passed else 'FAIL'} {rule.describe()} observed {observed!r}")
    if not rules:
        lines.append("REPORTED no pass/fail rule for this experiment")
    return Verdict(ok, tuple(lines))


@dataclass(frozen=True)
class RunResult:
    summary: Summary
    traces: dict  # file name -> ProcessTrace


@dataclass(frozen=True)
class RegistryEntry:
    name: str
    criterion: str
    target: str
    rules: tuple
    runner: Callable[[ExperimentConfig], RunResult]


# --- random chains ----------------------------------------------------------


def random_irreducible(rng: np.random.Generator, n: int, density: float = 0.5) -> np.ndarray:
    """Random irreducible chain: a random cycle plus random extra edges."""
    mask = rng.random((n, n)) < density
    perm = rng.permutation(n)
    for i in range(n):
        mask[perm[i], perm[(i + 1) % n]] = True
    W = rng.random((n, n)) * mask
    W[mask] += 0.05
    return W / W.sum(axis=1, keepdims=True)


def random_indecomposable(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random chain with one closed class and possibly some transient states."""
    k = int(rng.integers(1, n + 1))
    M = np.zeros((n, n))
    M[:k, :k] = random_irreducible(rng, k)
    for x in range(k, n):
        row = rng.random(n) * (rng.random(n) < 0.6)
        row[int(rng.integers(0, x))] += 0.1 + rng.random()  # an edge towards lower indices
        M[x] = row / row.sum()
    perm = rng.permutation(n)
    return M[np.ix_(perm, perm)]


# --- experiment runners -----------------------------------------------------


def _rng(cfg):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))


def _schedule(cfg, barrier: float, key: str = "A") -> CoolingSchedule:
    beta0 = cfg.number("schedule", "beta0", 0.0)
    raw = cfg.get("schedule", key, "admissible")
    if raw.strip() == "admissible":
        A = admissible_A(barrier, cfg.number("schedule", "safety", 0.95))
        if math.isinf(A):
            raise ConfigError(f"{cfg.source}: barrier is 0, so 'admissible' gives no finite rate; set [schedule] {key}")
    else:
        A = cfg.number("schedule", key)
    try:
        return CoolingSchedule(beta0, A)
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: {exc}") from None


def _load(cfg, key, loader, section="kernel"):
    try:
        return loader(cfg.path(section, key))
    except formats.FormatError as exc:
        raise ConfigError(str(exc)) from None


def _simulate(cfg, spec, **kw) -> list[ProcessTrace]:
    return run_replicas(
        spec, cfg.horizon, cfg.seed, cfg.replicas, workers=cfg.workers, checkpoints=cfg.checkpoints, **kw
    )


def _traces(label: str, traces) -> dict:
    return {f"trace_{label}r{t.replica}.csv": t for t in traces}


def run_pseudo_inverse(cfg) -> RunResult:
    rng = _rng(cfg)
    count = cfg.number("analysis", "count", 200, int)
    max_states = cfg.number("analysis", "max_states", 8, int)
    r1, r2, r3 = [], [], []
    for _ in range(count):
        n = int(rng.integers(1, max_states + 1))
        M = random_indecomposable(rng, n)
        assert is_indecomposable(M)
        res = pseudo_inverse(M).identity_residuals()
        r1.append(res[0])
        r2.append(res[1])
        r3.append(res[2])
    proj_q, proj_mq = [], []
    for _ in range(count):
        n = int(rng.integers(1, max_states + 1))
        pi = rng.dirichlet(np.ones(n))
        Pi = stationary_projector(pi)
        Q = pseudo_inverse(Pi).entries
        proj_q.append(sup_norm(Q - (np.eye(n) - Pi)))
        proj_mq.append(sup_norm(Pi @ Q))
    s = Summary(cfg.name, REGISTRY[cfg.name].target)
    s.add("q_one", r1)
    s.add("q_left_identity", r2)
    s.add("q_right_identity", r3)
    s.add("projector_q_error", proj_q)
    s.add("projector_mq", proj_mq)
    return RunResult(s, {})


def run_spectral_bounds(cfg) -> RunResult:
    rng = _rng(cfg)
    count = cfg.number("analysis", "count", 100, int)
    max_states = cfg.number("analysis", "max_states", 6, int)
    entry, unif = [], []
    for _ in range(count):
        n = int(rng.integers(2, max_states + 1))
        M = random_irreducible(rng, n)
        Q = np.abs(pseudo_inverse(M).entries)
        entry.append(float(np.max(Q - q_bound_spectral(M))))
        unif.append(float(Q.max() - q_bound_uniform(M)))
    s = Summary(cfg.name, REGISTRY[cfg.name].target)
    s.add("entrywise_excess", entry)
    s.add("uniform_excess", unif)
    return RunResult(s, {})


def _betas(cfg):
    lo = cfg.number("analysis", "beta_min", 10.0)
    hi = cfg.number("analysis", "beta_max", 40.0)
    k = cfg.number("analysis", "beta_points", 16, int)
    if not 0 <= lo < hi or k < 2:
        raise ConfigError(f"{cfg.source}: need 0 <= beta_min < beta_max and beta_points >= 2")
    return np.linspace(lo, hi, k)


def run_holley_stroock(cfg) -> RunResult:
    L = _load(cfg, "landscape", formats.load_landscape).landscape
    shape = cfg.get("kernel", "shape", "metropolis")
    slope = holley_stroock_slope(L.exploration, L.potential, _betas(cfg), shape)
    barrier = energy_barrier(L)
    s = Summary(cfg.name, REGISTRY[cfg.name].target)
    s.add("slope", slope)
    s.add("barrier", barrier)
    s.add("relative_error", abs(slope + barrier) / barrier if barrier > 0 else abs(slope))
    return RunResult(s, {})


def _annealing_spec(cfg, key="A"):
    L = _load(cfg, "landscape", formats.load_landscape).landscape
    shape = cfg.get("kernel", "shape", "metropolis")
    sched = _schedule(cfg, energy_barrier(L), key)
    return L, AnnealingSpec.from_potential(L.exploration, L.potential, sched, shape)


def _argmin_mass(L, traces):
    S = list(argmin_set(L.potential))
    return [float(t.final.v[S].sum()) for t in traces]


def run_annealing(cfg) -> RunResult:
    L, spec = _annealing_spec(cfg)
    traces = _simulate(cfg, spec)
    s = Summary(cfg.name, REGISTRY[cfg.name].target)
    s.add("mass_argmin", _argmin_mass(L, traces))
    s.add("rate_A", spec.schedule.A)
    out = _traces("", traces)
    if cfg.get("schedule", "violation_A") is not None:
        _, vspec = _annealing_spec(cfg, "violation_A")
        vtraces = _simulate(cfg, vspec)
        s.add("violation_mass_argmin", _argmin_mass(L, vtraces))
        s.add("violation_rate_A", vspec.schedule.A)
        out.update(_traces("violation_", vtraces))
    return RunResult(s, out)


def prop34_ii_ratio(trace: ProcessTrace) -> float:
    """Largest |M_{n+1} - M_n| / (c |beta_{n+1} - beta_n|) over the checkpoints."""
    spec = trace.spec
    c = derivative_bound(spec.M0, spec.W)
    worst = 0.0
    for cp in trace.checkpoints:
        d = cp.diagnostics
        db = abs(float(spec.schedule(cp.n + 1) - spec.schedule(cp.n)))
        if d.m_step == 0:
            continue
        worst = max(worst, d.m_step / (c * db) if db > 0 else math.inf)
    return worst


def run_annealing_diagnostics(cfg) -> RunResult:
    _, spec = _annealing_spec(cfg)
    traces = _simulate(cfg, spec)
    s = Summary(cfg.name, REGISTRY[cfg.name].target)
    reports = [hypothesis_report(t) for t in traces]
    s.add("hyp1_i_consistent", [float(r.verdicts["hyp1_i"].consistent) for r in reports])
    s.add("prop34_ii_bound_ratio", [prop34_ii_ratio(t) for t in traces])
    s.add("prop34_ii_max", [max(c.diagnostics.prop34_ii for c in t.checkpoints) for t in traces])
    s.add("hyp1_i_final", [t.final.diagnostics.hyp1_i for t in traces])
    return RunResult(s, _traces("", traces))


def run_constant_chain(cfg) -> RunResult:
    M = _load(cfg, "matrix", formats.load_matrix).matrix
    if not is_indecomposable(M):
        raise ConfigError(f"{cfg.source}: constant strategy must be indecomposable")
    traces = _simulate(cfg, ConstantSpec(M))
    s = Summary(cfg.name, REGISTRY[cfg.name].target)
    pi = invariant_measure(M)
    s.add("l1_error", [float(np.abs(t.final.v - pi).sum()) for t in traces])
    return RunResult(s, _traces("", traces))


def _interaction(cfg):
    U = _load(cfg, "interaction", lambda p: formats.load_matrix(p, stochastic=False)).matrix
    return U


def run_vrrw_linear(cfg) -> RunResult:
    U = _interaction(cfg)
    try:
        spec = LinearVRRWSpec(U)
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: {exc}") from None
    if not np.allclose(U, U.T):
        raise ConfigError(f"{cfg.source}: this experiment needs a symmetric interaction matrix")
    traces = _simulate(cfg, spec, diagnostics=False)
    crit = critical_set_quadratic(U)
    h_crit = [lyapunov_H(U, p) for p in crit.points]
    s = Summary(cfg.name, REGISTRY[cfg.name].target)
    vs = [t.final.v for t in traces]
    s.add("residual", [float(np.linalg.norm(vrrw_field(U, v))) for v in vs])
    s.add("h_gap", [min(abs(lyapunov_H(U, v) - h) for h in h_crit) for v in vs])
    return RunResult(s, _traces("", traces))


def _exploration(cfg, n):
    raw = cfg.get("kernel", "exploration", "complete")
    if raw.strip() == "complete":
        return complete_exploration(n)
    M0 = _load(cfg, "exploration", formats.load_matrix).matrix
    if M0.shape != (n, n) or not is_irreducible(M0):
        raise ConfigError(f"{cfg.source}: exploration matrix must be irreducible of size {n}")
    return M0


def run_vrrw_exponential(cfg) -> RunResult:
    U = _interaction(cfg)
    M0 = _exploration(cfg, U.shape[0])
    sched = _schedule(cfg, interaction_barrier(U, M0))
    traces = _simulate(cfg, ExponentialVRRWSpec(M0, U, sched, cfg.get("kernel", "shape", "metropolis")), diagnostics=False)
    C = argmin_interaction(U)
    fixed = [p for p in critical_set_quadratic(U).points if fixed_point_residual(C, p) <= 1e-9]
    if not fixed:
        raise ConfigError(f"{cfg.source}: interaction matrix has no fixed point among its critical points")
    s = Summary(cfg.name, REGISTRY[cfg.name].target)
    s.add("fixed_points", len(fixed))
    s.add("distance", [min(float(np.linalg.norm(t.final.v - p)) for p in fixed) for t in traces])
    return RunResult(s, _traces("", traces))


def _game(cfg) -> TwoPlayerGame:
    return _load(cfg, "game", formats.load_game)


def run_zero_sum_fp(cfg) -> RunResult:
    game = _game(cfg)
    if not game.is_zero_sum:
        raise ConfigError(f"{cfg.source}: game must be zero-sum")
    n1, n2 = game.shape
    shape = cfg.get("kernel", "shape", "metropolis")
    M1, M2 = _exploration(cfg, n1), _exploration(cfg, n2)
    barrier = max(game_barrier(game.U1, M1), game_barrier(game.own_payoff(2), M2))
    sched = _schedule(cfg, barrier)
    spec = FictitiousPlaySpec(game, MarkovianFP(M1, sched, shape), MarkovianFP(M2, sched, shape))
    traces = _simulate(cfg, spec, observation=cfg.get("kernel", "observation", "game_full"))
    val = zero_sum_value(game)
    s = Summary(cfg.name, REGISTRY[cfg.name].target)
    s.add("value", val.value)
    s.add("player1_distance", [float(np.linalg.norm(t.final.v[:n1] - val.v1)) for t in traces])
    s.add("player2_distance", [float(np.linalg.norm(t.final.v[n1:n1 + n2] - val.v2)) for t in traces])
    s.add("payoff_error", [abs(t.final.payoff_mean - val.value) for t in traces])
    s.add("nash_distance", [nash_set_distance(game, t.final.v[:n1], t.final.v[n1:n1 + n2]) for t in traces])
    return RunResult(s, _traces("", traces))


def lazy_strategy(n: int, eps: float) -> np.ndarray:
    """Stay with probability eps, otherwise move uniformly to another action."""
    if not 0 <= eps <= 1 or n < 2:
        raise ValueError("lazy strategy needs eps in [0, 1] and at least two actions")
    M = np.full((n, n), (1.0 - eps) / (n - 1))
    np.fill_diagonal(M, eps)
    return M


def run_counterexample(cfg) -> RunResult:
    game = _game(cfg)
    n1, _ = game.shape
    eps = cfg.number("kernel", "epsilon", 0.2)
    try:
        p1 = ConstantStrategy(lazy_strategy(n1, eps))
        spec = FictitiousPlaySpec(game, p1, scripted_opponent("mirror"))
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: {exc}") from None
    traces = _simulate(cfg, spec, observation="game_full")
    s = Summary(cfg.name, REGISTRY[cfg.name].target)
    s.add("payoff_mean", [t.final.payoff_mean for t in traces])
    tails = []
    for t in traces:
        cps = t.checkpoints[len(t.checkpoints) // 2:]
        tails.append(min(c.diagnostics.hyp2 for c in cps))
    s.add("hyp2_tail_min", tails)
    s.add("hyp2_consistent", [float(hypothesis_report(t).verdicts["hyp2"].consistent) for t in traces])
    return RunResult(s, _traces("", traces))


def run_weighted(cfg) -> RunResult:
    U = _interaction(cfg)
    try:
        spec = LinearVRRWSpec(U)
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: {exc}") from None
    alphas = cfg.numbers("weights", "alpha", [1.0, -0.5])
    ref = cfg.number("weights", "reference_n", 1000, int)
    if not 1 <= ref <= cfg.horizon:
        raise ConfigError(f"{cfg.source}: [weights] reference_n must lie in [1, horizon]")
    s = Summary(cfg.name, REGISTRY[cfg.name].target)
    out = {}
    for k, alpha in enumerate(alphas):
        w = WeightSequence(alpha)
        traces = _simulate(cfg, spec, weights=w, diagnostics=False)
        excess = [max(r.gap - r.bound for r in weighted_gap_bound(t)) for t in traces]
        bound = weighted_bound(w, cfg.horizon)
        s.add(f"alpha{k}_value", alpha)
        s.add(f"alpha{k}_gap_excess", excess)
        s.add(f"alpha{k}_bound_ratio", bound[-1] / bound[ref - 1])
        out.update(_traces(f"alpha{k}_", traces))
    return RunResult(s, out)


def run_inclusion(cfg) -> RunResult:
    rng = _rng(cfg)
    s = Summary(cfg.name, REGISTRY[cfg.name].target)
    # constant map: Euler iterates against their closed form
    errs = []
    for _ in range(20):
        pi = rng.dirichlet(np.ones(3))
        v0 = rng.dirichlet(np.ones(3))
        h = 0.05
        sol = integrate(constant_set(pi), v0, h, 5.0)
        k = np.arange(sol.points.shape[0])[:, None]
        errs.append(float(np.max(np.abs(sol.points - (pi + (1 - h) ** k * (v0 - pi))))))
    s.add("closed_form_error", errs)
    # order of convergence towards the exact flow pi + exp(-t)(v0 - pi)
    pi = np.array([0.2, 0.3, 0.5])
    v0 = np.array([0.9, 0.05, 0.05])
    T = 1.0
    hs = [0.1, 0.05, 0.025, 0.0125]
    e = []
    for h in hs:
        sol = integrate(constant_set(pi), v0, h, T)
        e.append(float(np.linalg.norm(sol.points[-1] - (pi + math.exp(-T) * (v0 - pi)))))
    s.add("euler_order", [math.log2(e[i] / e[i + 1]) for i in range(len(e) - 1)])
    # Lyapunov decrease along argmin-interaction solutions
    U = _interaction(cfg) if cfg.get("kernel", "interaction") else np.array([[1.0, 2.0, 2.0], [2.0, 1.0, 2.0], [2.0, 2.0, 1.0]])
    starts = cfg.number("analysis", "starts", 20, int)
    h = cfg.number("analysis", "step", 0.01)
    C = argmin_interaction(U)
    excess = []
    for _ in range(starts):
        v0 = rng.dirichlet(np.ones(U.shape[0]))
        verdict = lyapunov_check(integrate(C, v0, h, 10.0), U)
        excess.append(verdict.worst_increase - verdict.tol_h)
    s.add("lyapunov_excess", excess)
    return RunResult(s, {})


REGISTRY: dict[str, RegistryEntry] = {}


def _register(*entries):
    for e in entries:
        REGISTRY[e.name] = e


_register(
    RegistryEntry(
        "pseudo_inverse_identities", "A1",
        "pseudo-inverse identities Q1 = 0, Q(I-M) = (I-M)Q = I-Pi; M = Pi gives Q = I-Pi and MQ = 0",
        (
            Rule("q_one", "max", "<=", 1e-9),
            Rule("q_left_identity", "max", "<=", 1e-9),
            Rule("q_right_identity", "max", "<=", 1e-9),
            Rule("projector_q_error", "max", "<=", 1e-12),
            Rule("projector_mq", "max", "<=", 1e-12),
        ),
        run_pseudo_inverse,
    ),
    RegistryEntry(
        "spectral_bounds", "A2",
        "entrywise |Q(x,y)| <= sqrt(pi(y)/pi(x))/lambda and the uniform spectral bound on |Q|",
        (Rule("entrywise_excess", "max", "<=", 1e-9), Rule("uniform_excess", "max", "<=", 1e-9)),
        run_spectral_bounds,
    ),
    RegistryEntry(
        "holley_stroock", "A3",
        "log(lambda(beta))/beta -> -U# for the annealing kernel",
        (Rule("relative_error", "max", "<=", 0.15),),
        run_holley_stroock,
    ),
    RegistryEntry(
        "annealing", "A4",
        "annealing with A < 1/(2 U#) concentrates v_n on Argmin U",
        (Rule("mass_argmin", "mean", ">=", 0.9),),
        run_annealing,
    ),
    RegistryEntry(
        "annealing_diagnostics", "A5",
        "|Q_n|^2 log(n)/n decreases and |M_{n+1}-M_n| <= c |beta_{n+1}-beta_n|",
        (Rule("hyp1_i_consistent", "min", ">=", 1.0), Rule("prop34_ii_bound_ratio", "max", "<=", 1.0 + 1e-9)),
        run_annealing_diagnostics,
    ),
    RegistryEntry(
        "constant_chain", "A6",
        "a constant indecomposable strategy has v_n -> pi",
        (Rule("l1_error", "mean", "<=", 0.05),),
        run_constant_chain,
    ),
    RegistryEntry(
        "vrrw_linear", "A7",
        "symmetric linear reinforcement: limit set inside the critical set of v -> U(v,v)",
        (Rule("residual", "mean", "<=", 0.05), Rule("h_gap", "max", "<=", 0.05)),
        run_vrrw_linear,
    ),
    RegistryEntry(
        "vrrw_exponential", "A8",
        "exponential reinforcement with a unique fixed point converges to it",
        (Rule("distance", "mean", "<=", 0.05),),
        run_vrrw_exponential,
    ),
    RegistryEntry(
        "zero_sum_fp", "A9",
        "Markovian fictitious play in a zero-sum game: empirical play -> optimal strategies, payoff -> value",
        (
            Rule("player1_distance", "mean", "<=", 0.1),
            Rule("player2_distance", "mean", "<=", 0.1),
            Rule("payoff_error", "mean", "<=", 0.05),
        ),
        run_zero_sum_fp,
    ),
    RegistryEntry(
        "counterexample_mirror", "A10",
        "eps-lazy strategy against a mirror opponent: payoff -> -(1-eps), the second hypothesis fails",
        (
            Rule("payoff_mean", "mean", ">=", -0.85),
            Rule("payoff_mean", "mean", "<=", -0.75),
            Rule("hyp2_tail_min", "min", ">", 0.01),
        ),
        run_counterexample,
    ),
    RegistryEntry(
        "weighted_average", "A11",
        "|w_n - v_n| <= (2/r_n) sum |r_i/i - a_{i+1}| and the bound decays",
        (),
        run_weighted,
    ),
    RegistryEntry(
        "inclusion", "A12",
        "Euler scheme for dv/dt in -v + C(v): closed form, first order, Lyapunov decrease",
        (
            Rule("closed_form_error", "max", "<=", 1e-12),
            Rule("euler_order", "min", ">=", 0.9),
            Rule("euler_order", "max", "<=", 1.1),
            Rule("lyapunov_excess", "max", "<=", 0.0),
        ),
        run_inclusion,
    ),
)


def summary_rules(name: str, rows: dict) -> tuple:
    """Rules of ``name``; rules that depend on the run's shape are rebuilt from the rows."""
    entry = REGISTRY[name]
    if name == "weighted_average":
        ks = sorted({int(k.split("_")[0][5:]) for k in rows if k.startswith("alpha")})
        return tuple(
            r for k in ks for r in (
                Rule(f"alpha{k}_gap_excess", "max", "<=", 0.0),
                Rule(f"alpha{k}_bound_ratio", "max", "<", 1.0),
            )
        )
    return entry.rules
