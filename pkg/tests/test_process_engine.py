import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sirp.games import MATCHING, TwoPlayerGame
from sirp.kernels import (
    AnnealingSpec,
    ConstantSpec,
    CoolingSchedule,
    ExponentialVRRWSpec,
    LinearVRRWSpec,
    fictitious_kernel,
    vrrw_exponential_kernel,
    vrrw_linear_kernel,
)
from sirp.landscape import path_exploration
from sirp.process_engine import (
    ConstantStrategy,
    FictitiousPlaySpec,
    FixedMixed,
    KernelError,
    MarkovianFP,
    Mirror,
    WeightSequence,
    _generator,
    dyadic_checkpoints,
    hypothesis_report,
    run_replicas,
    scripted_opponent,
    simulate,
    step,
    update_average,
    update_weighted,
    weighted_bound,
    weighted_gap_bound,
)

M3 = np.array([[0.2, 0.5, 0.3], [0.5, 0.1, 0.4], [0.3, 0.4, 0.3]])
DIAG = np.array([[0.1, 1, 1], [1, 0.1, 1], [1, 1, 0.1]])


def draws_for(seed, horizon, replica=None, k=1):
    rng = _generator(seed, replica)
    return [rng.random(horizon) for _ in range(k)]


def fp_spec(A=0.5, opponent=None):
    M0 = np.full((2, 2), 0.5)
    p1 = MarkovianFP(M0, CoolingSchedule(0.0, A))
    p2 = opponent if opponent is not None else MarkovianFP(M0, CoolingSchedule(0.0, A))
    return FictitiousPlaySpec(TwoPlayerGame.zero_sum(MATCHING), p1, p2)


# --- primitives ----------------------------------------------------------------


def test_step_examples():
    assert step(0, [0.5, 0.5], 0.3) == 0
    assert step(0, [0.5, 0.5], 0.5) == 1
    assert step(2, M3, 0.0) == 0
    assert step(2, M3, 0.75) == 2
    assert step(1, [0.0, 1.0, 0.0], 0.999) == 1
    with pytest.raises(ValueError):
        step(0, [0.5, 0.4], 0.1)
    with pytest.raises(ValueError):
        step(0, [0.5, 0.5], 1.0)
    with pytest.raises(ValueError):
        step(0, [1.5, -0.5], 0.1)


def test_one_step_law():
    rng = np.random.default_rng(7)
    N = 100_000
    for x in range(3):
        hits = np.bincount([step(x, M3, u) for u in rng.random(N)], minlength=3) / N
        se = np.sqrt(M3[x] * (1 - M3[x]) / N)
        assert np.all(np.abs(hits - M3[x]) <= 4 * se)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=40))
def test_update_average_is_running_mean(path):
    v = np.zeros(4)
    for n, x in enumerate(path, start=1):
        v = update_average(v, np.eye(4)[x], n)
    assert np.allclose(v, np.bincount(path, minlength=4) / len(path))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=40), st.floats(0, 3))
def test_update_weighted_is_weighted_mean(path, alpha):
    a = WeightSequence(alpha).a(len(path))
    w, r = np.zeros(4), 0.0
    for x, ai in zip(path, a):
        w, r = update_weighted(w, np.eye(4)[x], ai, r)
    assert r == pytest.approx(a.sum())
    assert np.allclose(w, np.bincount(path, weights=a, minlength=4) / a.sum())


def test_update_validation():
    with pytest.raises(ValueError):
        update_average([0.0], [1.0], 0)
    with pytest.raises(ValueError):
        update_weighted([0.0], [1.0], 0.0, 1.0)


def test_weight_sequence():
    w = WeightSequence(1.0)
    assert np.allclose(w.a(3), np.log([2, 3, 4]))
    assert np.allclose(w.r(3), np.cumsum(np.log([2, 3, 4])))
    assert WeightSequence().unit and np.all(WeightSequence().a(5) == 1)


def test_dyadic_checkpoints():
    assert dyadic_checkpoints(100) == [2, 4, 8, 16, 32, 64, 100]
    assert dyadic_checkpoints(64) == [2, 4, 8, 16, 32, 64]
    assert dyadic_checkpoints(1) == []


def test_scripted_opponent():
    assert isinstance(scripted_opponent("mirror"), Mirror)
    assert isinstance(scripted_opponent("fixed_mixed", [0.5, 0.5]), FixedMixed)
    with pytest.raises(ValueError):
        scripted_opponent("fixed_mixed")
    with pytest.raises(ValueError):
        scripted_opponent("random")


# --- loops against a plain reference --------------------------------------------


def reference_path(matrix_at, x0, draws):
    xs = [x0]
    for k in range(1, len(draws) + 1):
        xs.append(step(xs[-1], matrix_at(k, xs), draws[k - 1]))
    return np.array(xs)


def test_constant_loop_matches_step():
    tr = simulate(ConstantSpec(M3), 500, seed=3, diagnostics=False)
    (d,) = draws_for(3, 500)
    ref = reference_path(lambda k, xs: M3, 0, d)
    assert np.array_equal(tr.states, ref[:500])


@pytest.mark.parametrize("shape", ["metropolis", "logistic"])
def test_annealing_loop_matches_step(shape):
    spec = AnnealingSpec.from_potential(path_exploration(5), [0, 3, 1, 2, 0], CoolingSchedule(0.5, 0.4), shape)
    tr = simulate(spec, 400, seed=11, x0=2, diagnostics=False)
    (d,) = draws_for(11, 400)
    ref = reference_path(lambda k, xs: spec.matrix(k), 2, d)
    assert np.array_equal(tr.states, ref[:400])


@pytest.mark.parametrize("alpha", [0.0, 1.5])
def test_linear_vrrw_loop_matches_step(alpha):
    spec = LinearVRRWSpec(DIAG)
    w = WeightSequence(alpha)
    tr = simulate(spec, 300, seed=5, weights=w, diagnostics=False)
    (d,) = draws_for(5, 300)
    a = w.a(301)

    def M(k, xs):
        wsum = np.bincount(xs[:k], weights=a[:k], minlength=3)
        return vrrw_linear_kernel(DIAG, 1.0, wsum)

    assert np.array_equal(tr.states, reference_path(M, 0, d)[:300])


def test_exponential_vrrw_loop_matches_step():
    M0 = np.full((3, 3), 1 / 3)
    sched = CoolingSchedule(0.0, 1.0)
    spec = ExponentialVRRWSpec(M0, DIAG, sched)
    tr = simulate(spec, 300, seed=9, diagnostics=False)
    (d,) = draws_for(9, 300)

    def M(k, xs):
        return vrrw_exponential_kernel(M0, DIAG, float(sched(k)), np.bincount(xs[:k], minlength=3) / k)

    assert np.array_equal(tr.states, reference_path(M, 0, d)[:300])


def test_game_loop_matches_step():
    spec = fp_spec(0.7)
    tr = simulate(spec, 300, seed=13, diagnostics=False)
    d1, d2 = draws_for(13, 300, k=2)
    xs, ys = [0], [0]
    M0 = np.full((2, 2), 0.5)
    for k in range(1, 301):
        beta = 0.7 * math.log(k)
        c1 = np.bincount(xs, minlength=2) / k
        c2 = np.bincount(ys, minlength=2) / k
        K1 = fictitious_kernel(M0, MATCHING, beta, c2)
        K2 = fictitious_kernel(M0, -MATCHING.T, beta, c1)
        xs.append(step(xs[-1], K1, d1[k - 1]))
        ys.append(step(ys[-1], K2, d2[k - 1]))
    assert np.array_equal(tr.states, xs[:300])
    assert np.array_equal(tr.states2, ys[:300])


def test_mirror_and_fixed_mixed():
    tr = simulate(fp_spec(opponent=Mirror()), 200, seed=1, y0=1, diagnostics=False)
    assert tr.states2[0] == 1
    assert np.array_equal(tr.states2[1:], tr.states[:-1])
    q = np.array([0.3, 0.7])
    tr = simulate(fp_spec(opponent=FixedMixed(q)), 20_000, seed=2, diagnostics=False)
    freq = np.bincount(tr.states2, minlength=2) / 20_000
    assert np.all(np.abs(freq - q) <= 4 * np.sqrt(q * (1 - q) / 20_000))


def test_constant_player_in_game():
    spec = FictitiousPlaySpec(TwoPlayerGame.zero_sum(MATCHING), ConstantStrategy(np.eye(2)[[1, 0]]), Mirror())
    tr = simulate(spec, 10, seed=0, diagnostics=False)
    assert list(tr.states) == [0, 1] * 5


# --- determinism and bookkeeping ----------------------------------------------------


def test_determinism_and_replicas():
    spec = ConstantSpec(M3)
    a = simulate(spec, 1000, seed=42, replica=3)
    b = simulate(spec, 1000, seed=42, replica=3)
    assert np.array_equal(a.states, b.states)
    assert a.to_csv() == b.to_csv()
    c = simulate(spec, 1000, seed=42, replica=4)
    assert not np.array_equal(a.states, c.states)
    serial = run_replicas(spec, 500, 7, 4, workers=1)
    threaded = run_replicas(spec, 500, 7, 4, workers=4)
    for s, t in zip(serial, threaded):
        assert np.array_equal(s.states, t.states)
    assert np.array_equal(serial[2].states, simulate(spec, 500, seed=7, replica=2).states)


def test_prefix_is_horizon_independent():
    spec = ConstantSpec(M3)
    short = simulate(spec, 100, seed=8, diagnostics=False)
    long = simulate(spec, 1000, seed=8, diagnostics=False)
    # the draw stream is consumed in order, so the first 100 states agree
    assert np.array_equal(short.states, long.states[:100])


@pytest.mark.parametrize(
    "spec",
    [
        ConstantSpec(M3),
        LinearVRRWSpec(DIAG),
        AnnealingSpec.from_potential(path_exploration(4), [0, 1, 0, 2], CoolingSchedule(0.0, 0.3)),
    ],
)
def test_drift_identity_and_simplex(spec):
    w = WeightSequence(1.0)
    tr = simulate(spec, 2000, seed=4, weights=w, checkpoints=[2, 10, 99, 500, 2000])
    for c in tr.checkpoints:
        assert np.allclose(c.v_next - c.v, (c.V_next - c.v) / (c.n + 1), atol=1e-15)
        assert np.all(c.v >= 0) and c.v.sum() == pytest.approx(1)
        assert np.all(c.w >= 0) and c.w.sum() == pytest.approx(1)
        assert c.r == pytest.approx(w.r(c.n)[-1])
        assert np.allclose(c.v, np.bincount(tr.states[: c.n], minlength=c.v.size) / c.n)


def test_game_checkpoint_fields():
    tr = simulate(fp_spec(), 500, seed=6, checkpoints=[50, 500])
    c = tr.final
    assert c.v.size == 2 + 2 + 2
    assert c.payoff_mean == pytest.approx(MATCHING[tr.states, tr.states2].mean())
    assert c.v[4] == pytest.approx(c.payoff_mean)
    assert c.v[5] == pytest.approx(-c.payoff_mean)
    assert np.allclose(c.v_next - c.v, (c.V_next - c.v) / (c.n + 1))
    pair = simulate(fp_spec(), 500, seed=6, checkpoints=[500], observation="game_pair")
    assert pair.final.v.size == 4


def test_validation():
    spec = ConstantSpec(M3)
    with pytest.raises(ValueError):
        simulate(spec, 0)
    with pytest.raises(ValueError):
        simulate(spec, 100, checkpoints=[1, 50])
    with pytest.raises(ValueError):
        simulate(spec, 100, checkpoints=[101])
    with pytest.raises(ValueError):
        simulate(spec, 100, observation="game_full")
    with pytest.raises(ValueError):
        simulate(spec, 100, x0=3)
    with pytest.raises(ValueError):
        simulate(fp_spec(), 100, observation="occupation")
    with pytest.raises(ValueError):
        simulate(fp_spec(), 100, weights=WeightSequence(1.0))
    with pytest.raises(TypeError):
        simulate(object(), 100)
    with pytest.raises(ValueError):
        FictitiousPlaySpec(TwoPlayerGame.zero_sum(MATCHING), Mirror(), Mirror())
    with pytest.raises(ValueError):
        FictitiousPlaySpec(TwoPlayerGame.zero_sum(MATCHING), ConstantStrategy(np.eye(3)), Mirror())


def test_kernel_error_on_zero_row():
    spec = LinearVRRWSpec(np.ones((2, 2)))
    object.__setattr__(spec, "Umat", np.array([[1.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(KernelError):
        simulate(spec, 50, seed=0)


def test_csv_round_trip():
    tr = simulate(ConstantSpec(M3), 300, seed=1, weights=WeightSequence(1.0))
    rows = list(csv.DictReader(io.StringIO(tr.to_csv())))
    assert [int(r["n"]) for r in rows] == [c.n for c in tr.checkpoints]
    for r, c in zip(rows, tr.checkpoints):
        assert float(r["v1"]) == c.v[1]
        assert float(r["w2"]) == c.w[2]
        assert float(r["q_norm"]) == c.diagnostics.q_norm
        assert r["payoff_mean"] == ""


# --- diagnostics and reports ---------------------------------------------------------


def test_constant_chain_diagnostics():
    tr = simulate(ConstantSpec(M3), 4096, seed=0)
    for c in tr.checkpoints:
        d = c.diagnostics
        assert d.q_step == 0 and d.pi_step == 0 and d.m_step == 0 and d.hyp2 == 0
        assert d.q_norm == pytest.approx(tr.checkpoints[0].diagnostics.q_norm)
        assert np.allclose(c.theta, 1 / 3)
    rep = hypothesis_report(tr)
    assert all(v.consistent for v in rep.verdicts.values())
    assert rep.table().splitlines()[0].startswith("n,q_norm")


def test_decomposable_rows_are_flagged():
    tr = simulate(ConstantSpec(np.eye(2)), 64, seed=0)
    assert all(c.diagnostics.flag == "decomposable" for c in tr.checkpoints)
    rep = hypothesis_report(tr)
    assert not any(v.consistent for v in rep.verdicts.values())
    assert rep.verdicts["q_step"].offending_n is not None


def test_hypothesis_report_needs_diagnostics():
    with pytest.raises(ValueError):
        hypothesis_report(simulate(ConstantSpec(M3), 64, seed=0, diagnostics=False))


def test_joint_view_has_no_hyp2():
    tr = simulate(fp_spec(), 256, seed=2)
    assert tr.spec.joint_view
    assert all(c.diagnostics.hyp2 == 0 for c in tr.checkpoints)
    assert tr.final.theta.size == 6


def test_mirror_view_hyp2_is_positive():
    tr = simulate(fp_spec(opponent=Mirror()), 256, seed=2)
    assert not tr.spec.joint_view
    assert all(c.diagnostics.hyp2 > 0 for c in tr.checkpoints)


def test_weighted_bound_unit_weights_vanish():
    assert np.all(weighted_bound(WeightSequence(0.0), 100) == 0)
    tr = simulate(ConstantSpec(M3), 500, seed=3, weights=WeightSequence(0.0))
    assert all(r.gap == pytest.approx(0, abs=1e-12) and r.bound == 0 for r in weighted_gap_bound(tr))


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("seed", range(3))
def test_weighted_gap_within_bound(alpha, seed):
    tr = simulate(LinearVRRWSpec(DIAG), 5000, seed=seed, weights=WeightSequence(alpha), diagnostics=False)
    rows = weighted_gap_bound(tr)
    for r in rows:
        assert r.gap <= r.bound + 1e-12
    b = weighted_bound(WeightSequence(alpha), 5000)
    assert b[-1] < b[99]


def test_weighted_gap_requires_weights():
    with pytest.raises(ValueError):
        weighted_gap_bound(simulate(ConstantSpec(M3), 64, seed=0, diagnostics=False))


def test_mirror_counterexample_violates_hyp2():
    from sirp.experiments import lazy_strategy

    spec = FictitiousPlaySpec(TwoPlayerGame.zero_sum(MATCHING), ConstantStrategy(lazy_strategy(2, 0.2)), Mirror())
    tr = simulate(spec, 4096, seed=0)
    rep = hypothesis_report(tr)
    assert not rep.verdicts["hyp2"].consistent
    assert rep.verdicts["hyp2"].offending_n == 4096
    assert all(c.diagnostics.hyp2 == pytest.approx(0.3) for c in tr.checkpoints)
