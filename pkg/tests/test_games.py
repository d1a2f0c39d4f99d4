import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from sirp.games import (
    MATCHING,
    TwoPlayerGame,
    best_response_support,
    mixed_payoff,
    nash_gap,
    nash_set_distance,
    nash_set_samples,
    support_enumeration,
    zero_sum_value,
)

RPS = np.array([[0, -1, 1], [1, 0, -1], [-1, 1, 0.0]])


def lp_value(U):
    """Row player's maximin by linear programming: max t s.t. p @ U >= t."""
    n1, n2 = U.shape
    c = np.zeros(n1 + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-U.T, np.ones((n2, 1))])
    A_eq = np.concatenate([np.ones(n1), [0.0]])[None, :]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n2), A_eq=A_eq, b_eq=[1.0], bounds=[(0, None)] * n1 + [(None, None)])
    assert res.success
    return -res.fun


def grid_value(U, steps=200):
    """Maximin over the 1/steps grid of the row simplex."""
    n1 = U.shape[0]
    best = -np.inf
    for i in range(steps + 1):
        if n1 == 2:
            P = np.array([[i / steps, 1 - i / steps]])
        else:
            j = np.arange(steps - i + 1)
            P = np.stack([np.full(j.size, i), j, steps - i - j], axis=1) / steps
        best = max(best, float((P @ U).min(axis=1).max()))
    return best


def test_game_construction():
    g = TwoPlayerGame.zero_sum(MATCHING)
    assert g.is_zero_sum and not g.is_potential
    assert np.array_equal(g.U2, -MATCHING)
    p = TwoPlayerGame.potential(MATCHING)
    assert p.is_potential
    assert g.shape == (2, 2)
    with pytest.raises(ValueError):
        TwoPlayerGame(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        TwoPlayerGame(np.array([[np.inf, 0], [0, 0]]), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        g.payoff(3)


def test_own_payoff_orientation():
    U1 = np.arange(6.0).reshape(2, 3)
    g = TwoPlayerGame(U1, -U1)
    assert g.own_payoff(1).shape == (2, 3)
    assert np.array_equal(g.own_payoff(2), U1.T * -1)


def test_matching_value():
    v = zero_sum_value(TwoPlayerGame.zero_sum(MATCHING))
    assert v.value == pytest.approx(-0.5)
    assert np.allclose(v.v1, 0.5) and np.allclose(v.v2, 0.5)


def test_rps_value():
    v = zero_sum_value(TwoPlayerGame.zero_sum(RPS))
    assert v.value == pytest.approx(0, abs=1e-12)
    assert np.allclose(v.v1, 1 / 3) and np.allclose(v.v2, 1 / 3)


def test_mixed_payoff_and_gap():
    g = TwoPlayerGame.zero_sum(MATCHING)
    assert mixed_payoff(g, [1, 0], [1, 0], 1) == 0
    assert mixed_payoff(g, [1, 0], [0, 1], 2) == 1
    assert nash_gap(g, [0.5, 0.5], [0.5, 0.5]) == pytest.approx(0)
    # against (1, 0) player 1 gains 0.5 by switching from the uniform mix to action 0
    assert nash_gap(g, [0.5, 0.5], [1, 0]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        mixed_payoff(g, [1, 0, 0], [1, 0], 1)


def test_best_response_support():
    g = TwoPlayerGame.zero_sum(RPS)
    assert best_response_support(g, 1, [1, 0, 0]) == (1,)
    assert best_response_support(g, 1, np.full(3, 1 / 3)) == (0, 1, 2)
    assert best_response_support(g, 2, [1, 0, 0]) == (1,)


@pytest.mark.parametrize("seed", range(40))
def test_zero_sum_value_matches_lp_and_grid(seed):
    rng = np.random.default_rng(seed)
    n1, n2 = (3, 3) if seed % 2 else (2, int(rng.integers(2, 5)))
    U = rng.normal(size=(n1, n2))
    v = zero_sum_value(TwoPlayerGame.zero_sum(U))
    assert v.value == pytest.approx(lp_value(U), abs=1e-9)
    g = grid_value(U)
    spread = np.ptp(U)
    assert g <= v.value + 1e-12
    assert g >= v.value - spread * n1 / 200
    assert nash_gap(TwoPlayerGame.zero_sum(U), v.v1, v.v2) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(-5, 5), st.floats(0.1, 10))
def test_value_equivariance(seed, shift, scale):
    U = np.random.default_rng(seed).normal(size=(3, 3))
    base = zero_sum_value(TwoPlayerGame.zero_sum(U)).value
    moved = zero_sum_value(TwoPlayerGame.zero_sum(scale * U + shift)).value
    assert moved == pytest.approx(scale * base + shift, abs=1e-8 * (1 + scale))
    neg = zero_sum_value(TwoPlayerGame.zero_sum(-U.T)).value
    assert neg == pytest.approx(-base, abs=1e-9)


def test_zero_sum_value_rejects_general_sum():
    with pytest.raises(ValueError):
        zero_sum_value(TwoPlayerGame.potential(MATCHING))


def test_support_enumeration_coordination():
    U = np.array([[1.0, 0.0], [0.0, 2.0]])
    eqs = support_enumeration(TwoPlayerGame.potential(U))
    assert len(eqs) == 3
    mixed = [e for e in eqs if np.all(e[0] > 0)]
    assert len(mixed) == 1
    assert np.allclose(mixed[0][0], [2 / 3, 1 / 3]) and np.allclose(mixed[0][1], [2 / 3, 1 / 3])


@pytest.mark.parametrize("seed", range(20))
def test_support_enumeration_outputs_are_equilibria(seed):
    rng = np.random.default_rng(seed)
    g = TwoPlayerGame(rng.normal(size=(3, 3)), rng.normal(size=(3, 3)))
    eqs = support_enumeration(g)
    assert eqs  # nondegenerate games have at least one
    for a, b in eqs:
        assert nash_gap(g, a, b) <= 1e-9
        assert a.sum() == pytest.approx(1) and b.sum() == pytest.approx(1)


def test_nash_set_distance_examples():
    g = TwoPlayerGame.zero_sum(MATCHING)
    assert nash_set_distance(g, [0.5, 0.5], [0.5, 0.5]) == pytest.approx(0, abs=1e-12)
    assert nash_set_distance(g, [1, 0], [0.5, 0.5]) == pytest.approx(np.sqrt(0.5))
    # constant game: every profile is an equilibrium, including grid points
    flat = TwoPlayerGame.potential(np.zeros((2, 2)))
    assert len(nash_set_samples(flat, grid_steps=4)) >= 25
    assert nash_set_distance(flat, [0.3, 0.7], [0.6, 0.4], grid_steps=10) == pytest.approx(0, abs=1e-12)
