import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvmdp.core_model import StateGrid
from mvmdp.exceptions import (CapExceeded, InvalidAction, SizeMismatch, SupportMismatch)
from mvmdp.measures import (EmpiricalMeasure, JointEmpiricalMeasure, SimplexMeasure,
                            admissible_action_count, admissible_actions, agent_rules,
                            check_action, disintegrate, enumerate_PN, from_text,
                            multinomial_pmf, multiset_count, nearest_empirical, nearest_index,
                            project_to_grid, to_text, w1_discrete, w1_matching)


def brute_compositions(M, N):
    return sorted((c for c in itertools.product(range(N + 1), repeat=M) if sum(c) == N),
                  reverse=True)


# -- enumeration ------------------------------------------------------------------

def test_enumerate_examples():
    assert enumerate_PN(2, 2).tolist() == [[2, 0], [1, 1], [0, 2]]
    assert enumerate_PN(1, 5).tolist() == [[5]]
    assert len(enumerate_PN(3, 2)) == 6


@given(st.integers(1, 5), st.integers(1, 6))
def test_enumerate_matches_brute_force(M, N):
    got = [tuple(r) for r in enumerate_PN(M, N)]
    assert got == brute_compositions(M, N)
    assert len(got) == math.comb(N + M - 1, M - 1) == multiset_count(M, N)


def test_enumerate_cap_reports_exact_count():
    with pytest.raises(CapExceeded) as err:
        enumerate_PN(10, 10, cap=1000)
    assert err.value.count == math.comb(19, 9)


def test_enumeration_is_read_only():
    states = enumerate_PN(3, 3)
    with pytest.raises(ValueError):
        states[0, 0] = 7


def test_measure_types_validate():
    with pytest.raises(ValueError):
        EmpiricalMeasure((1, -1))
    with pytest.raises(ValueError):
        SimplexMeasure((0.5, 0.6))
    mu = EmpiricalMeasure((1, 3))
    assert mu.total == 4 and np.allclose(mu.weights, [0.25, 0.75])


# -- distances ----------------------------------------------------------------------

def test_w1_discrete_examples():
    assert w1_discrete(SimplexMeasure((1.0, 0.0)), SimplexMeasure((0.0, 1.0))) == 2
    assert w1_discrete(SimplexMeasure((0.3, 0.7)), SimplexMeasure((0.3, 0.7))) == 0
    assert w1_discrete(SimplexMeasure((0.6, 0.4)), SimplexMeasure((0.5, 0.5))) == pytest.approx(0.2)
    assert w1_discrete(EmpiricalMeasure((1, 1)), SimplexMeasure((0.5, 0.5))) == 0
    with pytest.raises(SupportMismatch):
        w1_discrete(SimplexMeasure((1.0, 0.0)), SimplexMeasure((1.0, 0.0, 0.0)))


def test_w1_matching_examples():
    assert w1_matching([[0.0], [1.0]], [[0.0], [1.0]]) == 0
    assert w1_matching([[0.0], [0.0]], [[1.0], [1.0]]) == 1
    assert w1_matching([[0.0], [0.4]], [[0.1], [0.5]]) == pytest.approx(0.1)
    with pytest.raises(SizeMismatch):
        w1_matching([[0.0]], [[0.0], [1.0]])


def brute_matching(a, b):
    return min(np.mean(np.linalg.norm(a - b[list(p)], axis=1))
               for p in itertools.permutations(range(len(a))))


clouds = st.integers(1, 5).flatmap(
    lambda n: st.tuples(*[st.lists(st.lists(st.floats(-2, 2), min_size=d, max_size=d),
                                   min_size=n, max_size=n) for d in (2, 2, 2)]))


@given(clouds, st.randoms(use_true_random=False))
def test_w1_matching_metric_properties(abc, rnd):
    a, b, c = (np.array(v) for v in abc)
    dab = w1_matching(a, b)
    assert dab == pytest.approx(brute_matching(a, b), abs=1e-9)
    assert dab == pytest.approx(w1_matching(b, a), abs=1e-12)
    assert w1_matching(a, c) <= dab + w1_matching(b, c) + 1e-9
    perm = list(range(len(b)))
    rnd.shuffle(perm)
    assert w1_matching(a, b[perm]) == pytest.approx(dab, abs=1e-12)
    assert w1_matching(a, a[::-1]) == pytest.approx(0.0, abs=1e-12)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.integers(1, 6), st.data())
def test_w1_matching_1d_exact_permutation_invariance(xs, M, data):
    a = np.array(xs)[:, None]
    b = np.array(data.draw(st.lists(st.floats(0, 1), min_size=len(xs), max_size=len(xs))))[:, None]
    perm = data.draw(st.permutations(range(len(xs))))
    assert w1_matching(a, b[list(perm)]) == w1_matching(a, b)


@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_same_cell_pattern_within_L_X(M, n, data):
    """Two clouds with identical cell counts are within L_X in matching distance."""
    g = StateGrid.uniform([[0, 1]], M)
    cells = np.array(data.draw(st.lists(st.integers(0, M - 1), min_size=n, max_size=n)))
    u1 = np.array(data.draw(st.lists(st.floats(0, 0.99), min_size=n, max_size=n)))
    u2 = np.array(data.draw(st.lists(st.floats(0, 0.99), min_size=n, max_size=n)))
    a = (g.lows[cells] + (g.highs[cells] - g.lows[cells]) * u1[:, None])
    b = (g.lows[cells] + (g.highs[cells] - g.lows[cells]) * u2[:, None])
    assert project_to_grid(a, g) == project_to_grid(b, g)
    assert w1_matching(a, b) <= g.L_X + 1e-12


# -- nearest-neighbour map ----------------------------------------------------------

def test_nearest_empirical_examples():
    assert nearest_empirical(SimplexMeasure((0.6, 0.4)), 2).counts == (1, 1)
    assert nearest_empirical(SimplexMeasure((0.75, 0.25)), 2).counts == (2, 0)
    assert nearest_empirical(SimplexMeasure((0.25, 0.75)), 2).counts == (1, 1)
    assert nearest_empirical(EmpiricalMeasure((1, 2, 1)), 4).counts == (1, 2, 1)


@given(st.integers(1, 4), st.integers(1, 4))
def test_rho_idempotent_exhaustive(M, n):
    states = enumerate_PN(M, n)
    assert np.array_equal(nearest_index(states / n, states / n), np.arange(len(states)))


@given(st.integers(2, 4), st.integers(1, 6), st.data())
def test_nearest_empirical_is_brute_force_argmin(M, n, data):
    raw = np.array(data.draw(st.lists(st.floats(0.01, 1), min_size=M, max_size=M)))
    mu = raw / raw.sum()
    best = nearest_empirical(mu, n)
    d_best = np.abs(best.weights - mu).sum()
    for e in enumerate_PN(M, n):
        assert d_best <= np.abs(e / n - mu).sum() + 1e-12


def test_nearest_cap():
    with pytest.raises(CapExceeded):
        nearest_empirical(np.full(12, 1 / 12), 12, cap=100)


# -- projection, actions, disintegration ---------------------------------------------

def test_project_examples(two_cells):
    assert project_to_grid([[0.1], [0.2]], two_cells).counts == (2, 0)
    assert project_to_grid([[0.1], [0.9]], two_cells).counts == (1, 1)
    reps = np.repeat(two_cells.representatives[1:], 3, axis=0)
    assert project_to_grid(reps, two_cells).counts == (0, 3)


def test_admissible_action_examples():
    acts = admissible_actions(EmpiricalMeasure((2, 0)), 2)
    assert [a.counts[0].tolist() for a in acts] == [[2, 0], [1, 1], [0, 2]]
    assert all(a.counts[1].tolist() == [0, 0] for a in acts)
    assert len(admissible_actions(EmpiricalMeasure((1, 1)), 2)) == 4
    assert len(admissible_actions(EmpiricalMeasure((0, 1, 0)), 5)) == 5


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))
def test_admissible_actions_count_and_marginals(M, N, K):
    for mu in enumerate_PN(M, N):
        acts = admissible_actions(mu, K)
        assert len(acts) == admissible_action_count(mu, K)
        assert len({a for a in acts}) == len(acts)
        for a in acts:
            check_action(mu, a)
            assert a.counts.sum() == N


def test_check_action_rejects_wrong_marginal():
    with pytest.raises(InvalidAction):
        check_action((2, 0), JointEmpiricalMeasure([[1, 0], [1, 0]]))


def test_disintegrate_examples():
    g = disintegrate(JointEmpiricalMeasure([[1, 1], [2, 0]]))
    assert g.tolist() == [[0.5, 0.5], [1.0, 0.0]]
    prod = disintegrate(JointEmpiricalMeasure([[2, 4], [1, 2]]))
    assert np.allclose(prod[0], prod[1])
    assert disintegrate(JointEmpiricalMeasure([[0, 0], [1, 1]]))[0].tolist() == [0.5, 0.5]


@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 3), st.data())
def test_disintegrate_recomposes(M, N, K, data):
    mu = enumerate_PN(M, N)[data.draw(st.integers(0, multiset_count(M, N) - 1))]
    acts = admissible_actions(mu, K)
    theta = acts[data.draw(st.integers(0, len(acts) - 1))]
    gamma = disintegrate(theta)
    assert np.allclose(gamma.sum(axis=1), 1.0, atol=1e-12)
    occ = mu > 0
    assert np.allclose((gamma * mu[:, None])[occ], theta.counts[occ], atol=1e-12)


def test_agent_rules_grid():
    rules = agent_rules((1, 0), 2, 2)
    assert rules.shape == (3, 2, 2)
    assert rules[:, 0].tolist() == [[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]
    assert np.all(rules[:, 1] == 0.5)


def test_multinomial_pmf():
    states = enumerate_PN(2, 2)
    assert multinomial_pmf(states, [0.5, 0.5]).tolist() == [0.25, 0.5, 0.25]
    p = multinomial_pmf(enumerate_PN(3, 4), [0.2, 0.3, 0.5])
    assert p.sum() == pytest.approx(1.0, abs=1e-14)


@given(st.lists(st.integers(0, 5), min_size=1, max_size=6).filter(lambda c: sum(c) > 0))
def test_text_round_trip_empirical(counts):
    mu = EmpiricalMeasure(tuple(counts))
    assert from_text(to_text(mu)) == mu


@given(st.lists(st.floats(0.001, 1), min_size=1, max_size=6))
def test_text_round_trip_simplex(raw):
    w = np.array(raw) / np.sum(raw)
    w = w / w.sum()
    back = from_text(to_text(SimplexMeasure(tuple(w))))
    assert np.array_equal(back.weights, SimplexMeasure(tuple(w)).weights)
