import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cfpilot.airlink import make_codebook, sum_mse
from cfpilot.baselines import (OracleInputs, estimate_pathloss, hungarian, pa_exhaustive,
                               pa_hungarian, pa_random, pa_tabu)
from cfpilot.errors import InfeasibleError


def random_oracle(rng, K, M, T_p, sigma_sq=1e-3, p_mask=0.5):
    beta = rng.uniform(0.01, 1.0, (K, M))
    mask = rng.random((K, M)) < p_mask
    mask[np.arange(K), rng.integers(0, M, K)] = True
    return OracleInputs(beta, mask, sigma_sq, T_p)


def analytic(oracle, pilots):
    """Objective through the airlink formula, independent of the oracle's own bookkeeping."""
    X = make_codebook(oracle.T_p)[:, pilots]
    return sum_mse(X, oracle.beta, oracle.mask, oracle.sigma_sq)


def brute_force(oracle):
    best, arg = np.inf, None
    for p in itertools.product(range(oracle.T_p), repeat=oracle.K):
        c = analytic(oracle, np.array(p))
        if arg is None or c < best - 1e-12 * max(1.0, best):
            best, arg = c, np.array(p)
    return arg, best


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_cost_matches_airlink(seed):
    rng = np.random.default_rng(seed)
    o = random_oracle(rng, 6, 5, 3)
    p = rng.integers(0, 3, 6)
    assert o.cost(p) == pytest.approx(analytic(o, p), rel=1e-12)
    k, t = int(rng.integers(6)), int(rng.integers(3))
    q = p.copy()
    q[k] = t
    assert o.move_delta(p, k, t) == pytest.approx(o.cost(q) - o.cost(p), abs=1e-12)


def test_negative_beta_rejected():
    with pytest.raises(ValueError):
        OracleInputs(-np.ones((2, 2)), np.ones((2, 2), bool), 0.1, 2)


def test_random_uniform_and_seeded():
    assert pa_random(1, 4, np.random.default_rng(0))[0] in range(4)
    draws = pa_random(100000, 4, np.random.default_rng(1))
    assert stats.chisquare(np.bincount(draws, minlength=4)).pvalue > 1e-3
    np.testing.assert_array_equal(pa_random(10, 3, np.random.default_rng(2)),
                                  pa_random(10, 3, np.random.default_rng(2)))


def test_es_orthogonal_when_enough_pilots():
    o = random_oracle(np.random.default_rng(3), 4, 6, 4)
    p = pa_exhaustive(o)
    assert len(set(p)) == 4
    assert o.cost(p) == pytest.approx(o.sigma_sq * o.mask.sum())


def test_es_hand_instance():
    beta = np.array([[1.0, 0.1], [0.9, 0.2], [0.1, 1.0]])
    mask = np.array([[True, False], [True, False], [False, True]])
    o = OracleInputs(beta, mask, 0.0, 2)
    p = pa_exhaustive(o)
    # users 0 and 1 share RU 0 strongly, user 2 is far: 0 and 1 must split
    assert p[0] != p[1]
    np.testing.assert_array_equal(p, [0, 1, 0] if o.cost([0, 1, 0]) <= o.cost([0, 1, 1]) else [0, 1, 1])


@pytest.mark.parametrize("seed", range(8))
def test_es_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    K, T_p = [(3, 2), (5, 2), (5, 3), (6, 2)][seed % 4]
    o = random_oracle(rng, K, 4, T_p)
    p = pa_exhaustive(o, chunk=7)
    ref, best = brute_force(o)
    assert o.cost(p) == pytest.approx(best, rel=1e-12)
    np.testing.assert_array_equal(p, ref)


def test_es_lexicographic_tie():
    o = OracleInputs(np.ones((3, 2)), np.ones((3, 2), bool), 0.0, 3)
    np.testing.assert_array_equal(pa_exhaustive(o), [0, 1, 2])
    o2 = OracleInputs(np.ones((2, 1)), np.ones((2, 1), bool), 0.0, 2)
    np.testing.assert_array_equal(pa_exhaustive(o2), [0, 1])


def test_es_budget():
    o = random_oracle(np.random.default_rng(4), 10, 3, 4)
    with pytest.raises(InfeasibleError):
        pa_exhaustive(o, budget=1000)


def test_tabu_examples():
    rng = np.random.default_rng(5)
    o = random_oracle(rng, 5, 4, 2)
    opt = pa_exhaustive(o)
    np.testing.assert_array_equal(pa_tabu(o, 200, init=opt), opt)
    init = np.array([0, 0, 0, 1, 1])
    np.testing.assert_array_equal(pa_tabu(o, 0, init=init), init)


def ra_average(o, n=100, seed=0):
    rng = np.random.default_rng(seed)
    return np.mean([o.cost(pa_random(o.K, o.T_p, rng)) for _ in range(n)])


def test_tabu_beats_random_on_average():
    for seed in range(5):
        o = random_oracle(np.random.default_rng(100 + seed), 4, 6, 2)
        assert o.cost(pa_tabu(o, rng=np.random.default_rng(seed))) <= ra_average(o)


def test_hungarian_examples():
    C = np.full((4, 4), 5.0) - 4 * np.eye(4)
    np.testing.assert_array_equal(hungarian(C), np.arange(4))
    p = hungarian(np.ones((3, 3)))
    assert sorted(p) == [0, 1, 2]
    with pytest.raises(ValueError):
        hungarian(np.ones((2, 3)))
    with pytest.raises(ValueError):
        hungarian(np.array([[np.inf, 0], [0, 0]]))


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2 ** 31), n=st.integers(1, 7))
def test_hungarian_matches_enumeration(seed, n):
    C = np.random.default_rng(seed).normal(size=(n, n))
    best = min(sum(C[i, q[i]] for i in range(n)) for q in itertools.permutations(range(n)))
    perm = hungarian(C)
    assert sorted(perm) == list(range(n))
    assert C[np.arange(n), perm].sum() == pytest.approx(best, abs=1e-12)


def test_pa_hungarian_examples():
    o = random_oracle(np.random.default_rng(6), 3, 5, 4)
    p = pa_hungarian(o)
    assert len(set(p)) == 3
    for seed in range(5):
        o = random_oracle(np.random.default_rng(200 + seed), 6, 6, 2)
        c = o.cost(pa_hungarian(o))
        assert c >= o.cost(pa_exhaustive(o)) - 1e-12
        assert c <= ra_average(o)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), K=st.integers(2, 7), T_p=st.integers(2, 3))
def test_es_is_lower_bound_and_local_search_monotone(seed, K, T_p):
    rng = np.random.default_rng(seed)
    o = random_oracle(rng, K, 5, T_p)
    es = o.cost(pa_exhaustive(o))
    init = pa_random(K, T_p, rng)
    tabu = pa_tabu(o, 30, init=init)
    assert es <= o.cost(tabu) + 1e-12
    assert o.cost(tabu) <= o.cost(init) + 1e-12
    assert es <= o.cost(pa_hungarian(o)) + 1e-12
    assert es <= o.cost(init) + 1e-12


def test_hungarian_sweeps_never_worsen_first_pass():
    for seed in range(10):
        o = random_oracle(np.random.default_rng(300 + seed), 9, 6, 3)
        assert o.cost(pa_hungarian(o, 10)) <= o.cost(pa_hungarian(o, 0)) + 1e-12


def test_pathloss_estimation():
    beta = np.array([[0.5, 0.02], [1e-3, 2.0]])
    rng = np.random.default_rng(7)
    np.testing.assert_allclose(estimate_pathloss(beta, 100000, 0.0, rng), beta, rtol=0.01)
    h = np.exp(1j * rng.uniform(0, 2 * np.pi, (10, 2, 2)))
    np.testing.assert_allclose(estimate_pathloss(beta, 10, 0.0, h=h), beta, rtol=1e-12)
    est = estimate_pathloss(np.ones((100, 100)), 10, 0.0, np.random.default_rng(8))
    med = np.median(np.abs(est - 1.0))
    assert 0.15 <= med <= 0.35
    assert np.all(estimate_pathloss(np.full((50, 50), 1e-6), 10, 1e-3, rng) >= 0)
