import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import eigh, expm

from zrplab.functionals import entropy
from zrplab.rates import linear, staircase
from zrplab.statespace import (StateSpace, build_generator, change_of_variable_check,
                               enumerate_space, evolve)


def dense_oracle(L, N, c, flavor):
    """Generator from the definition, by dictionary lookup."""
    states = [s for s in itertools.product(range(N + 1), repeat=L) if sum(s) == N]
    index = {s: i for i, s in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    for s, i in index.items():
        for x in range(L):
            if s[x] == 0:
                continue
            if flavor == "complete":
                targets = [(y, c(s[x]) / L) for y in range(L) if y != x]
            else:
                targets = [(y, c(s[x]) / 2) for y in (x - 1, x + 1) if 0 <= y < L]
            for y, r in targets:
                t = list(s)
                t[x] -= 1
                t[y] += 1
                Q[i, index[tuple(t)]] += r
    Q -= np.diag(Q.sum(axis=1))
    return states, Q


def as_dense(gen):
    return gen.matrix.toarray()


def test_sizes_and_round_trip():
    assert StateSpace(2, 1).size == 2
    assert StateSpace(3, 2).size == 6
    sp = StateSpace(6, 8)
    assert sp.size == math.comb(13, 5) == 1287
    ranks = sp.rank(sp.states)
    np.testing.assert_array_equal(ranks, np.arange(sp.size))
    np.testing.assert_array_equal(sp.unrank(ranks), sp.states)
    assert np.all(sp.states.sum(axis=1) == 8)


def test_cap():
    with pytest.raises(ValueError):
        enumerate_space(10, 30, cap=1000)


@given(st.integers(1, 7), st.integers(0, 7))
def test_rank_bijection(L, N):
    sp = StateSpace(L, N)
    assert sp.size == math.comb(N + L - 1, L - 1)
    np.testing.assert_array_equal(sp.rank(sp.unrank(np.arange(sp.size))), np.arange(sp.size))
    # lexicographic order
    assert all(tuple(a) < tuple(b) for a, b in zip(sp.states[:-1], sp.states[1:]))


@pytest.mark.parametrize("flavor", ["complete", "local"])
@pytest.mark.parametrize("L,N", [(2, 3), (3, 2), (4, 3), (3, 4)])
def test_generator_matches_definition(L, N, flavor):
    c = staircase(2)
    gen = build_generator(StateSpace(L, N), c, flavor)
    states, Q = dense_oracle(L, N, c, flavor)
    order = gen.space.rank(np.array(states))
    np.testing.assert_allclose(as_dense(gen)[np.ix_(order, order)], Q, atol=1e-14)


def test_two_state_chain():
    gen = build_generator(StateSpace(2, 1), linear(), "complete")
    np.testing.assert_allclose(as_dense(gen), [[-0.5, 0.5], [0.5, -0.5]])
    vals = np.linalg.eigvalsh(as_dense(gen))
    np.testing.assert_allclose(sorted(vals), [-1.0, 0.0], atol=1e-14)


def test_complete_equals_local_at_two_sites():
    for N in (1, 3, 5):
        a = build_generator(StateSpace(2, N), staircase(2), "complete")
        b = build_generator(StateSpace(2, N), staircase(2), "local")
        np.testing.assert_allclose(as_dense(a), as_dense(b), atol=0)


@pytest.mark.parametrize("flavor", ["complete", "local"])
def test_reversibility_and_stationarity(flavor):
    gen = build_generator(StateSpace(4, 3), staircase(2), flavor)
    assert np.max(np.abs(as_dense(gen).sum(axis=1))) < 1e-12
    assert gen.detailed_balance_residual() < 1e-12
    assert gen.stationarity_residual() < 1e-12
    assert gen.stationary.sum() == pytest.approx(1.0, abs=1e-12)


def test_permutation_symmetry(rng):
    gen = build_generator(StateSpace(4, 4), staircase(2), "complete")
    perm = rng.permutation(4)
    P = gen.space.rank(gen.space.states[:, perm])
    Q = as_dense(gen)
    np.testing.assert_allclose(Q[np.ix_(P, P)], Q, atol=1e-14)


def test_change_of_variable(rng):
    sp = StateSpace(3, 2)
    c = linear()
    gen = build_generator(sp, c)
    ones = np.ones(sp.size)
    assert change_of_variable_check(sp, c, gen.stationary, [ones]) == 0.0
    eta_x = sp.states[:, 0].astype(float)
    assert change_of_variable_check(sp, c, gen.stationary, [eta_x]) < 1e-12
    fs = [rng.normal(size=sp.size) for _ in range(5)]
    assert change_of_variable_check(sp, c, gen.stationary, fs) < 1e-12


def test_evolve_against_expm(rng):
    gen = build_generator(StateSpace(3, 2), linear())
    f0 = rng.uniform(0.1, 2.0, gen.size)
    Q = as_dense(gen)
    for t in (0.0, 0.3, 2.0, 7.5):
        np.testing.assert_allclose(evolve(gen, f0, t), expm(t * Q) @ f0, atol=1e-12)
    np.testing.assert_array_equal(evolve(gen, f0, 0.0), f0)
    np.testing.assert_allclose(evolve(gen, np.ones(gen.size), 3.0), 1.0, atol=1e-12)


def test_entropy_decreases_from_indicator():
    gen = build_generator(StateSpace(3, 2), linear())
    nu = gen.stationary
    f0 = np.zeros(gen.size)
    f0[0] = 1.0 / nu[0]
    Q = as_dense(gen)
    ents = []
    for t in np.linspace(0.05, 3.0, 15):
        ft = evolve(gen, f0, t, tol=1e-13)
        np.testing.assert_allclose(ft, expm(t * Q) @ f0, rtol=1e-10)
        assert np.all(ft > 0)
        ents.append(entropy(ft, nu))
    assert np.all(np.diff(ents) < 0)


@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.integers(0, 10_000))
def test_semigroup_property(s, t, seed):
    gen = build_generator(StateSpace(3, 3), staircase(2))
    f = np.random.default_rng(seed).uniform(0.1, 3.0, gen.size)
    tol = 1e-12
    a = evolve(gen, evolve(gen, f, s, tol=tol), t, tol=tol)
    b = evolve(gen, f, s + t, tol=tol)
    assert np.max(np.abs(a - b)) <= 2 * tol * np.max(np.abs(f)) + 1e-14
    assert np.dot(gen.stationary, b) == pytest.approx(np.dot(gen.stationary, f), abs=1e-10)


def test_gap_against_dense_eigensolve():
    for L in (2, 5, 16, 64):
        gen = build_generator(StateSpace(L, 1), linear())
        nu = gen.stationary
        d = np.sqrt(nu)
        S = (d[:, None] * as_dense(gen)) / d[None, :]
        vals = np.sort(eigh(-0.5 * (S + S.T), eigvals_only=True))
        assert vals[1] == pytest.approx(1.0, abs=1e-10)


def test_exports(tmp_path):
    gen = build_generator(StateSpace(3, 2), linear())
    gen.write_coo(tmp_path / "q.txt")
    rows = np.loadtxt(tmp_path / "q.txt")
    Q = np.zeros((gen.size, gen.size))
    for i, j, r in rows:
        Q[int(i), int(j)] += r
    np.testing.assert_allclose(Q, as_dense(gen))
    gen.write_stationary_csv(tmp_path / "nu.csv")
    data = np.loadtxt(tmp_path / "nu.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(data[:, -1], gen.stationary, rtol=1e-15)
    np.testing.assert_array_equal(data[:, 1:-1], gen.space.states)


def test_evolve_with_huge_sup():
    # tolerance / sup|f| far below 1e-17 used to break the series cutoff
    gen = build_generator(StateSpace(3, 4), staircase(2))
    f0 = np.ones(gen.size)
    f0[3] = 1e25
    Q = as_dense(gen)
    np.testing.assert_allclose(evolve(gen, f0, 0.7), expm(0.7 * Q) @ f0, rtol=1e-9)
