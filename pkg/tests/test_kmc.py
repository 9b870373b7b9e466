import itertools
import math

import numpy as np
import pytest
from scipy import stats

from zrplab.kmc import (autocorrelation, read_trace, relaxation_estimate, sample_canonical,
                        simulate, simulate_replicas, write_summary_csv, write_trace)
from zrplab.measures import canonical_marginal
from zrplab.rates import constant, linear, staircase
from zrplab.statespace import StateSpace, build_generator


def replay(traj):
    """Configurations before each traced event."""
    eta = np.array(traj.meta["initial_eta"], dtype=np.int64)
    out = []
    for rec in traj.trace:
        out.append(eta.copy())
        eta[rec["src"]] -= 1
        eta[rec["dst"]] += 1
    return np.array(out), eta


def exit_rate(eta, c, flavor):
    L = eta.size
    vals = c.values(int(eta.max()))
    if flavor == "complete":
        return sum(vals[n] * (L - 1) / L for n in eta)
    nb = [1 if x in (0, L - 1) else 2 for x in range(L)]
    return sum(0.5 * vals[n] * k for n, k in zip(eta, nb))


@pytest.mark.parametrize("flavor", ["complete", "local"])
def test_holding_times_are_exponential(flavor):
    c = staircase(2)
    traj = simulate(5, 7, c, flavor=flavor, T=2.0e4, seed=11, trace_cap=200_000)
    assert traj.events == len(traj.trace) > 50_000
    states, final = replay(traj)
    np.testing.assert_array_equal(final, traj.final_eta)
    hold = np.diff(np.concatenate([[0.0], traj.trace["time"]]))
    rates = np.array([exit_rate(s, c, flavor) for s in states])
    z = hold * rates
    # rescaled holding times are iid Exp(1)
    assert abs(z.mean() - 1) < 4 / math.sqrt(z.size)
    assert stats.kstest(z, "expon").pvalue > 1e-3


def test_jump_choice_frequencies():
    c = staircase(2)
    traj = simulate(4, 6, c, T=2.0e4, seed=5, trace_cap=200_000)
    states, _ = replay(traj)
    vals = c.values(6)
    # the source is drawn with weight c(eta_x); the target uniformly among the others
    w = vals[states]
    p = w / w.sum(axis=1, keepdims=True)
    hit = traj.trace["src"][:, None] == np.arange(4)[None, :]
    z = (hit - p).sum(axis=0) / np.sqrt((p * (1 - p)).sum(axis=0))
    assert np.all(np.abs(z) < 4)
    assert np.all(traj.trace["src"] != traj.trace["dst"])
    rel = (traj.trace["dst"].astype(int) - traj.trace["src"].astype(int)) % 4
    counts = np.bincount(rel, minlength=4)[1:]
    assert stats.chisquare(counts).pvalue > 1e-3


@pytest.mark.parametrize("flavor", ["complete", "local"])
def test_edge_flow_symmetry(flavor):
    traj = simulate(5, 6, staircase(2), flavor=flavor, T=2.0e4, seed=3, trace_cap=300_000)
    L = 5
    flow = np.zeros((L, L))
    np.add.at(flow, (traj.trace["src"], traj.trace["dst"]), 1)
    for x, y in itertools.combinations(range(L), 2):
        a, b = flow[x, y], flow[y, x]
        if flavor == "local" and abs(x - y) > 1:
            assert a == b == 0
            continue
        assert abs(a - b) <= 4 * math.sqrt(a + b) + 1


def test_histogram_matches_marginal():
    c, L, N = staircase(2), 4, 6
    marg = canonical_marginal(c, L, N).probs()
    hs = np.array([t.histogram for t in simulate_replicas(L, N, c, 16, T=500.0, seed=7)])
    np.testing.assert_allclose(hs.sum(axis=1), 1.0, atol=1e-9)
    mean = hs.mean(axis=0)
    se = hs.std(axis=0, ddof=1) / math.sqrt(len(hs))
    assert np.all(np.abs(mean - marg) <= 4 * se + 1e-4)


def test_relaxes_to_stationary_law():
    # packed start, run past the relaxation time, chi-square over all 35 states
    L, N = 4, 4
    c = staircase(2)
    gen = build_generator(StateSpace(L, N), c)
    R = 3000
    finals = np.array([simulate(L, N, c, T=25.0, seed=21, replica=r, start="packed",
                                sample_dt=1.0).final_eta for r in range(R)])
    idx = gen.space.rank(finals)
    counts = np.bincount(idx, minlength=gen.size)
    assert gen.size == 35
    assert stats.chisquare(counts, R * gen.stationary).pvalue > 1e-3


def test_conservation_and_observables():
    c = staircase(3)
    traj = simulate(6, 9, c, T=200.0, seed=1)
    assert traj.final_eta.sum() == 9
    assert np.all(traj.final_eta >= 0)
    lin = simulate(6, 9, linear(), T=50.0, seed=1)
    assert np.all(lin.samples["sum_c"] == 9)
    assert np.all(lin.samples["sum_sq"] >= 9 * 9 / 6 - 1e-9)
    assert traj.times[1] - traj.times[0] == pytest.approx(traj.meta["sample_dt"])


def test_determinism_and_streams():
    a = simulate(8, 12, staircase(2), T=100.0, seed=4, trace_cap=1000)
    b = simulate(8, 12, staircase(2), T=100.0, seed=4, trace_cap=1000)
    c = simulate(8, 12, staircase(2), T=100.0, seed=4, replica=1, trace_cap=1000)
    assert a.trace.tobytes() == b.trace.tobytes()
    np.testing.assert_array_equal(a.samples["sum_sq"], b.samples["sum_sq"])
    assert a.trace.tobytes() != c.trace.tobytes()


def test_bad_arguments():
    with pytest.raises(ValueError):
        simulate(4, 3, linear(), T=0.0)
    with pytest.raises(ValueError):
        simulate(4, 3, linear(), flavor="ring")
    with pytest.raises(ValueError):
        simulate(4, 3, linear(), eta0=[1, 1, 1, 1])
    with pytest.raises(ValueError):
        write_trace(simulate(3, 2, linear(), T=1.0), "/nonexistent")


def test_sample_canonical_against_enumeration():
    c, L, N = staircase(2), 3, 5
    gen = build_generator(StateSpace(L, N), c)
    draws = sample_canonical(c, L, N, 100_000, seed=9)
    assert np.all(draws.sum(axis=1) == N)
    counts = np.bincount(gen.space.rank(draws), minlength=gen.size)
    assert stats.chisquare(counts, 100_000 * gen.stationary).pvalue > 1e-3


def test_single_particle_relaxation_time():
    # N = 1, linear rates: eta_0 is a two-valued Markov function with rho(t) = exp(-t)
    traj = simulate(6, 1, linear(), T=2.0e4, seed=2)
    est = relaxation_estimate(traj, "eta0")
    assert est["tau"] == pytest.approx(1.0, abs=max(4 * est["err"], 0.05))
    assert relaxation_estimate(traj, "sum_c")["flag"] == "constant or too short"


def test_autocorrelation_ar1():
    rng = np.random.default_rng(0)
    x = np.zeros(200_000)
    for i in range(1, x.size):
        x[i] = 0.8 * x[i - 1] + rng.normal()
    rho = autocorrelation(x, 5)
    np.testing.assert_allclose(rho, 0.8 ** np.arange(6), atol=0.01)


def test_trace_and_summary_round_trip(tmp_path):
    traj = simulate(5, 4, constant(), T=30.0, seed=8, trace_cap=10_000)
    write_trace(traj, tmp_path / "t.bin")
    back = read_trace(tmp_path / "t.bin")
    assert back.tobytes() == traj.trace.tobytes()
    assert (tmp_path / "t.bin").stat().st_size == 16 * len(back)
    write_summary_csv(traj, tmp_path / "s.csv")
    data = np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 2], traj.samples["eta0"])
