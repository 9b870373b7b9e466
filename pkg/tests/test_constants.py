import math

import numpy as np
import pytest
from scipy.linalg import eigh

from zrplab.ascent import RatioProblem
from zrplab.constants import (decay_certificate, logsob_constant, logsob_upper, mlsi_constant,
                              recursion_probe, spectral_gap, sweep, write_sweep_csv)
from zrplab.functionals import random_positive_functions
from zrplab.rates import constant, linear, staircase
from zrplab.statespace import StateSpace, build_generator


def dense_gap(gen):
    nu = gen.stationary
    d = np.sqrt(nu)
    Q = gen.matrix.toarray()
    S = d[:, None] * Q / d[None, :]
    return np.sort(eigh(-0.5 * (S + S.T), eigvals_only=True))[1]


@pytest.mark.parametrize("L,N", [(2, 5), (3, 4), (5, 3)])
def test_linear_gap_is_one(L, N):
    gen = build_generator(StateSpace(L, N), linear())
    assert spectral_gap(gen).value == pytest.approx(1.0, abs=1e-9)
    assert dense_gap(gen) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("N", [1, 3, 8, 20])
def test_constant_rate_two_sites_closed_form(N):
    # uniform nearest-neighbour walk on {0..N} with rate 1/2 each way
    gen = build_generator(StateSpace(2, N), constant())
    assert spectral_gap(gen).value == pytest.approx(1 - math.cos(math.pi / (N + 1)), rel=1e-9)


def test_gap_matches_dense_on_staircase():
    gen = build_generator(StateSpace(4, 5), staircase(2))
    est = spectral_gap(gen)
    assert est.value == pytest.approx(dense_gap(gen), rel=1e-9)
    assert est.provenance["residual"] < 1e-8


def test_gap_needs_two_states():
    with pytest.raises(ValueError):
        spectral_gap(build_generator(StateSpace(3, 0), linear()))


@pytest.mark.parametrize("L", [2, 3, 4, 8])
def test_logsob_single_particle_closed_form(L):
    exact = 2.0 if L == 2 else math.log(L - 1) / (1 - 2 / L)
    est = logsob_constant(build_generator(StateSpace(L, 1), linear()), restarts=8)
    assert est.value <= exact * (1 + 1e-9)
    assert est.value == pytest.approx(exact, rel=1e-5)
    assert est.upper >= exact


@pytest.mark.parametrize("c", [linear(), staircase(2), constant()], ids=lambda c: c.name)
def test_bound_ordering(c):
    gen = build_generator(StateSpace(3, 4), c)
    gap = spectral_gap(gen).value
    s = logsob_constant(gen, restarts=6)
    g = mlsi_constant(gen, restarts=6)
    assert s.value >= 2 / gap * (1 - 1e-9)
    assert g.value >= 0.5 / gap * (1 - 1e-9)
    assert g.value <= g.upper
    assert s.value <= s.upper
    assert g.upper == pytest.approx(logsob_upper(gen) / 4)
    # E(f, log f) >= 4 E(sqrt f, sqrt f) gives gamma <= s / 4 for the true constants;
    # check it on the gamma witness itself
    f = g.witness
    sp = RatioProblem.from_generator(gen, "logsob")
    mp = RatioProblem.from_generator(gen, "mlsi")
    assert mp.ratio_of(f) <= sp.ratio_of(f) / 4 * (1 + 1e-9)


def test_witness_reproduces_value():
    gen = build_generator(StateSpace(4, 4), staircase(2))
    g = mlsi_constant(gen, restarts=6)
    p = RatioProblem.from_generator(gen, "mlsi")
    assert p.ratio_of(g.witness) == pytest.approx(g.value, rel=1e-9)


def test_budget_monotone():
    gen = build_generator(StateSpace(4, 5), staircase(2))
    vals = [mlsi_constant(gen, restarts=r, seed=3).value for r in (2, 6, 12)]
    assert vals[0] <= vals[1] + 1e-12 <= vals[2] + 2e-12


def test_decay_certificate_holds_and_detects():
    gen = build_generator(StateSpace(3, 3), staircase(2))
    g = mlsi_constant(gen, restarts=6)
    cert = decay_certificate(gen, g.upper, n_traj=20, seed=1)
    assert cert["violations"] == 0
    assert cert["checked"] > 0
    assert cert["worst_ratio"] <= 1.0
    # the rate exp(-t / gamma) is only guaranteed with gamma >= the true constant;
    # a constant well below the witness value must be caught along the witness
    bad = decay_certificate(gen, 0.3 * g.value, starts=[g.witness])
    assert bad["violations"] > 0


def test_recursion_probe_identities():
    gen = build_generator(StateSpace(4, 4), staircase(2))
    fs = random_positive_functions(gen, 30, seed=2)
    sub = mlsi_constant(build_generator(StateSpace(3, 4), staircase(2)), restarts=4).value
    out = recursion_probe(gen, fs, gamma_sub=sub)
    assert out["i4_residual"] < 1e-9
    assert out["identification_tv"] < 1e-12
    cs = [c for _, c in out["pareto"]]
    assert all(a >= b - 1e-12 for a, b in zip(cs[:-1], cs[1:]))
    assert np.isfinite(out["recursion_slack"])


def test_sweep_rows_and_csv(tmp_path):
    rows = sweep(linear(), [2, 3], [1, 2], restarts=2, kinds=("mlsi",))
    assert [(r["L"], r["N"]) for r in rows] == [(2, 1), (2, 2), (3, 1), (3, 2)]
    for r in rows:
        assert r["gap"] == pytest.approx(1.0, abs=1e-9)
        assert r["s_lo"] == pytest.approx(2.0)
        assert r["gamma_lo"] <= r["gamma_up"]
    write_sweep_csv(rows, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("L,N,rate,gap")
    assert len(lines) == 5
    assert sweep(linear(), [8], [12], cap=100) == []
