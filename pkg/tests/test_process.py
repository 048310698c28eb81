from __future__ import annotations

import json
import math

import numpy as np
import pytest

from hnm.errors import DimensionError, DomainError, OrderingError, WindowError
from hnm.model import (
    GROUND,
    ModelParams,
    comb,
    one_point,
    outcome_catalogue,
    projector,
    two_point,
)
from hnm.process import (
    ORDERING,
    ProcessChoi,
    build_choi_analytic,
    build_choi_simulated,
    choi_apply,
    markov_factorization_distance,
    multitime_probability,
    reduced_channel,
    sequence_probabilities,
    simulate_intervention_sequence,
    step_marginal,
    superoperator,
)
from hnm.reference import amplitude_damping_channel, markovian_choi_1step, markovian_choi_2step

FIG = ModelParams(gamma=2.0, omega0=2.0, T=1.0)
CAT = outcome_catalogue()
RNG = np.random.default_rng(11)


def test_choi_validation_and_json_round_trip():
    ch = build_choi_analytic(FIG, one_point(), 0.2, 0.5)
    assert ch.k == 2 and ch.ordering == ORDERING and ch.is_valid()
    again = ProcessChoi.from_dict(json.loads(ch.to_json()))
    assert np.array_equal(again.matrix, ch.matrix) and again.times == ch.times
    bad = ProcessChoi(np.diag([1.0, -0.5, 0.0, 1.5]), (0.1,))
    assert "not positive semidefinite" in bad.problems()
    with pytest.raises(DimensionError):
        ProcessChoi(np.eye(4), (0.1, 0.2))


def test_ordering_tag_checked():
    d = build_choi_analytic(FIG, one_point(), 0.3).to_dict()
    d["ordering"] = "earliest-outer"
    with pytest.raises(OrderingError):
        ProcessChoi.from_dict(d)


@pytest.mark.parametrize("t0, t1", RNG.uniform(0.0, 1.0, size=(10, 2)).tolist())
def test_analytic_one_point_matches_golden(t0, t1):
    a = build_choi_analytic(FIG, one_point(), t0, t1).matrix
    assert np.max(np.abs(a - markovian_choi_2step(FIG.gamma, t0, t1).matrix)) < 1e-10


def test_one_step_analytic_matches_derived_variant():
    a = build_choi_analytic(FIG, one_point(), 0.4).matrix
    assert np.allclose(a, markovian_choi_1step(2.0, 0.4).matrix, atol=1e-12)
    assert not np.allclose(a, markovian_choi_1step(2.0, 0.4, "printed").matrix, atol=1e-3)


def test_hidden_window_universality():
    for _ in range(10):
        t0, t1 = RNG.uniform(0, 0.5, size=2)
        one = build_choi_analytic(FIG, one_point(), t0, t1).matrix
        two = build_choi_analytic(FIG, two_point(1.0), t0, t1).matrix
        assert np.max(np.abs(one - two)) < 1e-10


def test_window_error():
    with pytest.raises(WindowError):
        build_choi_analytic(FIG, two_point(1.0), 0.4, 0.7)
    with pytest.raises(DomainError):
        build_choi_analytic(FIG, two_point(1.0), -0.1, 0.2)


def test_zero_duration_step():
    ch = build_choi_analytic(FIG, one_point(), 0.0, 0.6).matrix
    expected = np.kron(markovian_choi_1step(2.0, 0.6).matrix, markovian_choi_1step(2.0, 0.0).matrix)
    assert np.allclose(ch, expected, atol=1e-14)


def test_block_entry_example():
    g, t0, t1 = FIG.gamma, 0.3, 0.45
    m = build_choi_analytic(FIG, two_point(1.0), t0, t1).matrix
    assert m[4, 4] == pytest.approx(math.exp(-g * t0) * (1 - math.exp(-g * t1)), abs=1e-14)


def test_three_step_analytic_is_markov():
    ch = build_choi_analytic(FIG, comb([0, 1, 2.5]), 0.2, 0.3, 0.4)
    assert ch.k == 3 and ch.is_valid()
    assert markov_factorization_distance(ch) < 1e-10


def test_marginal_consistency():
    ch = build_choi_analytic(FIG, two_point(1.0), 0.35, 0.5)
    assert np.allclose(step_marginal(ch, 0), build_choi_analytic(FIG, one_point(), 0.35).matrix, atol=1e-9)
    sim = build_choi_simulated(FIG, two_point(1.0), (0.6, 0.8), 0.02, 2)
    first = build_choi_simulated(FIG, two_point(1.0), (0.6,), 0.02, 1)
    assert np.allclose(step_marginal(sim, 0), first.matrix, atol=1e-12)


def test_simulated_one_point_matches_golden():
    g = FIG.gamma
    t0, t1 = 0.6 / g, 0.8 / g
    errs = []
    for dt in (0.02, 0.01):
        sim = build_choi_simulated(FIG, one_point(), (t0, t1), dt, 2)
        assert sim.is_valid()
        errs.append(np.max(np.abs(sim.matrix - markovian_choi_2step(g, t0, t1).matrix)))
    assert errs[1] < 2 * 0.01
    assert errs[1] < 0.6 * errs[0]  # shrinks with dt


def test_simulated_two_point_inside_window():
    dt = 0.01
    sim = build_choi_simulated(FIG, two_point(1.0), (0.3, 0.5), dt, 2)
    ana = build_choi_analytic(FIG, two_point(1.0), 0.3, 0.5)
    assert np.max(np.abs(sim.matrix - ana.matrix)) < 2 * dt
    assert markov_factorization_distance(sim) < 1e-10


def test_lab_frame_consistency():
    sim = build_choi_simulated(FIG, one_point(), (0.3, 0.2), 0.01, 2, ground_phase=False)
    ana = build_choi_analytic(FIG, one_point(), 0.3, 0.2, ground_phase=False)
    assert np.max(np.abs(sim.matrix - ana.matrix)) < 0.02


def test_outside_window_is_not_markov():
    sim = build_choi_simulated(FIG, two_point(1.0), (0.6, 0.8), 0.02, 2)
    assert sim.is_valid()
    assert markov_factorization_distance(sim) > 0.1


def test_multitime_probability_examples():
    ch = build_choi_analytic(FIG, one_point(), 0.3, 0.4)
    ident = CAT["identity"]
    assert multitime_probability(ch, [ident, ident]) == pytest.approx(1.0, abs=1e-12)
    one = build_choi_analytic(FIG, one_point(), 0.7)
    assert multitime_probability(one, [CAT["measure_z:excited"]]) == pytest.approx(math.exp(-1.4), abs=1e-12)
    with pytest.raises(OrderingError):
        multitime_probability(ch, [ident])
    with pytest.raises(DimensionError):
        multitime_probability(ch, [ident, ident], rho0=np.eye(3))


def test_multitime_probability_clamps():
    ch = ProcessChoi(markovian_choi_1step(1.0, 0.0).matrix * 1.01, (0.0,))
    p, raw = multitime_probability(ch, [CAT["identity"]], return_raw=True)
    assert p == 1.0 and raw > 1.0


def test_analytic_probability_matches_markov_composition():
    g, t0, t1 = FIG.gamma, 0.25, 0.5
    ch = build_choi_analytic(FIG, two_point(1.0), t0, t1)
    ad0, ad1 = amplitude_damping_channel(g, t0), amplitude_damping_channel(g, t1)
    rho = projector(0)
    for a in ("x", "y", "measure_z:ground", "prepare_excited"):
        for b in ("measure_z:excited", "measure_z:ground"):
            direct = np.trace(CAT[b].effect() @ ad1.apply(CAT[a].apply(ad0.apply(rho)))).real
            assert multitime_probability(ch, [CAT[a], CAT[b]]) == pytest.approx(direct, abs=1e-12)


@pytest.mark.parametrize("ff", [one_point(), two_point(1.0)], ids=["one", "two"])
def test_probability_rule_equals_direct_simulation(ff):
    dt = 0.02
    times = (0.6, 0.8)
    ch = build_choi_simulated(FIG, ff, times, dt, 2)
    table = sequence_probabilities(FIG, ff, [0.6, 1.4], [CAT, CAT], dt)
    for (a, b), p in table.items():
        assert multitime_probability(ch, [CAT[a], CAT[b]]) == pytest.approx(p, abs=1e-10)
    one = build_choi_simulated(FIG, ff, (0.6,), dt, 1)
    for name, ks in CAT.items():
        assert multitime_probability(one, [ks]) == pytest.approx(
            simulate_intervention_sequence(FIG, ff, [(0.6, ks)], dt), abs=1e-10)


def test_sequence_examples():
    assert simulate_intervention_sequence(FIG, one_point(), [], 0.01) == 1.0
    dt = 0.005
    p = simulate_intervention_sequence(FIG, one_point(), [(0.5, CAT["measure_z:excited"])], dt)
    assert p == pytest.approx(math.exp(-1.0), abs=2 * dt)
    sched = [(0.3, CAT["x"]), (0.8, CAT["measure_z:excited"])]
    one = simulate_intervention_sequence(FIG, one_point(), sched, 0.01)
    two = simulate_intervention_sequence(FIG, two_point(1.0), sched, 0.01)
    assert one == pytest.approx(two, abs=0.02)
    with pytest.raises(DomainError):
        simulate_intervention_sequence(FIG, one_point(), [(0.5, CAT["x"]), (0.2, CAT["x"])], 0.01)


def test_initial_state_option():
    dt = 0.01
    p = simulate_intervention_sequence(
        FIG, two_point(1.0), [(0.5, CAT["measure_z:ground"])], dt, initial=GROUND)
    assert p == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("s, t", RNG.uniform(0, 2, size=(5, 2)).tolist())
def test_reduced_channel_semigroup(s, t):
    lam = lambda u: superoperator(reduced_channel(FIG, one_point(), u))  # noqa: E731
    assert np.max(np.abs(lam(t) @ lam(s) - lam(s + t))) < 1e-12


def test_reduced_channel_matches_reference():
    ch = reduced_channel(FIG, one_point(), 0.9)
    ref = amplitude_damping_channel(FIG.gamma, 0.9, FIG.epsilon0)
    assert np.allclose(superoperator(ch), superoperator(ref), atol=1e-14)


def test_choi_apply_recovers_channel():
    rho = np.array([[0.6, 0.3 - 0.1j], [0.3 + 0.1j, 0.4]])
    ch = build_choi_analytic(FIG, one_point(), 0.4, ground_phase=False)
    ref = amplitude_damping_channel(FIG.gamma, 0.4, FIG.epsilon0).apply(rho)
    assert np.allclose(choi_apply(ch, rho), ref, atol=1e-14)
