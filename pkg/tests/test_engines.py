import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import oracles
from ssot.engines import (
    CycleReport,
    carnot_efficiency,
    equilibrium_cycle,
    nonequilibrium_cycle,
    nonequilibrium_refrigerator,
    qubit_engine,
    qubit_refrigerator,
    refrigerator_cycle,
)
from ssot.errors import DegenerateCycleError, DomainError, ShapeError
from ssot.thermo import HamiltonianSpectrum, extend_with_clock

gaps = st.floats(0.01, 50)
temps = st.tuples(st.floats(0.2, 10), st.floats(0.05, 0.95)).map(lambda t: (t[0], t[0] * t[1]))


def restricted_oracle(E, mask, T):
    """(E, F) of the Gibbs weights restricted to ``mask``, by direct sums."""
    w = [math.exp(-e / T) for e, m in zip(E, mask) if m]
    Z = sum(w)
    energy = sum(e * math.exp(-e / T) for e, m in zip(E, mask) if m) / Z
    return energy, -T * math.log(Z)


def relative_entropy(p, q):
    p, q = np.asarray(p), np.asarray(q)
    nz = p > 0
    return float((p[nz] * np.log(p[nz] / q[nz])).sum())


def gibbs(E, T):
    w = np.exp(-(np.asarray(E) - min(E)) / T)
    return w / w.sum()


# ---------------------------------------------------------------- qubit engine

@pytest.mark.parametrize("w1,w2,th,tc", [(5, 1, 2, 1), (50, 0.01, 2, 1), (2, 1, 3, 0.5), (10, 3, 1.5, 1)])
def test_qubit_engine_matches_closed_form(w1, w2, th, tc):
    r = qubit_engine(w1, w2, th, tc)
    ref = oracles.qubit_engine_oracle(w1, w2, th, tc)
    for key, value in ref.items():
        assert getattr(r, key) == pytest.approx(value, abs=1e-12), key
    r.check_invariants()


def test_reference_qubit_engine_values():
    r = qubit_engine(5, 1, 2, 1)
    assert r.w_cycle == pytest.approx(0.4838281607, abs=1e-9)
    assert r.eta == pytest.approx(0.4264866419, abs=1e-9)
    assert r.eta_carnot == 0.5
    assert r.q_irr_bc == pytest.approx(0.1085992, abs=1e-6)
    assert r.q_irr_da == pytest.approx(0.3458266, abs=1e-6)


def test_carnot_limit_of_qubit_engine():
    r = qubit_engine(50, 0.01, 2, 1)
    assert r.eta >= 0.495
    assert r.q_irr_bc < 5e-3 and r.q_irr_da < 5e-3


@settings(max_examples=300, deadline=None)
@given(gaps, gaps, temps)
def test_qubit_engine_is_never_better_than_carnot(w1, w2, t):
    th, tc = t
    r = qubit_engine(w1, w2, th, tc)
    r.check_invariants()
    assert abs(r.w_cycle - r.q_hot + r.q_cold) < 1e-10
    assert 0 <= r.eta <= r.eta_carnot
    if r.w_cycle > 1e-12:
        assert r.q_hot > 0
        # work flows out only when the first gap is the larger one
        assert w1 > w2
    elif r.w_cycle < -1e-12:
        assert r.eta == 0.0 and w1 < w2


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10 ** 6), temps)
def test_entropy_production_sets_the_efficiency_gap(d, seed, t):
    th, tc = t
    rng = np.random.default_rng(seed)
    E1, E2 = oracles.random_spectrum(rng, d), oracles.random_spectrum(rng, d)
    r = equilibrium_cycle(HamiltonianSpectrum.from_levels(E1), HamiltonianSpectrum.from_levels(E2), th, tc)
    r.check_invariants()
    assume(r.w_cycle > 1e-9)
    sigma = relative_entropy(gibbs(E2, th), gibbs(E2, tc)) + relative_entropy(gibbs(E1, tc), gibbs(E1, th))
    assert r.eta_carnot - r.eta == pytest.approx(tc * sigma / r.q_hot, rel=1e-6, abs=1e-12)


def test_efficiency_trend_against_first_gap():
    w1s = np.linspace(0.1, 50, 100)
    etas = np.array([qubit_engine(w, 5, 2, 1).eta for w in w1s])
    works = np.array([qubit_engine(w, 5, 2, 1).w_cycle for w in w1s])
    assert np.all(np.diff(etas) >= 0)
    engine = works > 0
    assert np.all(np.diff(etas[engine]) > 0)
    assert np.all(etas[~engine] == 0)


def test_engine_errors():
    with pytest.raises(DomainError):
        qubit_engine(5, 1, 1, 2)
    with pytest.raises(DomainError):
        qubit_engine(5, 1, 1, 1)
    with pytest.raises(DomainError):
        qubit_engine(-1, 1, 2, 1)
    with pytest.raises(ShapeError):
        equilibrium_cycle(HamiltonianSpectrum.qubit(1), HamiltonianSpectrum.from_levels([0, 1, 2]), 2, 1)
    with pytest.raises(DomainError):
        carnot_efficiency(1, 2)


def test_report_round_trip():
    r = qubit_engine(5, 1, 2, 1)
    again = CycleReport.from_dict(r.to_dict())
    assert again == r
    again.check_invariants()
    broken = r.to_dict()
    broken["w_cycle"] += 1e-3
    with pytest.raises(AssertionError):
        CycleReport.from_dict(broken).check_invariants()


# ---------------------------------------------------------------- nonequilibrium cycles

@pytest.mark.parametrize("seed", range(20))
def test_nonequilibrium_cycle_matches_direct_sums(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 7))
    E = oracles.random_spectrum(rng, d)
    H = HamiltonianSpectrum.from_levels(E)
    U = rng.random(d) < 0.5
    V = rng.random(d) < 0.5
    U[0] = V[-1] = True
    th, tc = 2.0, 1.0
    if np.array_equal(U, V) and U.sum() == 1:
        return
    r = nonequilibrium_cycle(H, U, V, th, tc)
    EA, FA = restricted_oracle(E, U, th)
    EB, FB = restricted_oracle(E, V, th)
    EC, FC = restricted_oracle(E, V, tc)
    ED, FD = restricted_oracle(E, U, tc)
    assert r.w_cycle == pytest.approx(FA - FB - FD + FC, abs=1e-12)
    assert r.q_irr_bc == pytest.approx(EB - EC, abs=1e-12)
    assert r.q_irr_da == pytest.approx(EA - ED, abs=1e-12)
    r.check_invariants()


def test_nonequilibrium_example_with_degenerate_shell():
    H = HamiltonianSpectrum.from_levels([0, 1, 2], [1, 2, 1])
    r = nonequilibrium_cycle(H, {0, 1}, {0, 1, 2}, 2, 1)
    expected = (-2 * math.log(1 + 2 * math.exp(-0.5)) + 2 * math.log((1 + math.exp(-0.5)) ** 2)
                + math.log(1 + 2 * math.exp(-1)) - math.log((1 + math.exp(-1)) ** 2))
    assert r.w_cycle == pytest.approx(expected, abs=1e-12)
    assert r.w_cycle == pytest.approx(0.2324757, abs=1e-7)


def test_clocked_cycle_reproduces_equilibrium_cycle():
    rng = np.random.default_rng(7)
    for _ in range(20):
        d = int(rng.integers(2, 6))
        H1 = HamiltonianSpectrum.from_levels(oracles.random_spectrum(rng, d))
        H2 = HamiltonianSpectrum.from_levels(oracles.random_spectrum(rng, d))
        th = rng.uniform(1, 4)
        tc = th * rng.uniform(0.1, 0.9)
        C = extend_with_clock(H1, H2)
        a = nonequilibrium_cycle(C.spectrum, C.clock_mask(0), C.clock_mask(1), th, tc)
        b = equilibrium_cycle(H1, H2, th, tc)
        for key in ("w_cycle", "q_hot", "q_cold", "eta", "q_irr_bc", "q_irr_da"):
            assert getattr(a, key) == pytest.approx(getattr(b, key), abs=1e-9)


def test_trivial_cycle_is_rejected():
    H = HamiltonianSpectrum.from_levels([0, 1, 2], [1, 2, 1])
    with pytest.raises(DegenerateCycleError):
        nonequilibrium_cycle(H, {1}, {1}, 2, 1)
    r = nonequilibrium_cycle(H, {0, 1}, {0, 1}, 2, 1)
    assert r.w_cycle == pytest.approx(0, abs=1e-12) and r.eta == 0.0
    with pytest.raises(ShapeError):
        nonequilibrium_cycle(H, np.array([True, False]), {0}, 2, 1)


# ---------------------------------------------------------------- refrigerators

def test_reference_refrigerator():
    r = qubit_refrigerator(5, 1, 2, 1)
    ref = oracles.qubit_refrigerator_oracle(5, 1, 2, 1)
    assert r.cop == pytest.approx(0.4055094, abs=1e-6)
    assert r.cop == pytest.approx(ref["cop"], abs=1e-12)
    assert r.q_cold_extracted == pytest.approx(ref["q_cold_extracted"], abs=1e-12)
    assert r.w_input == pytest.approx(qubit_engine(5, 1, 2, 1).w_cycle, abs=1e-12)
    assert r.cop_carnot == 1.0
    assert r.q_hot_dumped == pytest.approx(r.q_cold_extracted + r.w_input, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(gaps, gaps, temps)
def test_refrigerator_below_carnot(w1, w2, t):
    th, tc = t
    assume(qubit_engine(w1, w2, th, tc).w_cycle > 1e-9)
    r = qubit_refrigerator(w1, w2, th, tc)
    assert r.w_input > 0
    ref = oracles.qubit_refrigerator_oracle(w1, w2, th, tc)
    assert r.w_input == pytest.approx(ref["w_input"], abs=1e-13)
    assert r.q_cold_extracted == pytest.approx(ref["q_cold_extracted"], abs=1e-13)
    # the absolute q_cold tolerance carried through the division by w_input
    assert r.cop == pytest.approx(ref["cop"], rel=1e-7, abs=1e-13 / r.w_input)
    assert r.cop < r.cop_carnot


def test_refrigerator_needs_work_input():
    with pytest.raises(DegenerateCycleError):
        qubit_refrigerator(1, 5, 2, 1)
    H = HamiltonianSpectrum.from_levels([0, 1, 2])
    r = nonequilibrium_refrigerator(H, {0}, {0, 1}, 2, 1)
    assert r.w_input > 0 and r.cop < r.cop_carnot
    with pytest.raises(ShapeError):
        refrigerator_cycle(HamiltonianSpectrum.qubit(1), HamiltonianSpectrum.from_levels([0, 1, 2]), 2, 1)
