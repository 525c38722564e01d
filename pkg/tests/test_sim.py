from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import alternating_host, brute_force_runs, fair_share_t_r
from stealtime.exceptions import SimConfigError, ValidationError
from stealtime.loadgen import LoadPattern
from stealtime.records import dumps_samples
from stealtime.sim import HOST, SimConfig, replay_estimator, simulate

T_M = 416_700
Q = 10_000


def constant(fraction, seconds=60):
    return LoadPattern.constant(fraction, seconds * 1_000_000)


def fig3(repeat=3):
    return LoadPattern.alternating(30_000_000, 30_000_000, repeat)


def test_isolated_runs_take_t_m():
    trace = simulate(SimConfig(constant(0), T_M, 60_000_000))
    assert all(r.t_r_us == T_M and r.true_steal_us == 0 and r.true_guest_us == 0 for r in trace.runs)
    assert len(trace.runs) == 60_000_000 // T_M


def test_busy_host_doubles_runtime():
    trace = simulate(SimConfig(constant(1), T_M, 60_000_000))
    for r in trace.runs:
        assert abs(r.t_r_us - 2 * T_M) <= Q
        assert abs(r.true_steal_us - T_M) <= Q


@pytest.mark.parametrize("g", [Fraction(1, 4), Fraction(1, 2), Fraction(1)])
def test_guest_load_closed_form(g):
    trace = simulate(SimConfig(constant(0), T_M, 60_000_000, g))
    expected = fair_share_t_r(T_M, g, host_busy=False)
    for r in trace.runs:
        assert abs(r.t_r_us - expected) <= Q


@pytest.mark.parametrize("g, pattern, host", [
    (0, LoadPattern.alternating(3_000_000, 3_000_000, 3), alternating_host(3000, 3000)),
    (Fraction(1, 4), constant(0, 18), lambda t: False),
    (Fraction(1, 2), LoadPattern.alternating(3_000_000, 3_000_000, 3), alternating_host(3000, 3000)),
    (Fraction(1), constant(1, 18), lambda t: True),
])
def test_matches_brute_force_at_one_ms_quantum(g, pattern, host):
    # at a 1 ms quantum the simulator and the tick-level oracle must agree exactly
    t_m_ms, horizon_ms = 417, 18_000
    trace = simulate(SimConfig(pattern, t_m_ms * 1000, horizon_ms * 1000, g, quantum_us=1000))
    expected = brute_force_runs(t_m_ms, g, host, horizon_ms)
    got = [{"start": r.start_us // 1000, "t_r": r.t_r_us // 1000,
            "steal": r.true_steal_us // 1000, "guest": r.true_guest_us // 1000} for r in trace.runs]
    assert got == expected


@pytest.mark.parametrize("g", [0, Fraction(1, 4), Fraction(1, 2), Fraction(1)])
def test_ten_ms_quantum_close_to_brute_force(g):
    trace = simulate(SimConfig(fig3(1), 417_000, 60_000_000, g))
    oracle = brute_force_runs(417, g, alternating_host(30_000, 30_000), 60_000)
    assert abs(np.mean([r.t_r_us for r in trace.runs]) / 1000 - np.mean([r["t_r"] for r in oracle])) <= Q / 1000
    assert abs(len(trace.runs) - len(oracle)) <= 2


@pytest.mark.parametrize("g", [0, Fraction(1, 4), Fraction(1, 2), Fraction(1)])
def test_conservation_and_ledger(g):
    trace = simulate(SimConfig(fig3(), T_M, 180_000_000, g))
    for r in trace.runs:
        assert r.t_r_us == T_M + r.true_guest_us + r.true_steal_us
    t = 0
    for start, end, _ in trace.ledger:
        assert start == t and end > start
        t = end
    assert t == 180_000_000


def test_runs_are_contiguous():
    trace = simulate(SimConfig(fig3(1), T_M, 60_000_000, Fraction(1, 2)))
    for a, b in zip(trace.runs, trace.runs[1:]):
        assert b.start_us == a.end_us


def test_fractional_host_segment_leading_window():
    trace = simulate(SimConfig(constant(Fraction(1, 2), 4), T_M, 4_000_000, quantum_us=Q))
    host_time = sum(e - s for s, e, who in trace.ledger if who == HOST)
    # host asks for 500 ms of every second and gets every other quantum of it
    assert host_time == 4 * 250_000
    for s, e, who in trace.ledger:
        if who == HOST:
            assert s % 1_000_000 < 500_000


def test_deterministic_bytes():
    cfg = SimConfig(fig3(), T_M, 180_000_000, Fraction(1, 4))
    a = dumps_samples(simulate(cfg).to_samples(), with_truth=True)
    b = dumps_samples(simulate(cfg).to_samples(), with_truth=True)
    assert a == b


def test_config_errors():
    with pytest.raises(SimConfigError):
        SimConfig(constant(0), T_M, T_M - 1)
    with pytest.raises(SimConfigError):
        # fits one run in isolation, not under full host contention
        simulate(SimConfig(constant(1, 1), T_M, T_M + 1000))
    with pytest.raises(ValidationError):
        SimConfig(constant(0), T_M, 10**7, quantum_us=0)
    with pytest.raises(ValidationError):
        SimConfig(constant(0), T_M, 10**7, guest_fraction=2)


@pytest.mark.parametrize("g", [0, Fraction(1, 2)])
def test_replay_error_within_quantum(g):
    trace = simulate(SimConfig(fig3(), T_M, 180_000_000, g))
    comparisons = replay_estimator(trace)
    assert max(c.abs_error_us for c in comparisons) <= Q


def test_replay_idle_is_exact():
    comparisons = replay_estimator(simulate(SimConfig(constant(0), T_M, 10_000_000)))
    assert all(c.estimated_steal_us == 0 == c.true_steal_us and c.abs_error_us == 0 for c in comparisons)


@settings(max_examples=25, deadline=None)
@given(
    host=st.fractions(min_value=Fraction(1, 20), max_value=1),
    g=st.sampled_from([0, Fraction(1, 4), Fraction(1, 2), Fraction(1)]),
    t_m=st.integers(50_000, 500_000),
)
def test_busy_spans_have_fewer_runs(host, g, t_m):
    span = 20_000_000
    pattern = LoadPattern(((0, span), (host, span)), 1)
    trace = simulate(SimConfig(pattern, t_m, 2 * span, g))
    idle = sum(1 for r in trace.runs if r.midpoint_us < span)
    busy = sum(1 for r in trace.runs if r.midpoint_us >= span)
    assert busy < idle
