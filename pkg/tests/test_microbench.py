from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from stealtime import _kernel
from stealtime.exceptions import ValidationError
from stealtime.microbench import (
    CalibrationResult,
    MicrobenchSpec,
    calibrate,
    run_once,
    theoretical_time,
    theoretical_time_us,
)

DEFAULT_SPEC = MicrobenchSpec(50, 10_000_000, 1, 1_200_000_000)
# no real core retires a dependent add chain faster than this clock
CEILING_HZ = 6_000_000_000


def test_default_theoretical_time_is_five_twelfths_of_a_second():
    assert theoretical_time(DEFAULT_SPEC) == Fraction(5, 12)
    assert round(float(theoretical_time(DEFAULT_SPEC)) * 1000, 3) == 416.667
    assert theoretical_time_us(DEFAULT_SPEC) == 416_667


def test_unit_case():
    assert theoretical_time(MicrobenchSpec(1, 1, 1, 1)) == 1


def test_doubling_iterations_doubles_time():
    spec = MicrobenchSpec(50, 20_000_000, 1, 1_200_000_000)
    assert theoretical_time(spec) == 2 * theoretical_time(DEFAULT_SPEC)
    assert round(float(theoretical_time(spec)) * 1000, 3) == 833.333


def test_float_frequency_is_read_exactly():
    assert MicrobenchSpec(frequency_hz=1.2e9).frequency_hz == 1_200_000_000
    assert MicrobenchSpec(cpi=1.1).cpi == Fraction(11, 10)


@pytest.mark.parametrize("kwargs", [
    {"inner_adds": 0},
    {"iterations": 0},
    {"iterations": -5},
    {"cpi": 0},
    {"frequency_hz": -1},
    {"iterations": 2.5},
])
def test_invalid_spec_rejected(kwargs):
    with pytest.raises(ValidationError):
        MicrobenchSpec(**kwargs)


@given(
    adds=st.integers(1, 200),
    iters=st.integers(1, 10**9),
    k=st.integers(1, 50),
    cpi=st.fractions(min_value=Fraction(1, 10), max_value=10),
    freq=st.integers(1, 10**10),
)
def test_linearity(adds, iters, k, cpi, freq):
    base = theoretical_time(MicrobenchSpec(adds, iters, cpi, freq))
    assert theoretical_time(MicrobenchSpec(adds, iters * k, cpi, freq)) == k * base
    assert theoretical_time(MicrobenchSpec(adds * k, iters, cpi, freq)) == k * base
    assert theoretical_time(MicrobenchSpec(adds, iters, cpi, freq * k)) == base / k


def test_calibration_from_trials_uses_minimum():
    result = CalibrationResult.from_trials(DEFAULT_SPEC, [430_000, 425_000, 460_000])
    assert result.t_m_empirical_us == 425_000
    assert result.dispersion_us == 35_000
    assert result.t_m_theoretical_us == 416_667


def test_calibrate_rejects_two_trials():
    with pytest.raises(ValidationError):
        calibrate(DEFAULT_SPEC, trials=2, runner=lambda spec: 1)


@given(st.lists(st.integers(1, 10**7), min_size=3, max_size=30))
def test_calibrate_takes_min_of_its_trials(trials):
    feed = iter(trials)
    result = calibrate(MicrobenchSpec(1, 1, 1, 10**6), trials=len(trials), runner=lambda spec: next(feed))
    assert result.t_m_empirical_us == min(result.trials_us) == min(trials)
    assert list(result.trials_us) == trials


def test_implausibly_fast_calibration_warns():
    with pytest.warns(RuntimeWarning):
        result = CalibrationResult.from_trials(DEFAULT_SPEC, [100_000, 110_000, 120_000])
    assert not result.plausible


def test_python_kernel_runs_exact_number_of_adds():
    k = _kernel.get_kernel(7, native=False)
    k.run(13)
    assert k.last_accumulator == 7 * 13


@pytest.mark.live
def test_native_kernel_runs_exact_number_of_adds():
    k = _kernel.get_kernel(50)
    k.run(1000)
    assert k.last_accumulator == 50 * 1000


@pytest.mark.live
def test_run_once_is_not_optimized_away():
    spec = MicrobenchSpec(50, 2_000_000, 1, CEILING_HZ)
    t = min(run_once(spec) for _ in range(3))
    assert t >= 0.5 * theoretical_time_us(spec)


@pytest.mark.live
def test_run_once_scales_with_iterations():
    short = MicrobenchSpec(50, 1_000_000)
    long = MicrobenchSpec(50, 4_000_000)
    t_short = min(run_once(short) for _ in range(3))
    t_long = min(run_once(long) for _ in range(3))
    assert 3.0 < t_long / t_short < 5.0


@pytest.mark.live
def test_consecutive_runs_are_close():
    # bound measured on the build machine: worst consecutive gap 7% of theory
    spec = MicrobenchSpec(50, 2_000_000, 1, 2_100_000_000)
    theory = theoretical_time_us(spec)
    runs = [run_once(spec) for _ in range(10)]
    worst = max(abs(a - b) for a, b in zip(runs, runs[1:]))
    assert worst < 0.15 * theory
