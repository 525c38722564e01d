"""Guest-side steal-time estimation with a deterministic microbenchmark."""
from .estimator import (
    MeasurementSample,
    PeriodClassifier,
    PeriodSegment,
    SessionConfig,
    StealTimeEstimator,
    classify_periods,
    expected_time,
    run_cycle,
    run_session,
    steal_time,
)
from .exceptions import StealTimeError, ValidationError
from .harness import Scenario, run_scenario
from .loadgen import DutySpec, LoadPattern, duty_from_fraction, generate, run_pattern
from .loadsampler import FixedLoadSource, GuestLoad, ProcStatSource, load_multiplier, snapshot
from .microbench import CalibrationResult, MicrobenchSpec, calibrate, run_once, theoretical_time
from .sim import SimConfig, SimTrace, replay_estimator, simulate

__version__ = "0.1.0"
