"""Steal-time estimation from measured and expected microbenchmark times.

The expected time is the reference T_m stretched by the guest load
multiplier; whatever the measured time exceeds that by is time the virtual
CPU was not running at all.
"""
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import SessionAborted, ValidationError
from .loadsampler import load_multiplier
from .microbench import (
    MIN_CALIBRATION_TRIALS,
    CalibrationResult,
    MicrobenchSpec,
    run_once_ns,
    theoretical_time_us,
)
from .units import exact, ns_to_us, round_div

IDLE = "idle"
BUSY = "busy"

MULTIPLIER_DIGITS = 4


@dataclass(frozen=True)
class MeasurementSample:
    """One estimator cycle. All durations are integer microseconds.

    The ``true_*`` fields are only populated by the simulator, which knows
    the ground truth.
    """

    t_start_us: int
    t_r_us: int
    multiplier: float
    t_mg_us: int
    steal_raw_us: int
    steal_us: int
    true_steal_us: Optional[int] = None
    true_guest_us: Optional[int] = None


@dataclass(frozen=True)
class PeriodSegment:
    kind: str
    first_sample_index: int
    last_sample_index: int
    mean_steal_us: float

    @property
    def count(self):
        return self.last_sample_index - self.first_sample_index + 1


def expected_time(t_m_us, multiplier):
    """Microbenchmark time expected under guest contention alone, in µs."""
    if t_m_us <= 0:
        raise ValidationError(f"t_m must be > 0, got {t_m_us}")
    m = exact(multiplier)
    if m < 1:
        raise ValidationError(f"multiplier must be >= 1, got {multiplier}")
    product = m * int(t_m_us)
    return round_div(product.numerator, product.denominator)


def steal_time(t_r_us, t_mg_us):
    """Return ``(steal_raw, steal)``; the raw value keeps its sign."""
    if t_r_us <= 0 or t_mg_us <= 0:
        raise ValidationError(f"durations must be > 0, got t_r={t_r_us}, t_mg={t_mg_us}")
    raw = t_r_us - t_mg_us
    return raw, max(raw, 0)


def make_sample(t_start_us, t_r_us, t_m_reference_us, multiplier, **truth):
    multiplier = round(float(multiplier), MULTIPLIER_DIGITS)
    t_mg = expected_time(t_m_reference_us, multiplier)
    raw, clamped = steal_time(t_r_us, t_mg)
    return MeasurementSample(t_start_us, t_r_us, multiplier, t_mg, raw, clamped, **truth)


@dataclass(frozen=True)
class SessionConfig:
    spec: MicrobenchSpec
    t_m_reference_us: int
    period_us: int = 0
    max_samples: Optional[int] = None
    max_duration_us: Optional[int] = None
    t_m_source: str = "theoretical"

    def __post_init__(self):
        if (self.max_samples is None) == (self.max_duration_us is None):
            raise ValidationError("set exactly one of max_samples and max_duration_us")
        if self.max_samples is not None and self.max_samples < 1:
            raise ValidationError(f"max_samples must be >= 1, got {self.max_samples}")
        if self.max_duration_us is not None and self.max_duration_us <= 0:
            raise ValidationError(f"max_duration must be > 0, got {self.max_duration_us}")
        if self.t_m_reference_us <= 0:
            raise ValidationError(f"t_m_reference must be > 0, got {self.t_m_reference_us}")
        if self.period_us < 0:
            raise ValidationError(f"period must be >= 0, got {self.period_us}")

    @classmethod
    def create(cls, spec, calibration=None, **kwargs):
        """Pick the reference T_m: calibrated if available, theoretical otherwise."""
        if calibration is not None:
            return cls(spec, calibration.t_m_empirical_us, t_m_source="calibrated", **kwargs)
        return cls(spec, theoretical_time_us(spec), t_m_source="theoretical", **kwargs)


class MicrobenchRunner:
    """Default cycle runner: the native microbenchmark on the monotonic clock."""

    def __init__(self, kernel=None):
        self.kernel = kernel

    def __call__(self, spec):
        t_start = time.monotonic_ns()
        elapsed = run_once_ns(spec, self.kernel)
        return ns_to_us(t_start), ns_to_us(elapsed)


def run_cycle(cfg, source, runner=None):
    """Bracket one microbenchmark run with a load window and build the sample.

    ``runner(spec)`` returns ``(t_start_us, t_r_us)``. Errors from the runner
    or the source propagate; nothing is returned for a partial cycle.
    """
    runner = runner or MicrobenchRunner()
    token = source.open_window()
    t_start, t_r = runner(cfg.spec)
    gl = source.close_window(token)
    return make_sample(t_start, t_r, cfg.t_m_reference_us, load_multiplier(gl))


@dataclass
class SessionSummary:
    count: int
    elapsed_us: int
    mean_steal_us: dict = field(default_factory=dict)
    mean_steal_raw_us: dict = field(default_factory=dict)
    segments: list = field(default_factory=list)


def _monotonic_us():
    return ns_to_us(time.monotonic_ns())


def run_session(cfg, source, sink, runner=None, clock_us=_monotonic_us, sleep=time.sleep):
    """Run cycles until the stopping condition, handing each sample to ``sink``.

    The stop condition is checked before each cycle, so a duration-bounded
    session overruns its budget by at most one cycle. With ``period_us > 0``
    the loop sleeps whatever is left of the period after each cycle; overruns
    are not caught up.
    """
    runner = runner or MicrobenchRunner()
    samples = []
    session_start = clock_us()
    while True:
        if cfg.max_samples is not None and len(samples) >= cfg.max_samples:
            break
        if cfg.max_duration_us is not None and clock_us() - session_start >= cfg.max_duration_us:
            break
        cycle_start = clock_us()
        sample = run_cycle(cfg, source, runner)
        try:
            sink(sample)
        except Exception as exc:
            raise SessionAborted(f"sink failed: {exc}", len(samples)) from exc
        samples.append(sample)
        if cfg.period_us > 0:
            remaining = cfg.period_us - (clock_us() - cycle_start)
            if remaining > 0:
                sleep(remaining / 1e6)
    return summarize(samples, cfg.t_m_reference_us, clock_us() - session_start)


def summarize(samples, t_m_reference_us, elapsed_us=0, threshold_us=None, hysteresis_us=None):
    default_threshold, default_hysteresis = default_thresholds(t_m_reference_us)
    segments = classify_periods(
        samples,
        default_threshold if threshold_us is None else threshold_us,
        default_hysteresis if hysteresis_us is None else hysteresis_us,
    )
    by_kind = {IDLE: [], BUSY: []}
    for seg in segments:
        by_kind[seg.kind].extend(samples[seg.first_sample_index:seg.last_sample_index + 1])
    return SessionSummary(
        count=len(samples),
        elapsed_us=elapsed_us,
        mean_steal_us={k: float(np.mean([s.steal_us for s in v])) for k, v in by_kind.items() if v},
        mean_steal_raw_us={k: float(np.mean([s.steal_raw_us for s in v])) for k, v in by_kind.items() if v},
        segments=segments,
    )


def default_thresholds(t_m_reference_us):
    """Busy threshold at half of T_m, hysteresis at a tenth."""
    return t_m_reference_us / 2, t_m_reference_us / 10


def classify_periods(samples, threshold_us, hysteresis_us):
    """Split a steal series into alternating idle/busy segments.

    ``samples`` may hold :class:`MeasurementSample` records or plain steal
    values. A sample switches the state to busy above ``threshold +
    hysteresis`` and back to idle below ``threshold - hysteresis``.
    """
    if not threshold_us > hysteresis_us >= 0:
        raise ValidationError(
            f"need threshold > hysteresis >= 0, got {threshold_us} and {hysteresis_us}"
        )
    steals = [s.steal_us if isinstance(s, MeasurementSample) else s for s in samples]
    if not steals:
        return []
    upper = threshold_us + hysteresis_us
    lower = threshold_us - hysteresis_us

    kinds = []
    state = IDLE
    for value in steals:
        if state == IDLE and value > upper:
            state = BUSY
        elif state == BUSY and value < lower:
            state = IDLE
        kinds.append(state)

    segments = []
    first = 0
    for i in range(1, len(kinds) + 1):
        if i == len(kinds) or kinds[i] != kinds[first]:
            segments.append(
                PeriodSegment(kinds[first], first, i - 1, float(np.mean(steals[first:i])))
            )
            first = i
    return segments


class StealTimeEstimator(TransformerMixin, BaseEstimator):
    """Estimator-style wrapper around the steal-time arithmetic.

    ``fit`` settles the reference T_m: an explicit ``t_m_reference_us`` wins,
    then the minimum of calibration trials passed as ``X``, then the
    theoretical time of ``spec``. ``transform`` maps rows of
    ``(t_r_us, multiplier)`` to ``(t_mg_us, steal_raw_us, steal_us)``;
    ``predict`` returns the clamped steal only.
    """

    def __init__(self, spec=None, t_m_reference_us=None):
        self.spec = spec
        self.t_m_reference_us = t_m_reference_us

    def fit(self, X=None, y=None):
        spec = self.spec if self.spec is not None else MicrobenchSpec()
        self.t_m_theoretical_us_ = theoretical_time_us(spec)
        self.calibration_ = None
        if self.t_m_reference_us is not None:
            if self.t_m_reference_us <= 0:
                raise ValidationError(f"t_m_reference_us must be > 0, got {self.t_m_reference_us}")
            self.t_m_reference_ = int(self.t_m_reference_us)
            self.t_m_source_ = "explicit"
        elif X is not None:
            trials = check_array(X, ensure_2d=False, dtype=np.int64).ravel()
            if trials.size < MIN_CALIBRATION_TRIALS:
                raise ValidationError(
                    f"calibration needs at least {MIN_CALIBRATION_TRIALS} trials, got {trials.size}"
                )
            self.calibration_ = CalibrationResult.from_trials(spec, trials.tolist())
            self.t_m_reference_ = self.calibration_.t_m_empirical_us
            self.t_m_source_ = "calibrated"
        else:
            self.t_m_reference_ = self.t_m_theoretical_us_
            self.t_m_source_ = "theoretical"
        return self

    def _rows(self, X):
        check_is_fitted(self, "t_m_reference_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 2:
            raise ValidationError(f"expected columns (t_r_us, multiplier), got {X.shape[1]} columns")
        return X

    def transform(self, X):
        X = self._rows(X)
        out = np.empty((X.shape[0], 3), dtype=np.int64)
        for i, (t_r, m) in enumerate(X):
            s = make_sample(0, int(t_r), self.t_m_reference_, m)
            out[i] = (s.t_mg_us, s.steal_raw_us, s.steal_us)
        return out

    def predict(self, X):
        return self.transform(X)[:, 2]

    def samples(self, t_start_us, t_r_us, multipliers):
        """Build :class:`MeasurementSample` records from parallel sequences."""
        check_is_fitted(self, "t_m_reference_")
        return [
            make_sample(int(t0), int(tr), self.t_m_reference_, m)
            for t0, tr, m in zip(t_start_us, t_r_us, multipliers)
        ]


class PeriodClassifier(BaseEstimator):
    """Idle/busy labelling of a steal series with hysteresis.

    Thresholds left as ``None`` default to fractions of ``t_m_reference_us``.
    ``predict`` returns 1 for busy samples and 0 for idle ones.
    """

    def __init__(self, threshold_us=None, hysteresis_us=None, t_m_reference_us=None):
        self.threshold_us = threshold_us
        self.hysteresis_us = hysteresis_us
        self.t_m_reference_us = t_m_reference_us

    def fit(self, X=None, y=None):
        if self.threshold_us is None or self.hysteresis_us is None:
            if self.t_m_reference_us is None:
                raise ValidationError("need explicit thresholds or t_m_reference_us")
            threshold, hysteresis = default_thresholds(self.t_m_reference_us)
        if self.threshold_us is not None:
            threshold = self.threshold_us
        if self.hysteresis_us is not None:
            hysteresis = self.hysteresis_us
        if not threshold > hysteresis >= 0:
            raise ValidationError(f"need threshold > hysteresis >= 0, got {threshold} and {hysteresis}")
        self.threshold_ = threshold
        self.hysteresis_ = hysteresis
        return self

    def segments(self, X):
        check_is_fitted(self, "threshold_")
        return classify_periods(_steal_series(X), self.threshold_, self.hysteresis_)

    def predict(self, X):
        labels = []
        for seg in self.segments(X):
            labels.extend([int(seg.kind == BUSY)] * seg.count)
        return np.asarray(labels, dtype=np.int64)


def _steal_series(X):
    if len(X) == 0:
        return []
    if isinstance(X[0], MeasurementSample):
        return [s.steal_us for s in X]
    return check_array(X, ensure_2d=False, dtype=np.float64).ravel().tolist()
