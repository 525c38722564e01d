"""The deterministic microbenchmark: a chain of dependent integer adds.

Its runtime on an uncontended core is known in closed form,
``instructions * CPI / frequency``, which is what makes it usable as a
yardstick for time stolen by other tenants.
"""
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Integral

from . import _kernel
from .exceptions import ValidationError
from .units import exact, ns_to_us, seconds_to_us

DEFAULT_INNER_ADDS = 50
DEFAULT_ITERATIONS = 10_000_000
DEFAULT_CPI = 1
DEFAULT_FREQUENCY_HZ = 1_200_000_000

MIN_CALIBRATION_TRIALS = 3


@dataclass(frozen=True)
class MicrobenchSpec:
    """Parameters of the add-chain workload.

    ``cpi`` and ``frequency_hz`` are stored as exact fractions; floats are
    read through their decimal representation so ``1.2e9`` stays exact.
    """

    inner_adds: int = DEFAULT_INNER_ADDS
    iterations: int = DEFAULT_ITERATIONS
    cpi: Fraction = Fraction(DEFAULT_CPI)
    frequency_hz: Fraction = Fraction(DEFAULT_FREQUENCY_HZ)

    def __post_init__(self):
        for name in ("inner_adds", "iterations"):
            value = getattr(self, name)
            if not isinstance(value, Integral) or isinstance(value, bool):
                raise ValidationError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise ValidationError(f"{name} must be >= 1, got {value}")
        for name in ("cpi", "frequency_hz"):
            try:
                value = exact(getattr(self, name))
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{name}: {exc}") from None
            if value <= 0:
                raise ValidationError(f"{name} must be > 0, got {value}")
            object.__setattr__(self, name, value)

    @property
    def total_instructions(self):
        # decrement and branch per iteration are not counted
        return self.inner_adds * self.iterations


@dataclass(frozen=True)
class CalibrationResult:
    spec: MicrobenchSpec
    t_m_theoretical_us: int
    t_m_empirical_us: int
    trials_us: tuple = field(default=())
    dispersion_us: int = 0

    @classmethod
    def from_trials(cls, spec, trials_us):
        trials = tuple(int(t) for t in trials_us)
        if len(trials) < MIN_CALIBRATION_TRIALS:
            raise ValidationError(
                f"calibration needs at least {MIN_CALIBRATION_TRIALS} trials, got {len(trials)}"
            )
        result = cls(
            spec=spec,
            t_m_theoretical_us=theoretical_time_us(spec),
            t_m_empirical_us=min(trials),
            trials_us=trials,
            dispersion_us=max(trials) - min(trials),
        )
        if not result.plausible:
            warnings.warn(
                f"empirical T_m {result.t_m_empirical_us} us is less than half the theoretical "
                f"{result.t_m_theoretical_us} us; check frequency_hz and cpi",
                RuntimeWarning,
                stacklevel=2,
            )
        return result

    @property
    def plausible(self):
        return 2 * self.t_m_empirical_us >= self.t_m_theoretical_us


def theoretical_time(spec):
    """Exact theoretical runtime in seconds, as a Fraction."""
    if not isinstance(spec, MicrobenchSpec):
        raise ValidationError(f"expected MicrobenchSpec, got {type(spec).__name__}")
    return spec.total_instructions * spec.cpi / spec.frequency_hz


def theoretical_time_us(spec):
    """:func:`theoretical_time` rounded to the nearest microsecond."""
    return seconds_to_us(theoretical_time(spec))


def run_once(spec, kernel=None):
    """Execute the add chain once and return its monotonic wall time in µs.

    Not re-entrant; the caller is expected to have pinned the thread to one CPU.
    ``kernel`` defaults to the compiled native kernel, and a
    :class:`~stealtime.exceptions.KernelUnavailableError` surfaces if it
    cannot be built.
    """
    return ns_to_us(run_once_ns(spec, kernel))


def run_once_ns(spec, kernel=None):
    if not isinstance(spec, MicrobenchSpec):
        raise ValidationError(f"expected MicrobenchSpec, got {type(spec).__name__}")
    if kernel is None:
        kernel = _kernel.get_kernel(spec.inner_adds)
    elif kernel.inner_adds != spec.inner_adds:
        raise ValidationError(
            f"kernel built for {kernel.inner_adds} adds, spec asks for {spec.inner_adds}"
        )
    return kernel.run(spec.iterations)


def calibrate(spec, trials=10, runner=None):
    """Run the microbenchmark ``trials`` times and keep the fastest run.

    Interference can only make a run slower, so the minimum is the least
    contaminated estimate of T_m on this machine.
    """
    if trials < MIN_CALIBRATION_TRIALS:
        raise ValidationError(
            f"calibration needs at least {MIN_CALIBRATION_TRIALS} trials, got {trials}"
        )
    runner = runner or run_once
    return CalibrationResult.from_trials(spec, [runner(spec) for _ in range(trials)])
