"""Duty-cycle CPU load: a busy burst of known length, then a proportional sleep.

The burst is the microbenchmark kernel itself, run in short granules so the
burst can stop close to its target length.
"""
import itertools
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from . import _kernel
from .exceptions import ValidationError
from .units import exact, ns_to_us, parse_duration

DEFAULT_CHUNK_US = 10_000
GRANULES_PER_CHUNK = 10
BURST_INNER_ADDS = 50

PATTERN_ALIASES = {"I": Fraction(0), "B": Fraction(1)}


@dataclass(frozen=True)
class DutySpec:
    """``chunk_us`` of work followed by ``factor * chunk_us`` of sleep."""

    chunk_us: int = DEFAULT_CHUNK_US
    factor: Fraction = Fraction(0)

    def __post_init__(self):
        if self.chunk_us <= 0:
            raise ValidationError(f"chunk must be > 0, got {self.chunk_us}")
        factor = exact(self.factor)
        if factor < 0:
            raise ValidationError(f"factor must be >= 0, got {self.factor}")
        object.__setattr__(self, "factor", factor)

    @property
    def fraction(self):
        return 1 / (1 + self.factor)

    @property
    def sleep_us(self):
        return self.factor * self.chunk_us


def duty_from_fraction(target, chunk_us=DEFAULT_CHUNK_US):
    target = exact(target)
    if not 0 < target <= 1:
        raise ValidationError(f"target load must be in (0, 1], got {target}")
    return DutySpec(chunk_us, (1 - target) / target)


@dataclass(frozen=True)
class LoadPattern:
    """Ordered ``(fraction, duration_us)`` segments, repeated ``repeat`` times.

    ``repeat=None`` repeats forever.
    """

    segments: tuple
    repeat: Optional[int] = 1

    def __post_init__(self):
        if not self.segments:
            raise ValidationError("a load pattern needs at least one segment")
        segs = []
        for fraction, duration in self.segments:
            fraction = exact(fraction)
            if not 0 <= fraction <= 1:
                raise ValidationError(f"segment fraction must be in [0, 1], got {fraction}")
            if duration <= 0:
                raise ValidationError(f"segment duration must be > 0, got {duration}")
            segs.append((fraction, int(duration)))
        object.__setattr__(self, "segments", tuple(segs))
        if self.repeat is not None and self.repeat < 1:
            raise ValidationError(f"repeat must be >= 1, got {self.repeat}")

    @property
    def cycle_us(self):
        return sum(d for _, d in self.segments)

    @property
    def total_us(self):
        return None if self.repeat is None else self.cycle_us * self.repeat

    def schedule(self, horizon_us=None):
        """Yield ``(start_us, end_us, fraction)`` relative to the pattern start.

        Infinite patterns need ``horizon_us``; segments are cut at the horizon.
        """
        if self.repeat is None and horizon_us is None:
            raise ValidationError("an infinitely repeating pattern needs a horizon")
        cycles = itertools.count() if self.repeat is None else range(self.repeat)
        t = 0
        for _ in cycles:
            for fraction, duration in self.segments:
                if horizon_us is not None and t >= horizon_us:
                    return
                end = t + duration if horizon_us is None else min(t + duration, horizon_us)
                yield t, end, fraction
                t += duration

    @classmethod
    def constant(cls, fraction, duration_us):
        return cls(((fraction, duration_us),), 1)

    @classmethod
    def alternating(cls, idle_us, busy_us, repeat):
        """The idle/busy host pattern: fully idle, then fully busy."""
        return cls(((0, idle_us), (1, busy_us)), repeat)


def parse_pattern(text, repeat=1):
    """Parse ``"I:30,B:30"`` or ``"0.25:5s,0:500ms"`` into a :class:`LoadPattern`.

    ``I`` and ``B`` stand for fractions 0 and 1. Bare durations are seconds.
    """
    segments = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        head, sep, tail = item.partition(":")
        if not sep:
            raise ValidationError(f"pattern segment {item!r} is not FRACTION:DURATION")
        head = head.strip()
        try:
            fraction = PATTERN_ALIASES[head.upper()] if head.upper() in PATTERN_ALIASES else Fraction(head)
        except ValueError:
            raise ValidationError(f"bad load fraction {head!r}") from None
        segments.append((fraction, parse_duration(tail)))
    return LoadPattern(tuple(segments), repeat)


class BurstWorker:
    """Spins the add-chain kernel in granules of roughly ``granule_us``."""

    def __init__(self, kernel=None, granule_us=DEFAULT_CHUNK_US // GRANULES_PER_CHUNK):
        self.kernel = kernel or _kernel.best_kernel(BURST_INNER_ADDS)
        self.granule_us = granule_us
        self.granule_iterations = self._size_granule()

    def _size_granule(self):
        iterations = 64
        while True:
            elapsed_ns = min(self.kernel.run(iterations) for _ in range(3))
            if elapsed_ns >= 200_000 or iterations >= 1 << 40:
                break
            iterations *= 4
        return max(1, round(iterations * self.granule_us * 1000 / max(elapsed_ns, 1)))

    def burst(self, length_us, clock_ns=time.monotonic_ns):
        """Spin for at least ``length_us``; return the burst's wall time in ns."""
        start = clock_ns()
        target = start + length_us * 1000
        now = start
        while now < target:
            self.kernel.run(self.granule_iterations)
            now = clock_ns()
        return now - start


@dataclass(frozen=True)
class GenerateResult:
    achieved: float
    busy_us: int
    elapsed_us: int


def generate(duty, duration_us, worker=None, clock_ns=time.monotonic_ns, sleep=time.sleep):
    """Alternate bursts and sleeps for ``duration_us``; report the busy fraction.

    Sleeps may overshoot at the OS's discretion; the achieved fraction is
    reported as measured rather than corrected.
    """
    if duration_us < 10 * duty.chunk_us:
        raise ValidationError(
            f"duration {duration_us} us is shorter than ten chunks ({10 * duty.chunk_us} us)"
        )
    worker = worker or BurstWorker(granule_us=max(1, duty.chunk_us // GRANULES_PER_CHUNK))
    sleep_ns = int(duty.sleep_us * 1000)
    start = clock_ns()
    deadline = start + duration_us * 1000
    busy = 0
    now = start
    while now < deadline:
        busy += worker.burst(min(duty.chunk_us, max(1, (deadline - now) // 1000)), clock_ns)
        now = clock_ns()
        if sleep_ns and now < deadline:
            sleep(min(sleep_ns, deadline - now) / 1e9)
            now = clock_ns()
    elapsed = now - start
    return GenerateResult(busy / elapsed if elapsed else 0.0, ns_to_us(busy), ns_to_us(elapsed))


@dataclass(frozen=True)
class SegmentReport:
    index: int
    fraction: Fraction
    duration_us: int
    start_us: int
    elapsed_us: int
    achieved: float


def run_pattern(pattern, chunk_us=DEFAULT_CHUNK_US, worker=None, clock_ns=time.monotonic_ns,
                sleep=time.sleep, stop=None, on_segment=None):
    """Play ``pattern`` segment by segment and report what each achieved.

    ``stop()`` is polled between segments (needed for infinite patterns);
    ``on_segment(report)`` is called as each segment completes.
    """
    reports = []
    needs_worker = any(f > 0 for f, _ in pattern.segments)
    if needs_worker and worker is None:
        worker = BurstWorker(granule_us=max(1, chunk_us // GRANULES_PER_CHUNK))
    cycles = itertools.count() if pattern.repeat is None else range(pattern.repeat)
    index = 0
    for _ in cycles:
        for fraction, duration in pattern.segments:
            if stop is not None and stop():
                return reports
            seg_start = clock_ns()
            if fraction == 0:
                sleep(duration / 1e6)
                end = clock_ns()
                # top up if the sleep returned early
                while end - seg_start < duration * 1000:
                    sleep((duration * 1000 - (end - seg_start)) / 1e9)
                    end = clock_ns()
                result = GenerateResult(0.0, 0, ns_to_us(end - seg_start))
            else:
                result = generate(duty_from_fraction(fraction, chunk_us), duration, worker, clock_ns, sleep)
            report = SegmentReport(index, fraction, duration, ns_to_us(seg_start), result.elapsed_us, result.achieved)
            reports.append(report)
            if on_segment is not None:
                on_segment(report)
            index += 1
    return reports
