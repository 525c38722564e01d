"""Guest load readings and the load multiplier that scales T_m.

A load source measures guest CPU demand over a window. The window is opened
right before the microbenchmark starts and closed right after it ends, so the
reading covers exactly the interval whose wall time is being judged.
"""
import os
import time
from dataclasses import dataclass

from .exceptions import SourceError, ValidationError
from .units import ns_to_us

PROC_STAT = "/proc/stat"

# field order of a "cpu" line in /proc/stat
CPU_FIELDS = ("user", "nice", "system", "idle", "iowait", "irq", "softirq", "steal", "guest", "guest_nice")
_IDLE_FIELDS = {"idle", "iowait"}
# guest time is already folded into user/nice by the kernel
_DUPLICATE_FIELDS = {"guest", "guest_nice"}


@dataclass(frozen=True)
class GuestLoad:
    runnable: int
    utilization: float
    window_us: int = 0

    def __post_init__(self):
        if self.runnable < 0:
            raise ValidationError(f"runnable must be >= 0, got {self.runnable}")
        if not 0.0 <= self.utilization <= 1.0:
            raise ValidationError(f"utilization must be in [0, 1], got {self.utilization}")
        if self.window_us < 0:
            raise ValidationError(f"window must be >= 0, got {self.window_us}")


def load_multiplier(gl):
    """Factor by which competing guest work stretches the microbenchmark.

    On a single-core guest the competitors can at most take the whole CPU,
    and only if something else is runnable, so the competing share is capped
    at ``min(runnable, 1)``. An idle guest gives exactly 1.
    """
    cap = min(gl.runnable, 1)
    return 1.0 + min(gl.utilization, cap)


@dataclass(frozen=True)
class StatCounters:
    """One reading of the aggregate (or per-CPU) counters plus ``procs_running``."""

    ticks: tuple
    procs_running: int

    @property
    def busy(self):
        return sum(
            v for name, v in zip(CPU_FIELDS, self.ticks)
            if name not in _IDLE_FIELDS and name not in _DUPLICATE_FIELDS
        ) + sum(self.ticks[len(CPU_FIELDS):])

    @property
    def total(self):
        return sum(
            v for name, v in zip(CPU_FIELDS, self.ticks) if name not in _DUPLICATE_FIELDS
        ) + sum(self.ticks[len(CPU_FIELDS):])


def parse_proc_stat(text, cpu=None):
    """Pull the CPU counters and ``procs_running`` out of /proc/stat text.

    ``cpu=None`` selects the aggregate ``cpu`` line, an integer selects
    ``cpuN``. Other lines are ignored.
    """
    label = "cpu" if cpu is None else f"cpu{cpu}"
    ticks = None
    running = None
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == label:
            try:
                ticks = tuple(int(p) for p in parts[1:])
            except ValueError:
                raise SourceError("non-integer CPU counter", line) from None
            if len(ticks) < 4 or any(t < 0 for t in ticks):
                raise SourceError("malformed CPU line", line)
        elif parts[0] == "procs_running":
            if len(parts) != 2 or not parts[1].isdigit():
                raise SourceError("malformed procs_running line", line)
            running = int(parts[1])
    if ticks is None:
        raise SourceError(f"no {label!r} line in statistics text")
    if running is None:
        raise SourceError("no 'procs_running' line in statistics text")
    return StatCounters(ticks, running)


class FixedLoadSource:
    """Returns the configured load for every window. For tests and simulation."""

    def __init__(self, runnable=0, utilization=0.0, clock_ns=time.monotonic_ns):
        self.load = GuestLoad(runnable, utilization)
        self._clock_ns = clock_ns

    def open_window(self):
        return self._clock_ns()

    def close_window(self, token):
        return GuestLoad(self.load.runnable, self.load.utilization, ns_to_us(self._clock_ns() - token))


class ProcStatSource:
    """Reads guest load from the kernel statistics text (``/proc/stat`` layout).

    The calling process's own CPU time over the window is subtracted from the
    busy delta, otherwise the microbenchmark would count as competing load.
    One window at a time per instance.
    """

    def __init__(
        self,
        path=PROC_STAT,
        cpu=None,
        reader=None,
        self_cpu_ns=time.process_time_ns,
        clock_ns=time.monotonic_ns,
        ticks_per_second=None,
        exclude_self=True,
    ):
        self.path = path
        self.cpu = cpu
        self._reader = reader or self._read_file
        self._self_cpu_ns = self_cpu_ns
        self._clock_ns = clock_ns
        self.ticks_per_second = ticks_per_second or os.sysconf("SC_CLK_TCK")
        self.exclude_self = exclude_self

    def _read_file(self):
        try:
            with open(self.path) as f:
                return f.read()
        except OSError as exc:
            raise SourceError(f"cannot read {self.path}: {exc}") from exc

    def read(self):
        return parse_proc_stat(self._reader(), self.cpu)

    def open_window(self):
        return (self.read(), self._self_cpu_ns(), self._clock_ns())

    def close_window(self, token):
        start, self_start, t_start = token
        end = self.read()
        self_end = self._self_cpu_ns()
        t_end = self._clock_ns()
        if len(end.ticks) != len(start.ticks):
            raise SourceError("CPU line changed width between readings")
        if any(b < a for a, b in zip(start.ticks, end.ticks)):
            raise SourceError("CPU counters went backwards")
        total = end.total - start.total
        busy = end.busy - start.busy
        if self.exclude_self:
            busy -= (self_end - self_start) * self.ticks_per_second / 1e9
        utilization = min(max(busy / total, 0.0), 1.0) if total > 0 else 0.0
        return GuestLoad(
            runnable=max(end.procs_running - 1, 0),
            utilization=utilization,
            window_us=ns_to_us(t_end - t_start),
        )


def snapshot(source, window_us, sleep=time.sleep):
    """Measure ``source`` over a window of ``window_us`` microseconds."""
    if window_us <= 0:
        raise ValidationError(f"window must be > 0, got {window_us}")
    token = source.open_window()
    sleep(window_us / 1e6)
    return source.close_window(token)
