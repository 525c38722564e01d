"""Virtual-time simulation of two-level CPU multiplexing.

One physical CPU is shared round-robin by the hypervisor between the guest
VM and a host-side competitor whose demand follows a :class:`LoadPattern`.
Inside the guest, the virtual CPU is shared between the microbenchmark (M)
and a guest load (G) by weighted round-robin, G's weight being
``guest_fraction`` relative to M's 1. M runs back to back, so the CPU is
never idle and every microsecond of a run is M, G or host time. That gives
exact ground truth for steal (host time during a run) and guest
interference (G time during a run).

Everything is integer microseconds and exact fractions; there is no
randomness, so equal configs produce equal traces.
"""
import bisect
from dataclasses import dataclass, field
from fractions import Fraction

from .estimator import make_sample
from .exceptions import SimConfigError, ValidationError
from .loadgen import LoadPattern
from .loadsampler import GuestLoad
from .units import exact

MICROBENCH = "M"
GUEST = "G"
HOST = "H"

DEFAULT_QUANTUM_US = 10_000
DEFAULT_HOST_WINDOW_US = 1_000_000


@dataclass(frozen=True)
class SimConfig:
    host_pattern: LoadPattern
    t_m_us: int
    total_virtual_time_us: int
    guest_fraction: Fraction = Fraction(0)
    quantum_us: int = DEFAULT_QUANTUM_US
    # fractional host segments demand the CPU for the leading part of each window
    host_window_us: int = DEFAULT_HOST_WINDOW_US

    def __post_init__(self):
        g = exact(self.guest_fraction)
        if not 0 <= g <= 1:
            raise ValidationError(f"guest_fraction must be in [0, 1], got {g}")
        object.__setattr__(self, "guest_fraction", g)
        if self.quantum_us <= 0:
            raise ValidationError(f"quantum must be > 0, got {self.quantum_us}")
        if self.t_m_us <= 0:
            raise ValidationError(f"t_m must be > 0, got {self.t_m_us}")
        if self.host_window_us <= 0:
            raise ValidationError(f"host window must be > 0, got {self.host_window_us}")
        if self.total_virtual_time_us < self.t_m_us:
            raise SimConfigError(
                f"horizon {self.total_virtual_time_us} us is shorter than one run ({self.t_m_us} us)"
            )


@dataclass(frozen=True)
class SimRun:
    start_us: int
    t_r_us: int
    true_steal_us: int
    true_guest_us: int

    @property
    def end_us(self):
        return self.start_us + self.t_r_us

    @property
    def midpoint_us(self):
        return self.start_us + self.t_r_us // 2


@dataclass(frozen=True)
class SimTrace:
    config: SimConfig
    runs: tuple
    ledger: tuple = field(repr=False)  # (start_us, end_us, owner), contiguous

    def to_samples(self, t_m_reference_us=None):
        """Estimator samples for every run, carrying the ground-truth columns."""
        return [c.sample for c in replay_estimator(self, t_m_reference_us)]


class _HostDemand:
    """Answers "does the host want the CPU at t, and until when?"."""

    def __init__(self, pattern, horizon_us, window_us):
        self.window = window_us
        self.segments = list(pattern.schedule(horizon_us))
        self.starts = [s for s, _, _ in self.segments]

    def at(self, t):
        i = bisect.bisect_right(self.starts, t) - 1
        if i < 0 or t >= self.segments[i][1]:
            # past the end of a finite pattern
            return False, None
        start, end, fraction = self.segments[i]
        if fraction == 0:
            return False, end
        if fraction == 1:
            return True, end
        offset = (t - start) % self.window
        window_start = t - offset
        on_len = fraction * self.window
        if offset < on_len:
            edge = window_start + on_len
            edge = -(-edge.numerator // edge.denominator) if isinstance(edge, Fraction) else edge
            return True, min(int(edge), end)
        return False, min(window_start + self.window, end)


def simulate(cfg):
    """Run the two-level round-robin model over the configured horizon."""
    horizon = cfg.total_virtual_time_us
    q = cfg.quantum_us
    g = cfg.guest_fraction
    host = _HostDemand(cfg.host_pattern, horizon, cfg.host_window_us)

    ledger = []
    runs = []

    def own(start, end, who):
        if ledger and ledger[-1][2] == who and ledger[-1][1] == start:
            ledger[-1] = (ledger[-1][0], end, who)
        else:
            ledger.append((start, end, who))

    t = 0
    last_vm_owner = HOST  # so the guest gets the first slot
    m_total = 0  # cumulative CPU given to M and G inside the guest
    g_total = 0
    run_start = 0
    run_service = 0
    run_guest = 0
    run_steal = 0

    while t < horizon:
        demands, until = host.at(t)
        if demands and last_vm_owner != HOST:
            end = min(t + q, until, horizon)
            own(t, end, HOST)
            run_steal += end - t
            last_vm_owner = HOST
            t = end
            continue

        last_vm_owner = GUEST
        end = min(t + q, horizon)
        if g > 0 and g_total < g * m_total:
            own(t, end, GUEST)
            g_total += end - t
            run_guest += end - t
            t = end
            continue

        # M's slot; runs may finish and restart inside it
        while t < end:
            step = min(end - t, cfg.t_m_us - run_service)
            own(t, t + step, MICROBENCH)
            run_service += step
            m_total += step
            t += step
            if run_service == cfg.t_m_us:
                runs.append(SimRun(run_start, t - run_start, run_steal, run_guest))
                run_start, run_service, run_guest, run_steal = t, 0, 0, 0

    if not runs:
        raise SimConfigError("no microbenchmark run completed within the horizon")
    return SimTrace(cfg, tuple(runs), tuple(ledger))


@dataclass(frozen=True)
class RunComparison:
    index: int
    sample: object
    estimated_steal_us: int
    true_steal_us: int

    @property
    def abs_error_us(self):
        return abs(self.estimated_steal_us - self.true_steal_us)

    @property
    def rel_error(self):
        """Error relative to the run's true T_r."""
        return self.abs_error_us / self.sample.t_r_us


def replay_estimator(trace, t_m_reference_us=None):
    """Apply the estimator to each simulated run with a perfect load source.

    The load multiplier is what an ideal guest load reading would give:
    ``1 + guest_time / t_m``.
    """
    t_m = trace.config.t_m_us
    t_ref = t_m if t_m_reference_us is None else t_m_reference_us
    out = []
    for i, run in enumerate(trace.runs):
        multiplier = 1 + Fraction(run.true_guest_us, t_m)
        sample = make_sample(
            run.start_us, run.t_r_us, t_ref, multiplier,
            true_steal_us=run.true_steal_us, true_guest_us=run.true_guest_us,
        )
        out.append(RunComparison(i, sample, sample.steal_us, run.true_steal_us))
    return out


class TraceRunner:
    """Feeds simulated runs to :func:`~stealtime.estimator.run_session`.

    Use the instance as the session's runner, :meth:`clock_us` as its clock
    and :meth:`load_source` as its load source; the session then runs on the
    simulator's virtual time.
    """

    def __init__(self, trace):
        self.trace = trace
        self._runs = iter(trace.runs)
        self.now_us = 0
        self.last = None

    def __call__(self, spec):
        try:
            run = next(self._runs)
        except StopIteration:
            raise SimConfigError("the simulated trace has no more runs") from None
        self.now_us = run.end_us
        self.last = run
        return run.start_us, run.t_r_us

    def clock_us(self):
        return self.now_us

    def sleep(self, seconds):
        self.now_us += round(seconds * 1e6)

    def load_source(self):
        return _TraceLoadSource(self)


class _TraceLoadSource:
    def __init__(self, runner):
        self.runner = runner

    def open_window(self):
        return None

    def close_window(self, token):
        run = self.runner.last
        share = Fraction(run.true_guest_us, self.runner.trace.config.t_m_us)
        return GuestLoad(int(run.true_guest_us > 0), float(min(share, 1)), run.t_r_us)
