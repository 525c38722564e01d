"""Scenario runs: a host load pattern against a measurement session.

Samples are attributed to pattern segments by the known schedule (sample
midpoint), not by classification, so the classifier can be scored against
the truth as well.
"""
import json
import multiprocessing as mp
import os
import queue
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .estimator import (
    BUSY,
    IDLE,
    SessionConfig,
    classify_periods,
    default_thresholds,
    run_session,
)
from .exceptions import ScenarioError, ValidationError
from .loadgen import LoadPattern, generate, duty_from_fraction, run_pattern
from .loadsampler import FixedLoadSource
from .microbench import MicrobenchSpec, calibrate, theoretical_time_us
from .records import dumps_samples
from .sim import DEFAULT_QUANTUM_US, SimConfig, replay_estimator, simulate
from .units import exact, ns_to_us

SIMULATED = "simulated"
LIVE = "live"
GUEST_FRACTIONS = (Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(1))


@dataclass(frozen=True)
class Scenario:
    guest_fraction: Fraction
    host_pattern: LoadPattern
    mode: str = SIMULATED
    duration_us: Optional[int] = None
    t_m_us: Optional[int] = None
    quantum_us: int = DEFAULT_QUANTUM_US
    spec: MicrobenchSpec = field(default_factory=MicrobenchSpec)
    cpu: Optional[int] = None

    def __post_init__(self):
        g = exact(self.guest_fraction)
        if g not in GUEST_FRACTIONS:
            raise ValidationError(f"guest_fraction must be one of 0, 0.25, 0.5, 1; got {g}")
        object.__setattr__(self, "guest_fraction", g)
        if self.mode not in (SIMULATED, LIVE):
            raise ValidationError(f"mode must be {SIMULATED!r} or {LIVE!r}, got {self.mode!r}")
        if self.duration_us is None and self.host_pattern.repeat is None:
            raise ValidationError("an infinitely repeating host pattern needs a duration")

    @property
    def horizon_us(self):
        return self.duration_us if self.duration_us is not None else self.host_pattern.total_us


@dataclass
class SegmentStats:
    index: int
    kind: str
    host_fraction: float
    start_us: int
    end_us: int
    count: int
    mean_t_r_us: Optional[float]
    mean_steal_us: Optional[float]
    mean_steal_raw_us: Optional[float]
    mean_true_steal_us: Optional[float] = None
    max_abs_error_us: Optional[int] = None


@dataclass
class ExperimentReport:
    scenario: dict
    t_m_reference_us: int
    segments: list
    samples: list = field(repr=False)
    max_abs_error_us: Optional[int] = None
    conservation_holds: Optional[bool] = None
    classification_boundary_error: Optional[int] = None

    def mean_steal(self, kind):
        values = [s.steal_us for seg in self.segments if seg.kind == kind
                  for s in self._segment_samples(seg)]
        return float(np.mean(values)) if values else None

    def _segment_samples(self, seg):
        return [s for s in self.samples if seg.start_us <= _midpoint(s) < seg.end_us]

    def to_dict(self, samples_csv=None):
        return {
            "scenario": self.scenario,
            "t_m_reference_us": self.t_m_reference_us,
            "max_abs_error_us": self.max_abs_error_us,
            "conservation_holds": self.conservation_holds,
            "classification_boundary_error": self.classification_boundary_error,
            "samples_csv": None if samples_csv is None else str(samples_csv),
            "segments": [asdict(s) for s in self.segments],
        }

    def write(self, json_path, samples_csv=None):
        """Write the JSON report and, if a path is given, the raw sample CSV."""
        has_truth = bool(self.samples) and self.samples[0].true_steal_us is not None
        if samples_csv is not None:
            Path(samples_csv).write_text(dumps_samples(self.samples, "csv", with_truth=has_truth))
        Path(json_path).write_text(json.dumps(self.to_dict(samples_csv), indent=2) + "\n")


def _midpoint(sample):
    return sample.t_start_us + sample.t_r_us // 2


def _scenario_echo(s):
    return {
        "guest_fraction": float(s.guest_fraction),
        "host_pattern": [[float(f), d] for f, d in s.host_pattern.segments],
        "host_repeat": s.host_pattern.repeat,
        "mode": s.mode,
        "duration_us": s.horizon_us,
        "quantum_us": s.quantum_us,
    }


def segment_samples(samples, pattern, horizon_us, epoch_us=0):
    """Group samples by the pattern segment that contains their midpoint."""
    out = []
    for i, (start, end, fraction) in enumerate(pattern.schedule(horizon_us)):
        lo, hi = epoch_us + start, epoch_us + end
        out.append((i, lo, hi, fraction, [s for s in samples if lo <= _midpoint(s) < hi]))
    return out


def _aggregate(samples, pattern, horizon_us, epoch_us=0):
    stats = []
    for i, lo, hi, fraction, members in segment_samples(samples, pattern, horizon_us, epoch_us):
        has_truth = bool(members) and members[0].true_steal_us is not None
        stats.append(SegmentStats(
            index=i,
            kind=BUSY if fraction > 0 else IDLE,
            host_fraction=float(fraction),
            start_us=lo,
            end_us=hi,
            count=len(members),
            mean_t_r_us=_mean(s.t_r_us for s in members),
            mean_steal_us=_mean(s.steal_us for s in members),
            mean_steal_raw_us=_mean(s.steal_raw_us for s in members),
            mean_true_steal_us=_mean(s.true_steal_us for s in members) if has_truth else None,
            max_abs_error_us=max((abs(s.steal_us - s.true_steal_us) for s in members), default=None)
            if has_truth else None,
        ))
    return stats


def _mean(values):
    values = list(values)
    return float(np.mean(values)) if values else None


def boundary_error(samples, stats, t_m_reference_us):
    """Largest index distance between true and classified segment boundaries.

    Only meaningful when the classifier finds the same number of boundaries;
    returns None otherwise.
    """
    threshold, hysteresis = default_thresholds(t_m_reference_us)
    classified = classify_periods(samples, threshold, hysteresis)
    found = [seg.first_sample_index for seg in classified[1:]]
    truth = []
    index = 0
    previous_kind = None
    for seg in stats:
        if seg.count == 0:
            continue
        if previous_kind is not None and seg.kind != previous_kind:
            truth.append(index)
        previous_kind = seg.kind
        index += seg.count
    if len(found) != len(truth):
        return None
    return max((abs(a - b) for a, b in zip(found, truth)), default=0)


def run_scenario(s):
    if s.mode == SIMULATED:
        return _run_simulated(s)
    return _run_live(s)


def _run_simulated(s):
    t_m = s.t_m_us if s.t_m_us is not None else theoretical_time_us(s.spec)
    trace = simulate(SimConfig(
        host_pattern=s.host_pattern,
        t_m_us=t_m,
        total_virtual_time_us=s.horizon_us,
        guest_fraction=s.guest_fraction,
        quantum_us=s.quantum_us,
    ))
    comparisons = replay_estimator(trace, t_m)
    samples = [c.sample for c in comparisons]
    stats = _aggregate(samples, s.host_pattern, s.horizon_us)
    return ExperimentReport(
        scenario=_scenario_echo(s),
        t_m_reference_us=t_m,
        segments=stats,
        samples=samples,
        max_abs_error_us=max(c.abs_error_us for c in comparisons),
        conservation_holds=all(
            r.t_r_us == t_m + r.true_guest_us + r.true_steal_us for r in trace.runs
        ),
        classification_boundary_error=boundary_error(samples, stats, t_m),
    )


# live mode: separate processes pinned to one CPU, coordinated by events


def _pin(cpu):
    os.sched_setaffinity(0, {cpu})


def _pattern_worker(cpu, pattern, ready, go, epoch):
    _pin(cpu)
    ready.release()
    go.wait()
    epoch.value = ns_to_us(time.monotonic_ns())
    run_pattern(pattern)


def _guest_worker(cpu, fraction, duration_us, ready, go):
    _pin(cpu)
    ready.release()
    go.wait()
    generate(duty_from_fraction(fraction), duration_us)


def _session_worker(cpu, spec, t_m_us, guest_fraction, duration_us, ready, go, out):
    try:
        _pin(cpu)
        if t_m_us is None:
            t_m_us = calibrate(spec, 3).t_m_empirical_us
        cfg = SessionConfig(spec, t_m_us, max_duration_us=duration_us, t_m_source="calibrated")
        source = FixedLoadSource(runnable=int(guest_fraction > 0), utilization=float(guest_fraction))
        ready.release()
        go.wait()
        samples = []
        run_session(cfg, source, samples.append)
        out.put(("ok", t_m_us, samples))
    except Exception as exc:  # reported to the coordinator
        ready.release()
        out.put(("error", repr(exc), None))


def _run_live(s):
    if not hasattr(os, "sched_setaffinity"):
        raise ScenarioError("live mode needs CPU affinity control, unavailable on this platform")
    try:
        cpu = s.cpu if s.cpu is not None else min(os.sched_getaffinity(0))
        os.sched_setaffinity(0, os.sched_getaffinity(0))
    except OSError as exc:
        raise ScenarioError(f"cannot control CPU affinity: {exc}") from exc
    horizon = s.horizon_us
    # flatten to exactly the horizon so the worker stops when the session does
    pattern = LoadPattern(tuple((f, e - b) for b, e, f in s.host_pattern.schedule(horizon)), 1)
    ctx = mp.get_context("fork")
    ready = ctx.Semaphore(0)
    go = ctx.Event()
    epoch = ctx.Value("q", 0)
    out = ctx.Queue()
    procs = [
        ctx.Process(target=_pattern_worker, args=(cpu, pattern, ready, go, epoch)),
        ctx.Process(target=_session_worker,
                    args=(cpu, s.spec, s.t_m_us, s.guest_fraction, horizon, ready, go, out)),
    ]
    if s.guest_fraction > 0:
        procs.append(ctx.Process(target=_guest_worker, args=(cpu, s.guest_fraction, horizon, ready, go)))
    for p in procs:
        p.start()
    try:
        for _ in procs:
            ready.acquire()
        go.set()
        try:
            status, t_m_or_err, samples = out.get(timeout=horizon / 1e6 + 600)
        except queue.Empty:
            raise ScenarioError("measurement session produced no result") from None
        if status != "ok":
            raise ScenarioError(f"measurement session failed: {t_m_or_err}")
    finally:
        for p in procs:
            p.join(timeout=horizon / 1e6 + 60)
            if p.is_alive():
                p.terminate()
    stats = _aggregate(samples, pattern, horizon, epoch.value)
    return ExperimentReport(
        scenario=_scenario_echo(s) | {"cpu": cpu, "epoch_us": epoch.value},
        t_m_reference_us=t_m_or_err,
        segments=stats,
        samples=samples,
        classification_boundary_error=boundary_error(samples, stats, t_m_or_err),
    )
