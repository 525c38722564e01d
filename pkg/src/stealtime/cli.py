"""Command-line interface.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path

from . import harness, loadgen, microbench, records, report, sim
from .estimator import SessionConfig, run_session
from .exceptions import StealTimeError, ValidationError
from .loadsampler import PROC_STAT, ProcStatSource
from .units import parse_duration, parse_frequency, us_to_seconds

log = logging.getLogger("stealtime")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

DEFAULT_CALIBRATION = "stealtime-calibration.txt"


class UsageError(StealTimeError):
    pass


def _arg(fn):
    def wrapped(text):
        try:
            return fn(text)
        except (ValidationError, ValueError, ZeroDivisionError) as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    wrapped.__name__ = fn.__name__
    return wrapped


@_arg
def duration(text):
    return parse_duration(text)


@_arg
def frequency(text):
    return parse_frequency(text)


@_arg
def fraction(text):
    return Fraction(text)


def _add_spec_args(p):
    g = p.add_argument_group("microbenchmark")
    g.add_argument("--adds", type=int, default=microbench.DEFAULT_INNER_ADDS,
                   help="dependent adds per loop iteration (default: %(default)s)")
    g.add_argument("--iterations", type=int, default=microbench.DEFAULT_ITERATIONS,
                   help="loop iterations (default: %(default)s)")
    g.add_argument("--cpi", type=fraction, default=Fraction(microbench.DEFAULT_CPI),
                   help="cycles per instruction (default: %(default)s)")
    g.add_argument("--freq", type=frequency, default=Fraction(microbench.DEFAULT_FREQUENCY_HZ),
                   help="fixed CPU frequency, e.g. 1.2GHz (default: 1.2GHz)")


def _add_cpu_arg(p):
    p.add_argument("--cpu", type=int, default=None, help="pin this process to a logical CPU")


def _spec(args):
    return microbench.MicrobenchSpec(args.adds, args.iterations, args.cpi, args.freq)


def apply_affinity(cpu):
    """Pin to ``cpu``; warn and carry on where the OS offers no affinity control."""
    if cpu is None:
        return False
    if cpu < 0:
        raise UsageError(f"--cpu must be a logical CPU index, got {cpu}")
    if not hasattr(os, "sched_setaffinity"):
        log.warning("CPU affinity is not supported here; measurements may be disturbed")
        return False
    try:
        os.sched_setaffinity(0, {cpu})
    except OSError as exc:
        if cpu not in range(os.cpu_count() or 1):
            raise UsageError(f"--cpu {cpu} is not a valid logical CPU") from None
        log.warning("could not pin to CPU %d (%s); continuing unpinned", cpu, exc)
        return False
    return True


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as f:
            yield f


def cmd_calibrate(args):
    if args.trials < microbench.MIN_CALIBRATION_TRIALS:
        raise UsageError(f"--trials must be >= {microbench.MIN_CALIBRATION_TRIALS}")
    apply_affinity(args.cpu)
    result = microbench.calibrate(_spec(args), args.trials)
    records.write_calibration(args.output, result)
    print(f"t_m_theoretical: {result.t_m_theoretical_us / 1000:.3f} ms")
    print(f"t_m_empirical:   {result.t_m_empirical_us / 1000:.3f} ms (min of {len(result.trials_us)})")
    print(f"dispersion:      {result.dispersion_us / 1000:.3f} ms")
    print(f"written to {args.output}")
    return EXIT_OK


def cmd_measure(args):
    if args.theoretical:
        spec = _spec(args)
        calibration = None
    else:
        if not Path(args.calibration).exists():
            raise UsageError(
                f"calibration file {args.calibration} not found; run 'calibrate' or pass --theoretical"
            )
        calibration = records.read_calibration(args.calibration)
        spec = calibration.spec
    cfg = SessionConfig.create(
        spec, calibration,
        period_us=args.period,
        max_samples=args.samples,
        max_duration_us=args.duration,
    )
    apply_affinity(args.cpu)
    source = ProcStatSource(path=args.proc_stat, cpu=args.stat_cpu)
    with _output(args.output) as out:
        writer = records.SampleWriter(out, args.format)
        summary = run_session(cfg, source, writer)
    print(
        f"{summary.count} samples, reference T_m {cfg.t_m_reference_us / 1000:.3f} ms ({cfg.t_m_source}), "
        + ", ".join(f"mean {k} steal {v / 1000:.1f} ms" for k, v in summary.mean_steal_us.items()),
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_loadgen(args):
    if args.pattern is not None:
        pattern = loadgen.parse_pattern(args.pattern, args.repeat)
    else:
        if not 0 < args.fraction <= 1:
            raise UsageError(f"--fraction must be in (0, 1], got {float(args.fraction)}")
        pattern = loadgen.LoadPattern.constant(args.fraction, args.duration)
    apply_affinity(args.cpu)

    def show(rep):
        print(f"segment {rep.index}: target {float(rep.fraction):.2f} "
              f"over {us_to_seconds(rep.elapsed_us):.2f} s, achieved {rep.achieved:.3f}", flush=True)

    loadgen.run_pattern(pattern, chunk_us=args.chunk, on_segment=show)
    return EXIT_OK


def _host_pattern(args):
    if args.host == "idle":
        return loadgen.LoadPattern.constant(0, args.duration or 60_000_000)
    if args.host == "busy":
        return loadgen.LoadPattern.constant(1, args.duration or 60_000_000)
    return loadgen.parse_pattern(args.host, args.repeat)


def cmd_simulate(args):
    if not 0 <= args.guest <= 1:
        raise UsageError(f"--guest must be in [0, 1], got {float(args.guest)}")
    pattern = _host_pattern(args)
    horizon = args.duration or pattern.total_us
    t_m = args.t_m if args.t_m is not None else microbench.theoretical_time_us(_spec(args))
    trace = sim.simulate(sim.SimConfig(pattern, t_m, horizon, args.guest, args.quantum))
    comparisons = sim.replay_estimator(trace)
    with _output(args.output) as out:
        writer = records.SampleWriter(out, args.format, with_truth=True)
        for c in comparisons:
            writer.write(c.sample)
    n = len(comparisons)
    summary = {
        "runs": n,
        "t_m_us": t_m,
        "quantum_us": args.quantum,
        "mean_abs_error_us": sum(c.abs_error_us for c in comparisons) / n,
        "max_abs_error_us": max(c.abs_error_us for c in comparisons),
        "mean_rel_steal_error": sum(c.abs_error_us for c in comparisons) / n / t_m,
    }
    print(json.dumps(summary), file=sys.stderr)
    return EXIT_OK


def cmd_scenario(args):
    pattern = loadgen.parse_pattern(args.host, args.repeat)
    scen = harness.Scenario(
        guest_fraction=args.guest,
        host_pattern=pattern,
        mode=args.mode,
        duration_us=args.duration,
        t_m_us=args.t_m,
        quantum_us=args.quantum,
        spec=_spec(args),
        cpu=args.cpu,
    )
    result = harness.run_scenario(scen)
    result.write(args.report, args.samples_csv)
    for seg in result.segments:
        steal = "-" if seg.mean_steal_us is None else f"{seg.mean_steal_us / 1000:.1f} ms"
        print(f"segment {seg.index} {seg.kind:4s}: {seg.count:4d} samples, mean steal {steal}")
    return EXIT_OK


def cmd_report(args):
    samples = records.read_samples(args.input)
    if not samples:
        raise StealTimeError(f"{args.input} contains no samples")
    out = args.output or str(Path(args.input).with_suffix(".svg"))
    segments = report.render_report(samples, out, args.threshold, args.hysteresis, title=args.title)
    print(f"{len(samples)} samples, {len(segments)} segments, plot written to {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="stealtime", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="measure the empirical T_m on this machine")
    _add_spec_args(p)
    _add_cpu_arg(p)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("-o", "--output", default=DEFAULT_CALIBRATION)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("measure", help="stream steal-time samples")
    _add_spec_args(p)
    _add_cpu_arg(p)
    p.add_argument("--calibration", default=DEFAULT_CALIBRATION)
    p.add_argument("--theoretical", action="store_true",
                   help="use the theoretical T_m from the microbenchmark flags instead of a calibration file")
    stop = p.add_mutually_exclusive_group(required=True)
    stop.add_argument("--samples", type=int)
    stop.add_argument("--duration", type=duration)
    p.add_argument("--period", type=duration, default=0)
    p.add_argument("--format", choices=records.FORMATS, default="csv")
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--proc-stat", default=PROC_STAT, help=argparse.SUPPRESS)
    p.add_argument("--stat-cpu", type=int, default=None,
                   help="read the per-CPU line for this CPU instead of the aggregate")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("loadgen", help="generate a duty-cycle CPU load or pattern")
    _add_cpu_arg(p)
    what = p.add_mutually_exclusive_group(required=True)
    what.add_argument("--fraction", type=fraction)
    what.add_argument("--pattern", help='segments like "I:30,B:30" or "0.25:5s"')
    p.add_argument("--duration", type=duration, default=10_000_000)
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--chunk", type=duration, default=loadgen.DEFAULT_CHUNK_US)
    p.set_defaults(func=cmd_loadgen)

    p = sub.add_parser("simulate", help="simulate a scenario and compare estimate to truth")
    _add_spec_args(p)
    p.add_argument("--guest", type=fraction, default=Fraction(0))
    p.add_argument("--host", default="I:30,B:30", help='"idle", "busy" or a pattern like "I:30,B:30"')
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--duration", type=duration, default=None)
    p.add_argument("--quantum", type=duration, default=sim.DEFAULT_QUANTUM_US)
    p.add_argument("--t-m", type=duration, default=None, help="override T_m (default: theoretical)")
    p.add_argument("--format", choices=records.FORMATS, default="csv")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scenario", help="run a harness scenario (simulated or live)")
    _add_spec_args(p)
    _add_cpu_arg(p)
    p.add_argument("--guest", type=fraction, default=Fraction(0))
    p.add_argument("--host", default="I:30,B:30")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--mode", choices=(harness.SIMULATED, harness.LIVE), default=harness.SIMULATED)
    p.add_argument("--duration", type=duration, default=None)
    p.add_argument("--quantum", type=duration, default=sim.DEFAULT_QUANTUM_US)
    p.add_argument("--t-m", type=duration, default=None)
    p.add_argument("--report", default="scenario-report.json")
    p.add_argument("--samples-csv", default="scenario-samples.csv")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("report", help="plot a sample CSV as SVG")
    p.add_argument("input")
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--threshold", type=duration, default=None)
    p.add_argument("--hysteresis", type=duration, default=None)
    p.add_argument("--title", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_RUNTIME
    except (UsageError, ValidationError) as exc:
        print(f"stealtime: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StealTimeError, OSError) as exc:
        print(f"stealtime: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
