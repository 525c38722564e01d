"""Sample streams (CSV / JSONL) and the calibration key-value file."""
import csv
import io
import json
from fractions import Fraction
from pathlib import Path

from .estimator import MULTIPLIER_DIGITS, MeasurementSample
from .exceptions import ValidationError
from .microbench import CalibrationResult, MicrobenchSpec

SAMPLE_COLUMNS = ("t_start_us", "t_r_us", "multiplier", "t_mg_us", "steal_raw_us", "steal_us")
TRUTH_COLUMNS = ("true_steal_us", "true_guest_us")
FORMATS = ("csv", "jsonl")


def sample_row(sample, with_truth=False):
    row = {name: getattr(sample, name) for name in SAMPLE_COLUMNS}
    row["multiplier"] = f"{sample.multiplier:.{MULTIPLIER_DIGITS}f}"
    if with_truth:
        row.update({name: getattr(sample, name) for name in TRUTH_COLUMNS})
    return row


class SampleWriter:
    """Writes samples one record at a time, flushing after each."""

    def __init__(self, stream, fmt="csv", with_truth=False):
        if fmt not in FORMATS:
            raise ValidationError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")
        self.stream = stream
        self.fmt = fmt
        self.with_truth = with_truth
        self.count = 0
        self._columns = SAMPLE_COLUMNS + (TRUTH_COLUMNS if with_truth else ())
        self._csv = None
        if fmt == "csv":
            self._csv = csv.DictWriter(stream, fieldnames=self._columns, lineterminator="\n")
            self._csv.writeheader()
            stream.flush()

    def __call__(self, sample):
        self.write(sample)

    def write(self, sample):
        row = sample_row(sample, self.with_truth)
        if self._csv is not None:
            self._csv.writerow(row)
        else:
            row["multiplier"] = float(row["multiplier"])
            self.stream.write(json.dumps(row) + "\n")
        self.stream.flush()
        self.count += 1


def dumps_samples(samples, fmt="csv", with_truth=False):
    buf = io.StringIO()
    writer = SampleWriter(buf, fmt, with_truth)
    for s in samples:
        writer.write(s)
    return buf.getvalue()


def _from_row(row):
    try:
        kwargs = {name: int(row[name]) for name in SAMPLE_COLUMNS if name != "multiplier"}
        kwargs["multiplier"] = round(float(row["multiplier"]), MULTIPLIER_DIGITS)
        for name in TRUTH_COLUMNS:
            value = row.get(name)
            kwargs[name] = None if value in (None, "") else int(value)
    except KeyError as exc:
        raise ValidationError(f"missing column {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad sample record {row!r}: {exc}") from None
    return MeasurementSample(**kwargs)


def loads_samples(text):
    """Parse CSV or JSONL sample text; the format is sniffed from the first line."""
    stripped = text.lstrip()
    if not stripped:
        return []
    if stripped.startswith("{"):
        return [_from_row(json.loads(line)) for line in stripped.splitlines() if line.strip()]
    return [_from_row(row) for row in csv.DictReader(io.StringIO(stripped))]


def read_samples(path):
    return loads_samples(Path(path).read_text())


def write_calibration(path, result):
    spec = result.spec
    lines = [
        f"inner_adds={spec.inner_adds}",
        f"iterations={spec.iterations}",
        f"cpi={spec.cpi}",
        f"frequency_hz={spec.frequency_hz}",
        f"t_m_theoretical_us={result.t_m_theoretical_us}",
        f"t_m_empirical_us={result.t_m_empirical_us}",
        f"dispersion_us={result.dispersion_us}",
        f"trials_us={','.join(str(t) for t in result.trials_us)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_calibration(path):
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"{path}:{n}: expected key=value, got {line!r}")
        values[key.strip()] = value.strip()
    try:
        spec = MicrobenchSpec(
            inner_adds=int(values["inner_adds"]),
            iterations=int(values["iterations"]),
            cpi=Fraction(values["cpi"]),
            frequency_hz=Fraction(values["frequency_hz"]),
        )
        trials = [int(t) for t in values["trials_us"].split(",") if t]
        return CalibrationResult(
            spec=spec,
            t_m_theoretical_us=int(values["t_m_theoretical_us"]),
            t_m_empirical_us=int(values["t_m_empirical_us"]),
            trials_us=tuple(trials),
            dispersion_us=int(values["dispersion_us"]),
        )
    except KeyError as exc:
        raise ValidationError(f"{path}: missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
