import json

import pytest
from hypothesis import given, strategies as st

from stealtime.estimator import MeasurementSample, make_sample
from stealtime.exceptions import ValidationError
from stealtime.microbench import CalibrationResult, MicrobenchSpec
from stealtime.records import (
    SAMPLE_COLUMNS,
    SampleWriter,
    dumps_samples,
    loads_samples,
    read_calibration,
    write_calibration,
)

samples_strategy = st.lists(
    st.builds(
        make_sample,
        t_start_us=st.integers(0, 10**12),
        t_r_us=st.integers(1, 10**9),
        t_m_reference_us=st.integers(1, 10**9),
        multiplier=st.floats(1, 2),
    ),
    max_size=20,
)


@given(samples_strategy, st.sampled_from(["csv", "jsonl"]))
def test_round_trip(samples, fmt):
    assert loads_samples(dumps_samples(samples, fmt)) == samples


@given(samples_strategy)
def test_round_trip_with_truth(samples):
    samples = [MeasurementSample(**{**s.__dict__, "true_steal_us": 5, "true_guest_us": 7}) for s in samples]
    assert loads_samples(dumps_samples(samples, with_truth=True)) == samples


def test_csv_layout():
    text = dumps_samples([make_sample(10, 880_000, 430_000, 1.0)])
    header, row = text.splitlines()
    assert header.split(",") == list(SAMPLE_COLUMNS)
    assert row == "10,880000,1.0000,430000,450000,450000"


def test_jsonl_layout():
    line = dumps_samples([make_sample(10, 880_000, 430_000, 1.25)], "jsonl").strip()
    assert json.loads(line) == {"t_start_us": 10, "t_r_us": 880_000, "multiplier": 1.25,
                                "t_mg_us": 537_500, "steal_raw_us": 342_500, "steal_us": 342_500}


def test_writer_flushes_each_record():
    class Stream:
        def __init__(self):
            self.parts, self.flushes = [], 0

        def write(self, s):
            self.parts.append(s)

        def flush(self):
            self.flushes += 1

    stream = Stream()
    writer = SampleWriter(stream, "jsonl")
    for i in range(3):
        writer(make_sample(i, 10, 5, 1.0))
    assert stream.flushes == 3 and len(stream.parts) == 3


def test_unknown_format():
    with pytest.raises(ValidationError):
        SampleWriter(None, "xml")


def test_empty_and_malformed():
    assert loads_samples("") == []
    assert loads_samples(",".join(SAMPLE_COLUMNS) + "\n") == []
    with pytest.raises(ValidationError):
        loads_samples("t_start_us,t_r_us\n1,2\n")
    with pytest.raises(ValidationError):
        loads_samples(",".join(SAMPLE_COLUMNS) + "\n1,x,1,1,1,1\n")


def test_calibration_file_round_trip(tmp_path):
    spec = MicrobenchSpec(50, 10_000_000, 1, 1_200_000_000)
    result = CalibrationResult.from_trials(spec, [430_000, 425_000, 460_000])
    path = tmp_path / "cal.txt"
    write_calibration(path, result)
    assert "t_m_theoretical_us=416667" in path.read_text()
    assert read_calibration(path) == result


def test_calibration_file_missing_key(tmp_path):
    path = tmp_path / "cal.txt"
    path.write_text("inner_adds=50\n")
    with pytest.raises(ValidationError, match="iterations"):
        read_calibration(path)
