"""Tests for dataset ingestion and report files."""
import io

import numpy as np
import pytest

from app.api.models.common import SpectralDensity
from app.api.models.detection import AlarmRecord, GroundTruthEvent
from app.api.services import dataset_io
from app.api.services.synth import generate, preset
from app.core.errors import DataIOError, DataParseError, MissingDataError
from tests.conftest import make_set


def _dataset_text():
    return (
        "channel,2020-01-01T00:00:00,2020-01-01T00:00:01,2020-01-01T00:00:02\n"
        "bus1,1.00,1.01,0.99\n"
        "bus2,0.98,0.97,0.99\n"
    )


def test_read_dataset_from_text():
    data = dataset_io.read_dataset(io.StringIO(_dataset_text()))
    assert data.channels == ["bus1", "bus2"]
    assert data.values.shape == (2, 3)
    assert data.values[1, 2] == pytest.approx(0.99)
    assert data.timestamps[2].isoformat() == "2020-01-01T00:00:02"


def test_dataset_file_round_trip(tmp_path):
    data = generate(preset("null", seed=1, n_samples=50))
    path = tmp_path / "data.csv"
    dataset_io.write_dataset(data, path)
    loaded = dataset_io.read_dataset(path)
    assert loaded.channels == data.channels
    np.testing.assert_array_equal(loaded.timestamps, data.timestamps)
    np.testing.assert_allclose(loaded.values, data.values, rtol=1e-12)


def test_read_dataset_bytes():
    data = dataset_io.read_dataset_bytes(_dataset_text().encode())
    assert data.n_channels == 2
    with pytest.raises(DataParseError):
        dataset_io.read_dataset_bytes(b"  \n")


def test_read_dataset_missing_file(tmp_path):
    with pytest.raises(DataIOError):
        dataset_io.read_dataset(tmp_path / "absent.csv")


def test_read_dataset_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(DataParseError):
        dataset_io.read_dataset(path)


def test_read_dataset_missing_value():
    text = _dataset_text().replace("1.01", "")
    with pytest.raises(MissingDataError):
        dataset_io.read_dataset(io.StringIO(text))


def test_read_dataset_non_numeric_value():
    text = _dataset_text().replace("1.01", "high")
    with pytest.raises(DataParseError):
        dataset_io.read_dataset(io.StringIO(text))


def test_read_dataset_bad_header():
    text = _dataset_text().replace("2020-01-01T00:00:01", "yesterday")
    with pytest.raises(DataParseError):
        dataset_io.read_dataset(io.StringIO(text))


def test_read_dataset_header_only():
    with pytest.raises(DataParseError):
        dataset_io.read_dataset(io.StringIO("channel,2020-01-01T00:00:00\n"))


def test_alarm_and_truth_round_trip(tmp_path):
    alarm = AlarmRecord.model_validate(AlarmRecord.model_config["json_schema_extra"]["example"])
    dataset_io.write_alarms([alarm, alarm], tmp_path / "alarms.jsonl")
    assert dataset_io.read_alarms(tmp_path / "alarms.jsonl") == [alarm, alarm]

    dataset_io.write_truth([{"onset": 500, "end": None, "label": "step@20:500:-0.02"}], tmp_path / "truth.jsonl")
    assert dataset_io.read_truth(tmp_path / "truth.jsonl") == [
        GroundTruthEvent(onset=500, label="step@20:500:-0.02")
    ]


def test_read_jsonl_reports_bad_line(tmp_path):
    path = tmp_path / "truth.jsonl"
    path.write_text('{"onset": 1}\n\n{"onset": -4}\n')
    with pytest.raises(DataParseError, match="line 3"):
        dataset_io.read_truth(path)


def test_density_table(tmp_path):
    density = SpectralDensity(bin_edges=[0.0, 1.0, 2.0], mass=[0.25, 0.75])
    dataset_io.write_density(density, tmp_path / "density.csv")
    frame = dataset_io.read_density(tmp_path / "density.csv")
    assert list(frame["bin_center"]) == [0.5, 1.5]
    assert list(frame["mass"]) == [0.25, 0.75]


def test_read_table_checks_columns(tmp_path):
    path = tmp_path / "table.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(DataParseError):
        dataset_io.read_table(path, ["a", "mass"])


def test_write_to_missing_directory(tmp_path):
    data = make_set(np.arange(6.0).reshape(2, 3))
    with pytest.raises(DataIOError):
        dataset_io.write_dataset(data, tmp_path / "no" / "such" / "dir.csv")
