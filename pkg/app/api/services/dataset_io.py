"""
app/api/services/dataset_io.py
Dataset ingestion and report emission: channel x timestamp CSV, indicator CSV,
alarm and ground-truth JSON lines, density CSV and JSON reports
"""

import io
import json
import logging
from pathlib import Path
from typing import IO, Iterable, List, Type, TypeVar, Union

import pandas as pd
from pydantic import BaseModel, ValidationError

from app.api.models.common import SpectralDensity, TimeSeriesSet
from app.api.models.detection import AlarmRecord, GroundTruthEvent, IndicatorSeries
from app.api.models.estimation import FitReport
from app.core.errors import DataIOError, DataParseError

logger = logging.getLogger(__name__)

PathOrBuffer = Union[str, Path, IO]
ModelT = TypeVar("ModelT", bound=BaseModel)

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S.%f"


def _open_error(path: PathOrBuffer, exc: OSError) -> DataIOError:
    return DataIOError(f"cannot access {path}: {exc.strerror or exc}")


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

def read_dataset(source: PathOrBuffer) -> TimeSeriesSet:
    """First column channel id, header row of ISO-8601 timestamps, numeric body."""
    try:
        frame = pd.read_csv(source, index_col=0)
    except OSError as exc:
        raise _open_error(source, exc) from exc
    except pd.errors.EmptyDataError as exc:
        raise DataParseError(f"{source} is empty") from exc
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataParseError(f"malformed CSV {source}: {exc}") from exc

    if frame.empty or frame.shape[1] == 0:
        raise DataParseError(f"{source} holds no samples")
    try:
        timestamps = pd.to_datetime(list(frame.columns), format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise DataParseError(f"header of {source} is not a row of ISO-8601 timestamps: {exc}") from exc
    try:
        values = frame.apply(pd.to_numeric, errors="raise").to_numpy(dtype=float)
    except (ValueError, TypeError) as exc:
        raise DataParseError(f"non-numeric sample in {source}: {exc}") from exc

    data = TimeSeriesSet(
        channels=[str(ch) for ch in frame.index],
        timestamps=timestamps,
        values=values,
    )
    logger.info(f"Loaded {data.n_channels} channels x {data.n_samples} samples from {source}")
    return data


def read_dataset_bytes(content: bytes, name: str = "upload") -> TimeSeriesSet:
    if not content or not content.strip():
        raise DataParseError(f"{name} is empty")
    return read_dataset(io.BytesIO(content))


def dataset_frame(data: TimeSeriesSet) -> pd.DataFrame:
    frame = pd.DataFrame(data.values, index=data.channels, columns=data.timestamps.strftime(TIMESTAMP_FORMAT))
    frame.index.name = "channel"
    return frame


def write_dataset(data: TimeSeriesSet, path: PathOrBuffer) -> None:
    _write_frame(dataset_frame(data), path, index=True)


# ---------------------------------------------------------------------------
# Indicator curves and densities
# ---------------------------------------------------------------------------

def write_indicators(series: IndicatorSeries, path: PathOrBuffer, top_k: int = None) -> None:
    _write_frame(series.to_frame(top_k), path)


def write_eta(series: IndicatorSeries, path: PathOrBuffer) -> None:
    _write_frame(series.eta_frame(), path)


def write_density(density: SpectralDensity, path: PathOrBuffer) -> None:
    _write_frame(density.to_frame(), path)


def read_table(source: PathOrBuffer, required: Iterable[str] = ()) -> pd.DataFrame:
    """Flat CSV written by this module; required columns are checked."""
    try:
        frame = pd.read_csv(source)
    except OSError as exc:
        raise _open_error(source, exc) from exc
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise DataParseError(f"cannot parse {source}: {exc}") from exc
    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise DataParseError(f"{source} lacks columns {missing}")
    return frame


def read_indicators(source: PathOrBuffer) -> pd.DataFrame:
    frame = read_table(source, ["time", "end_index", "p_hat", "b_hat", "n_phi"])
    frame["time"] = pd.to_datetime(frame["time"])
    return frame


def read_density(source: PathOrBuffer) -> pd.DataFrame:
    return read_table(source, ["bin_center", "mass"])


def _write_frame(frame: pd.DataFrame, path: PathOrBuffer, index: bool = False) -> None:
    try:
        frame.to_csv(path, index=index)
    except OSError as exc:
        raise _open_error(path, exc) from exc


# ---------------------------------------------------------------------------
# JSON lines and JSON reports
# ---------------------------------------------------------------------------

def write_jsonl(records: Iterable[BaseModel], path: PathOrBuffer) -> None:
    text = "".join(record.model_dump_json() + "\n" for record in records)
    _write_text(text, path)


def read_jsonl(source: PathOrBuffer, model: Type[ModelT]) -> List[ModelT]:
    records: List[ModelT] = []
    for number, line in enumerate(_read_text(source).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(model.model_validate_json(line))
        except ValidationError as exc:
            raise DataParseError(f"{source}, line {number}: {exc.errors()[0]['msg']}") from exc
    return records


def write_alarms(alarms: Iterable[AlarmRecord], path: PathOrBuffer) -> None:
    write_jsonl(alarms, path)


def read_alarms(source: PathOrBuffer) -> List[AlarmRecord]:
    return read_jsonl(source, AlarmRecord)


def write_truth(events: Iterable[Union[GroundTruthEvent, dict]], path: PathOrBuffer) -> None:
    write_jsonl((GroundTruthEvent.model_validate(e) for e in events), path)


def read_truth(source: PathOrBuffer) -> List[GroundTruthEvent]:
    return read_jsonl(source, GroundTruthEvent)


def write_report(report: BaseModel, path: PathOrBuffer) -> None:
    _write_text(report.model_dump_json(indent=2) + "\n", path)


def read_fit_report(source: PathOrBuffer) -> FitReport:
    try:
        return FitReport.model_validate(json.loads(_read_text(source)))
    except (json.JSONDecodeError, ValidationError) as exc:
        raise DataParseError(f"cannot parse fit report {source}: {exc}") from exc


def _write_text(text: str, path: PathOrBuffer) -> None:
    if hasattr(path, "write"):
        path.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise _open_error(path, exc) from exc


def _read_text(source: PathOrBuffer) -> str:
    if hasattr(source, "read"):
        return source.read()
    try:
        return Path(source).read_text(encoding="utf-8")
    except OSError as exc:
        raise _open_error(source, exc) from exc
