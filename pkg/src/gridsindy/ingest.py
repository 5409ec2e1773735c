"""Loading raw frequency recordings and cutting them into fixed-length chunks."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import BinaryIO, Iterator, NamedTuple

import numpy as np

from gridsindy.errors import DataError, EmptyInputError, FormatError

TWO_PI = 2.0 * math.pi
SECONDS_PER_DAY = 86400


class FrequencySample(NamedTuple):
    timestamp: int
    frequency: float


@dataclass(frozen=True)
class ColumnSpec:
    """Where to find the data in a CSV file.

    Timestamps may be integer epoch seconds or ISO-8601 strings.  Naive ISO
    strings are read as UTC; ``utc_offset`` (seconds) shifts the day
    boundary used for chunk alignment, e.g. 3600 for CET wall-clock chunks.
    """

    timestamp: str = "timestamp"
    frequency: str = "frequency"
    delimiter: str = ","
    utc_offset: int = 0


@dataclass
class SampleSeries:
    """Parsed measurements sorted by timestamp, with bookkeeping counts."""

    timestamps: np.ndarray
    frequency: np.ndarray
    rows_read: int = 0
    rows_dropped: int = 0
    duplicates: int = 0

    def __len__(self) -> int:
        return len(self.timestamps)

    def __iter__(self) -> Iterator[FrequencySample]:
        for t, f in zip(self.timestamps.tolist(), self.frequency.tolist()):
            yield FrequencySample(t, f)


@dataclass
class FrequencyChunk:
    """A contiguous, gap-free segment sampled every ``dt`` seconds."""

    chunk_id: str
    start: float
    frequency: np.ndarray
    f_ref: float
    dt: float = 1.0

    def __post_init__(self):
        self.frequency = np.asarray(self.frequency, dtype=float)
        if self.frequency.ndim != 1 or len(self.frequency) < 2:
            raise DataError(f"chunk {self.chunk_id}: need a 1-D series of length >= 2")
        if not np.all(np.isfinite(self.frequency)):
            raise DataError(f"chunk {self.chunk_id}: non-finite frequency values")
        if not (self.f_ref > 0 and self.dt > 0):
            raise DataError(f"chunk {self.chunk_id}: f_ref and dt must be positive")

    def __len__(self) -> int:
        return len(self.frequency)

    @property
    def timestamps(self) -> np.ndarray:
        return self.start + self.dt * np.arange(len(self.frequency))


@dataclass
class AngularSeries:
    omega: np.ndarray
    dt: float = 1.0
    chunk_id: str = ""
    f_ref: float = 50.0


@dataclass
class IngestSummary:
    rows_read: int
    rows_dropped: int
    chunks_emitted: int
    chunks_skipped: int
    duplicates: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_dropped": self.rows_dropped,
            "chunks_emitted": self.chunks_emitted,
            "chunks_skipped": self.chunks_skipped,
        }


def _parse_timestamp(text: str) -> int | None:
    text = text.strip()
    if not text:
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        value = None
    if value is not None:
        if math.isfinite(value) and value == int(value):
            return int(value)
        return None
    if text[-1] in "zZ":
        text = text[:-1] + "+00:00"
    try:
        stamp = datetime.fromisoformat(text)
    except ValueError:
        return None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    seconds = stamp.timestamp()
    return int(seconds) if seconds == int(seconds) else None


def _parse_frequency(text: str) -> float | None:
    try:
        value = float(text)
    except (TypeError, ValueError):
        return None
    return value if math.isfinite(value) else None


def parse_frequency_csv(source: BinaryIO | bytes | str | os.PathLike,
                        spec: ColumnSpec | None = None) -> SampleSeries:
    """Parse a UTF-8 CSV with a header row into timestamp-sorted samples.

    Rows whose timestamp or frequency cannot be parsed (blank cells, NaN,
    text) are dropped and counted.  Repeated timestamps keep the first
    occurrence in file order.
    """
    spec = spec or ColumnSpec()
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return parse_frequency_csv(fh, spec)
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    text = io.TextIOWrapper(source, encoding="utf-8-sig", newline="")
    try:
        reader = csv.reader(text, delimiter=spec.delimiter)
        header = next(reader, None)
        if header is None:
            raise FormatError("empty input: no header row")
        header = [h.strip() for h in header]
        try:
            it = header.index(spec.timestamp)
            jf = header.index(spec.frequency)
        except ValueError:
            raise FormatError(
                f"header {header!r} lacks columns {spec.timestamp!r} and {spec.frequency!r}"
            ) from None
        stamps, freqs = [], []
        rows_read = dropped = 0
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            rows_read += 1
            if len(row) <= max(it, jf):
                dropped += 1
                continue
            ts = _parse_timestamp(row[it])
            f = _parse_frequency(row[jf])
            if ts is None or f is None:
                dropped += 1
                continue
            stamps.append(ts)
            freqs.append(f)
    finally:
        text.detach()
    if not stamps:
        raise EmptyInputError(f"no valid rows among {rows_read} read")
    ts_arr = np.asarray(stamps, dtype=np.int64)
    f_arr = np.asarray(freqs, dtype=float)
    order = np.argsort(ts_arr, kind="stable")
    ts_arr, f_arr = ts_arr[order], f_arr[order]
    keep = np.ones(len(ts_arr), dtype=bool)
    keep[1:] = ts_arr[1:] != ts_arr[:-1]
    duplicates = int(len(keep) - keep.sum())
    return SampleSeries(ts_arr[keep], f_arr[keep], rows_read=rows_read,
                        rows_dropped=dropped, duplicates=duplicates)


def _chunk_label(start: int, utc_offset: int) -> str:
    stamp = datetime(1970, 1, 1) + timedelta(seconds=int(start) + utc_offset)
    return stamp.strftime("%Y-%m-%dT%H:%M:%S")


def segment_chunks(samples: SampleSeries, chunk_len: int = 900, f_ref: float = 50.0,
                   utc_offset: int = 0) -> tuple[list[FrequencyChunk], int]:
    """Cut sorted 1 Hz samples into complete, aligned windows.

    Windows start at multiples of ``chunk_len`` seconds after midnight of the
    first sample's day.  A window is emitted only if every one of its
    ``chunk_len`` seconds is present.  Returns ``(chunks, n_skipped)`` where
    ``n_skipped`` counts windows that held some, but not all, samples.
    """
    if chunk_len < 2:
        raise DataError("chunk_len must be >= 2")
    ts = np.asarray(samples.timestamps, dtype=np.int64)
    freq = np.asarray(samples.frequency, dtype=float)
    if len(ts) == 0:
        return [], 0
    if np.any(np.diff(ts) <= 0):
        raise DataError("samples must be strictly increasing in time")
    day_start = ((int(ts[0]) + utc_offset) // SECONDS_PER_DAY) * SECONDS_PER_DAY - utc_offset
    window = (ts - day_start) // chunk_len
    bounds = np.flatnonzero(np.diff(window)) + 1
    starts = np.concatenate(([0], bounds))
    stops = np.concatenate((bounds, [len(ts)]))
    chunks, skipped = [], 0
    for lo, hi in zip(starts, stops):
        if hi - lo != chunk_len:
            skipped += 1
            continue
        seg_ts = ts[lo:hi]
        # unique sorted stamps inside one window: full count means no gaps
        assert seg_ts[-1] - seg_ts[0] == chunk_len - 1
        start = int(day_start + window[lo] * chunk_len)
        chunks.append(FrequencyChunk(_chunk_label(start, utc_offset), float(start),
                                     freq[lo:hi].copy(), f_ref, 1.0))
    return chunks, skipped


def to_angular(chunk: FrequencyChunk) -> AngularSeries:
    omega = TWO_PI * (chunk.frequency - chunk.f_ref)
    return AngularSeries(omega, chunk.dt, chunk.chunk_id, chunk.f_ref)


def to_frequency(omega: np.ndarray, f_ref: float) -> np.ndarray:
    return f_ref + np.asarray(omega, dtype=float) / TWO_PI


def ingest(source, spec: ColumnSpec | None = None, chunk_len: int = 900,
           f_ref: float = 50.0) -> tuple[list[FrequencyChunk], IngestSummary]:
    """Parse and segment in one step."""
    spec = spec or ColumnSpec()
    series = parse_frequency_csv(source, spec)
    chunks, skipped = segment_chunks(series, chunk_len, f_ref, spec.utc_offset)
    summary = IngestSummary(series.rows_read, series.rows_dropped, len(chunks), skipped,
                            series.duplicates)
    return chunks, summary


# -- chunk store ------------------------------------------------------------

STORE_META = "store.json"
STORE_DATA = "chunks.csv"


def write_chunk_store(directory, chunks: list[FrequencyChunk]) -> None:
    """Write chunks as ``chunks.csv`` (long format) plus ``store.json``."""
    os.makedirs(directory, exist_ok=True)
    meta = {
        "n_chunks": len(chunks),
        "chunks": [
            {"chunk_id": c.chunk_id, "start": c.start, "f_ref": c.f_ref, "dt": c.dt,
             "length": len(c)}
            for c in chunks
        ],
    }
    with open(os.path.join(directory, STORE_DATA), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["chunk_id", "index", "frequency"])
        for c in chunks:
            for i, f in enumerate(c.frequency.tolist()):
                writer.writerow([c.chunk_id, i, repr(f)])
    with open(os.path.join(directory, STORE_META), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_chunk_store(directory) -> list[FrequencyChunk]:
    meta_path = os.path.join(directory, STORE_META)
    data_path = os.path.join(directory, STORE_DATA)
    if not (os.path.exists(meta_path) and os.path.exists(data_path)):
        raise DataError(f"{directory} is not a chunk store")
    with open(meta_path) as fh:
        meta = json.load(fh)
    values: dict[str, list[float]] = {m["chunk_id"]: [] for m in meta["chunks"]}
    with open(data_path, newline="") as fh:
        for row in csv.DictReader(fh):
            values[row["chunk_id"]].append(float(row["frequency"]))
    chunks = []
    for m in meta["chunks"]:
        freq = values[m["chunk_id"]]
        if len(freq) != m["length"]:
            raise DataError(f"chunk {m['chunk_id']}: expected {m['length']} samples")
        chunks.append(FrequencyChunk(m["chunk_id"], m["start"], np.array(freq), m["f_ref"],
                                     m["dt"]))
    return chunks
