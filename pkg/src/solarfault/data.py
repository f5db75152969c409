"""Ingestion of per-system sensor CSVs into complete day traces.

A system file has one row per minute with an ISO-8601 timestamp, the
system id, the sensor/control channels and the integer status flags.
Days are midnight-to-midnight in the timestamps as given; any day with
a missing minute is dropped (and counted), never imputed.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    OrderingError,
    ParseError,
    SchemaError,
    SplitError,
    UnknownSystemError,
)

MINUTES_PER_DAY = 1440


class DayLabel(Enum):
    NORMAL = "normal"
    MERK = "merk"
    FAULT = "fault"


@dataclass(frozen=True)
class Schema:
    """Names of the model channels and status columns.

    ``fault_status`` / ``merk_status`` name the status columns whose
    non-zero values mark a fault or a potential anomaly.
    """

    channels: tuple[str, ...]
    statuses: tuple[str, ...]
    fault_status: str = "sto"
    merk_status: str = "merk"
    znorm_channels: tuple[str, ...] = ()
    smooth_channels: tuple[str, ...] = ()

    @classmethod
    def from_file(cls, path) -> "Schema":
        """Parse the plain-text schema file.

        Lines are whitespace-delimited: ``channel NAME KIND [smooth]``
        with KIND in {znorm, minmax}, or ``status NAME [fault|merk]``.
        Blank lines and ``#`` comments are ignored.
        """
        channels, statuses, znorm, smooth = [], [], [], []
        fault_status, merk_status = "sto", "merk"
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "channel" and len(parts) >= 3:
                name, kind = parts[1], parts[2]
                if kind not in ("znorm", "minmax"):
                    raise SchemaError(f"{path}:{lineno}: unknown channel kind {kind!r}")
                channels.append(name)
                if kind == "znorm":
                    znorm.append(name)
                if "smooth" in parts[3:]:
                    smooth.append(name)
            elif parts[0] == "status" and len(parts) >= 2:
                statuses.append(parts[1])
                if "fault" in parts[2:]:
                    fault_status = parts[1]
                if "merk" in parts[2:]:
                    merk_status = parts[1]
            else:
                raise SchemaError(f"{path}:{lineno}: cannot parse {raw!r}")
        if not channels:
            raise SchemaError(f"{path}: no channels declared")
        return cls(
            channels=tuple(channels),
            statuses=tuple(statuses),
            fault_status=fault_status,
            merk_status=merk_status,
            znorm_channels=tuple(znorm),
            smooth_channels=tuple(smooth),
        )


@dataclass
class SystemRecord:
    """Time-ordered per-minute rows of one system."""

    system_id: str
    timestamps: list[datetime]
    channel_names: tuple[str, ...]
    status_names: tuple[str, ...]
    values: np.ndarray  # (n_rows, n_channels) float64
    statuses: np.ndarray  # (n_rows, n_statuses) int64


@dataclass
class DayTrace:
    """One complete system-day: 1440 minutes of channel values and flags."""

    system_id: str
    day: date
    channel_names: tuple[str, ...]
    values: np.ndarray  # (1440, F)
    statuses: np.ndarray  # (1440, n_statuses)
    label: DayLabel

    def __post_init__(self):
        if self.values.shape[0] != MINUTES_PER_DAY:
            raise SchemaError(
                f"day trace must have {MINUTES_PER_DAY} rows, got {self.values.shape[0]}"
            )


@dataclass
class AssemblyResult:
    days: list[DayTrace]
    days_dropped: int


@dataclass(frozen=True)
class DatasetSplit:
    train: frozenset[str]
    validation: frozenset[str]
    test: frozenset[str]

    def __post_init__(self):
        overlap = (self.train & self.validation) | (self.train & self.test) | (
            self.validation & self.test
        )
        if overlap:
            raise SplitError(f"systems in more than one split: {sorted(overlap)}")


@dataclass
class SplitDays:
    """Day collections after applying a split; train/validation hold only
    Normal days, test keeps everything."""

    train: list[DayTrace] = field(default_factory=list)
    validation: list[DayTrace] = field(default_factory=list)
    test: list[DayTrace] = field(default_factory=list)


def parse_system_csv(source, schema: Schema) -> SystemRecord:
    """Parse one system's CSV into a validated, time-ordered record.

    ``source`` may be a path, a text stream, or a byte stream. The header
    must name ``timestamp``, ``system_id`` and every schema column.
    Duplicate or backwards timestamps are rejected.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", newline="") as fh:
            return parse_system_csv(fh, schema)
    if isinstance(source, (bytes, bytearray)):
        source = io.StringIO(source.decode("utf-8"))
    elif hasattr(source, "read") and isinstance(source.read(0), bytes):
        source = io.TextIOWrapper(source, encoding="utf-8")

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file")
    header = [h.strip() for h in header]
    required = ["timestamp", "system_id", *schema.channels, *schema.statuses]
    for name in required:
        if name not in header:
            raise SchemaError(f"missing column {name!r}")
    known = set(required)
    unknown = [h for h in header if h not in known]
    if unknown:
        raise SchemaError(f"unknown columns {unknown!r}")
    col = {name: header.index(name) for name in header}

    timestamps: list[datetime] = []
    values_rows: list[list[float]] = []
    status_rows: list[list[int]] = []
    system_id = None
    prev_ts = None
    for lineno, row in enumerate(reader, 2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        try:
            ts = datetime.fromisoformat(row[col["timestamp"]])
            vals = [float(row[col[c]]) for c in schema.channels]
            stats = [int(row[col[s]]) for s in schema.statuses]
        except ValueError as exc:
            raise ParseError(str(exc), lineno)
        if ts.second or ts.microsecond:
            raise ParseError(f"timestamp {ts.isoformat()} not at minute resolution", lineno)
        sid = row[col["system_id"]]
        if system_id is None:
            system_id = sid
        elif sid != system_id:
            raise ParseError(f"mixed system ids {system_id!r} and {sid!r}", lineno)
        if prev_ts is not None and ts <= prev_ts:
            kind = "duplicate" if ts == prev_ts else "non-monotone"
            raise OrderingError(f"{kind} timestamp {ts.isoformat()} at line {lineno}")
        prev_ts = ts
        timestamps.append(ts)
        values_rows.append(vals)
        status_rows.append(stats)

    if system_id is None:
        raise ParseError("no data rows")
    return SystemRecord(
        system_id=system_id,
        timestamps=timestamps,
        channel_names=schema.channels,
        status_names=schema.statuses,
        values=np.asarray(values_rows, dtype=np.float64),
        statuses=np.asarray(status_rows, dtype=np.int64),
    )


def label_day(statuses: np.ndarray, status_names, fault_status="sto", merk_status="merk") -> DayLabel:
    """Fault beats Merk beats Normal; any single flagged minute counts."""
    if statuses.shape[0] != MINUTES_PER_DAY:
        raise SchemaError(f"expected {MINUTES_PER_DAY} status rows, got {statuses.shape[0]}")
    names = list(status_names)
    if fault_status not in names:
        raise SchemaError(f"missing status channel {fault_status!r}")
    if merk_status not in names:
        raise SchemaError(f"missing status channel {merk_status!r}")
    if np.any(statuses[:, names.index(fault_status)] != 0):
        return DayLabel.FAULT
    if np.any(statuses[:, names.index(merk_status)] != 0):
        return DayLabel.MERK
    return DayLabel.NORMAL


def assemble_days(record: SystemRecord, fault_status="sto", merk_status="merk") -> AssemblyResult:
    """Group rows by calendar day, keeping only days with all 1440 minutes."""
    by_day: dict[date, list[int]] = {}
    for idx, ts in enumerate(record.timestamps):
        by_day.setdefault(ts.date(), []).append(idx)

    days: list[DayTrace] = []
    dropped = 0
    for day in sorted(by_day):
        idxs = by_day[day]
        if len(idxs) != MINUTES_PER_DAY:
            dropped += 1
            continue
        # timestamps are strictly increasing, so 1440 rows in one calendar
        # day are exactly the minutes 00:00..23:59
        sl = np.asarray(idxs)
        statuses = record.statuses[sl]
        days.append(
            DayTrace(
                system_id=record.system_id,
                day=day,
                channel_names=record.channel_names,
                values=record.values[sl].copy(),
                statuses=statuses.copy(),
                label=label_day(statuses, record.status_names, fault_status, merk_status),
            )
        )
    return AssemblyResult(days=days, days_dropped=dropped)


def split_dataset(days_by_system: dict[str, list[DayTrace]], split: DatasetSplit) -> SplitDays:
    """Partition day collections along systems.

    Train and validation keep only Normal days; test keeps every day.
    """
    referenced = split.train | split.validation | split.test
    missing = referenced - set(days_by_system)
    if missing:
        raise UnknownSystemError(f"unknown system ids: {sorted(missing)}")

    out = SplitDays()
    for sid in sorted(days_by_system):
        days = days_by_system[sid]
        if sid in split.train:
            out.train.extend(d for d in days if d.label is DayLabel.NORMAL)
        elif sid in split.validation:
            out.validation.extend(d for d in days if d.label is DayLabel.NORMAL)
        elif sid in split.test:
            out.test.extend(days)
    return out


def write_ingestion_report(path, rows):
    """rows: iterable of (system_id, days_kept, days_dropped)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["system_id", "days_kept", "days_dropped"])
        for sid, kept, droppedn in rows:
            writer.writerow([sid, kept, droppedn])


def load_directory(data_dir, schema: Schema):
    """Parse every ``*.csv`` system file in a directory.

    Returns (days_by_system, report_rows). The ground-truth label file
    emitted by the synthetic generator (``labels.csv``) is skipped.
    """
    days_by_system: dict[str, list[DayTrace]] = {}
    report = []
    for path in sorted(Path(data_dir).glob("*.csv")):
        if path.name in ("labels.csv", "ingestion_report.csv"):
            continue
        record = parse_system_csv(path, schema)
        result = assemble_days(record, schema.fault_status, schema.merk_status)
        days_by_system.setdefault(record.system_id, []).extend(result.days)
        report.append((record.system_id, len(result.days), result.days_dropped))
    return days_by_system, report
