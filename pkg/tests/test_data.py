import io
from datetime import date

import numpy as np
import pytest

from solarfault.data import (
    DatasetSplit,
    DayLabel,
    Schema,
    assemble_days,
    label_day,
    parse_system_csv,
    split_dataset,
)
from solarfault.errors import (
    OrderingError,
    ParseError,
    SchemaError,
    SplitError,
    UnknownSystemError,
)

SCHEMA = Schema(channels=("a", "b"), statuses=("merk", "sto"))


def csv_text(rows):
    header = "timestamp,system_id,a,b,merk,sto"
    return "\n".join([header] + rows) + "\n"


def row(ts, a=1.0, b=2.0, merk=0, sto=0, sid="s1"):
    return f"{ts},{sid},{a},{b},{merk},{sto}"


def minutes(start_day, n, **kw):
    out = []
    for i in range(n):
        day_off, rem = divmod(i, 1440)
        h, m = divmod(rem, 60)
        d = date.fromordinal(date.fromisoformat(start_day).toordinal() + day_off)
        out.append(row(f"{d.isoformat()}T{h:02d}:{m:02d}", a=float(i), **kw))
    return out


def test_minimal_parse():
    rec = parse_system_csv(io.StringIO(csv_text(minutes("2022-01-01", 2))), SCHEMA)
    assert rec.system_id == "s1"
    assert rec.values.shape == (2, 2)
    assert rec.values[1, 0] == 1.0


def test_duplicate_minute_rejected():
    rows = [row("2022-01-01T00:00"), row("2022-01-01T00:00")]
    with pytest.raises(OrderingError, match="2022-01-01T00:00"):
        parse_system_csv(io.StringIO(csv_text(rows)), SCHEMA)


def test_backwards_timestamp_rejected():
    rows = [row("2022-01-01T00:05"), row("2022-01-01T00:01")]
    with pytest.raises(OrderingError, match="non-monotone"):
        parse_system_csv(io.StringIO(csv_text(rows)), SCHEMA)


def test_malformed_row_reports_line_number():
    rows = [row("2022-01-01T00:00"), "2022-01-01T00:01,s1,not-a-number,2,0,0"]
    with pytest.raises(ParseError, match="line 3"):
        parse_system_csv(io.StringIO(csv_text(rows)), SCHEMA)


def test_unknown_column_rejected():
    text = "timestamp,system_id,a,b,extra,merk,sto\n2022-01-01T00:00,s1,1,2,9,0,0\n"
    with pytest.raises(SchemaError, match="extra"):
        parse_system_csv(io.StringIO(text), SCHEMA)


def test_missing_column_rejected():
    text = "timestamp,system_id,a,merk,sto\n"
    with pytest.raises(SchemaError, match="'b'"):
        parse_system_csv(io.StringIO(text), SCHEMA)


def test_byte_stream_accepted():
    rec = parse_system_csv(csv_text(minutes("2022-01-01", 2)).encode(), SCHEMA)
    assert len(rec.timestamps) == 2


def test_two_full_days_span_two_calendar_days():
    rec = parse_system_csv(io.StringIO(csv_text(minutes("2022-01-01", 2880))), SCHEMA)
    # oracle: count rows per calendar day directly from the parsed record
    per_day = {}
    for ts in rec.timestamps:
        per_day[ts.date()] = per_day.get(ts.date(), 0) + 1
    assert per_day == {date(2022, 1, 1): 1440, date(2022, 1, 2): 1440}


def test_assemble_two_full_days():
    rec = parse_system_csv(io.StringIO(csv_text(minutes("2022-01-01", 2880))), SCHEMA)
    result = assemble_days(rec)
    assert len(result.days) == 2
    assert result.days_dropped == 0
    assert result.days[0].day == date(2022, 1, 1)


def test_assemble_incomplete_day_dropped():
    rec = parse_system_csv(io.StringIO(csv_text(minutes("2022-01-01", 1439))), SCHEMA)
    result = assemble_days(rec)
    assert result.days == []
    assert result.days_dropped == 1


def test_assemble_gap_mid_day_dropped():
    rows = minutes("2022-01-01", 1441)
    del rows[600]  # 1440 remaining minutes but one is missing mid-day
    rec = parse_system_csv(io.StringIO(csv_text(rows)), SCHEMA)
    result = assemble_days(rec)
    assert result.days == []
    assert result.days_dropped == 2  # the gapped day and the 1-minute overflow day


def test_assembly_lossless_for_complete_days():
    rec = parse_system_csv(io.StringIO(csv_text(minutes("2022-01-01", 2880))), SCHEMA)
    result = assemble_days(rec)
    stacked = np.concatenate([d.values for d in result.days], axis=0)
    np.testing.assert_array_equal(stacked, rec.values)


def status_block(merk=(), sto=()):
    s = np.zeros((1440, 2), dtype=np.int64)
    for i in merk:
        s[i, 0] = 1
    for i in sto:
        s[i, 1] = 1
    return s


def test_label_all_zero_is_normal():
    assert label_day(status_block(), ("merk", "sto")) is DayLabel.NORMAL


def test_label_single_fault_minute_wins():
    assert label_day(status_block(sto=[700]), ("merk", "sto")) is DayLabel.FAULT
    assert label_day(status_block(merk=range(1440), sto=[0]), ("merk", "sto")) is DayLabel.FAULT


def test_label_merk_only():
    assert label_day(status_block(merk=[3]), ("merk", "sto")) is DayLabel.MERK


def test_label_missing_status_channel():
    with pytest.raises(SchemaError):
        label_day(status_block(), ("merk", "other"))


def test_label_order_insensitive(rng):
    s = status_block(merk=[5, 100], sto=[])
    shuffled = s[rng.permutation(1440)]
    assert label_day(s, ("merk", "sto")) == label_day(shuffled, ("merk", "sto"))


def _days_with_labels(sid, labels):
    from helpers import make_day

    out = []
    for i, lab in enumerate(labels):
        d = make_day(np.zeros((1440, 2)), system_id=sid, day=date(2022, 1, 1 + i),
                     label=lab)
        out.append(d)
    return out


def test_split_filters_training_labels():
    days = {
        "t1": _days_with_labels("t1", [DayLabel.NORMAL] * 3 + [DayLabel.FAULT]),
        "x1": _days_with_labels("x1", [DayLabel.NORMAL, DayLabel.FAULT, DayLabel.MERK]),
    }
    split = DatasetSplit(train=frozenset({"t1"}), validation=frozenset(),
                         test=frozenset({"x1"}))
    out = split_dataset(days, split)
    assert len(out.train) == 3
    assert all(d.label is DayLabel.NORMAL for d in out.train)
    assert len(out.test) == 3  # test keeps every label


def test_split_overlap_rejected():
    with pytest.raises(SplitError):
        DatasetSplit(train=frozenset({"a"}), validation=frozenset(),
                     test=frozenset({"a"}))


def test_split_unknown_system_rejected():
    split = DatasetSplit(train=frozenset({"ghost"}), validation=frozenset(),
                         test=frozenset())
    with pytest.raises(UnknownSystemError):
        split_dataset({}, split)


def test_partition_is_exclusive():
    days = {
        "a": _days_with_labels("a", [DayLabel.NORMAL]),
        "b": _days_with_labels("b", [DayLabel.NORMAL]),
        "c": _days_with_labels("c", [DayLabel.NORMAL]),
    }
    split = DatasetSplit(train=frozenset({"a"}), validation=frozenset({"b"}),
                         test=frozenset({"c"}))
    out = split_dataset(days, split)
    ids = [(d.system_id, d.day) for part in (out.train, out.validation, out.test)
           for d in part]
    assert len(ids) == len(set(ids))


def test_schema_file_round_trip(tmp_path):
    p = tmp_path / "schema.txt"
    p.write_text("# comment\nchannel T1 znorm\nchannel VF minmax smooth\n"
                 "status merk merk\nstatus sto fault\n")
    schema = Schema.from_file(p)
    assert schema.channels == ("T1", "VF")
    assert schema.znorm_channels == ("T1",)
    assert schema.smooth_channels == ("VF",)
    assert schema.fault_status == "sto"


def test_schema_file_bad_kind(tmp_path):
    p = tmp_path / "schema.txt"
    p.write_text("channel T1 weird\n")
    with pytest.raises(SchemaError):
        Schema.from_file(p)
