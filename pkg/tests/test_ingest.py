import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from golden_streams import GOLDEN, recording
from penrt.dataset import IndicatorVector, pair_subset, select_features
from penrt.errors import (
    DuplicateSubject,
    EmptyTask,
    MalformedRow,
    NonMonotonicTime,
    UnknownLabel,
)
from penrt.ingest import (
    SubjectRecording,
    build_duration_dataset,
    extract_duration,
    parse_recording,
    serialize_recording,
)

HEAD = "# subject: S001\n# label: HC\ntask,t_ms,x,y,pressure,azimuth,altitude\n"


def test_parse_minimal_file():
    text = HEAD + "1,0,1.0,2.0,0.0,45.0,60.0\n1,10,1.5,2.5,0.5,45.0,60.0\n1,20,2.0,3.0,0.0,45.0,60.0\n"
    rec = parse_recording(text)
    assert rec.subject_id == "S001" and rec.label == "HC"
    assert list(rec.tasks) == [1]
    assert len(rec.tasks[1]) == 3
    assert rec.tasks[1].pressure.tolist() == [0.0, 0.5, 0.0]


def test_header_row_is_optional():
    text = "# subject: S9\n# label: ES-AD\n2,5,0,0,1,0,0\n"
    assert len(parse_recording(text).tasks[2]) == 1


def test_duplicate_timestamp_rejected():
    text = HEAD + "1,10,0,0,0.5,0,0\n1,10,0,0,0.5,0,0\n"
    with pytest.raises(NonMonotonicTime):
        parse_recording(text)


def test_all_zero_pressure_task_rejected():
    text = HEAD + "1,0,0,0,0.5,0,0\n3,0,0,0,0,0,0\n3,5,0,0,0,0,0\n"
    with pytest.raises(EmptyTask):
        parse_recording(text)


def test_unknown_label():
    with pytest.raises(UnknownLabel):
        parse_recording("# subject: S\n# label: MCI\n1,0,0,0,1,0,0\n")


@pytest.mark.parametrize(
    "row", ["1,0,0,0,1,0", "1,0,0,0,one,0,0", "1,0.5,0,0,1,0,0", "9,0,0,0,1,0,0"]
)
def test_malformed_rows(row):
    with pytest.raises(MalformedRow) as info:
        parse_recording(HEAD + "1,0,0,0,1,0,0\n" + row + "\n")
    if info.value.line is not None:
        assert info.value.line == 5


def test_negative_pressure_rejected():
    with pytest.raises(MalformedRow):
        parse_recording(HEAD + "1,0,0,0,-0.1,0,0\n1,5,0,0,1,0,0\n")


def test_single_run_mode1():
    rec = recording(1, [(1000, 0.4), (3000, 0.9), (5000, 0.2)])
    assert extract_duration(rec, 1) == 4.0


def test_mode4_clamp_example():
    rec = recording(4, [(0, 1.0), (17200, 1.0)])
    assert extract_duration(rec, 3) == 17.2
    assert extract_duration(rec, 4) == 15.0


@pytest.mark.parametrize("name,task,rows,expected", GOLDEN, ids=[g[0] for g in GOLDEN])
def test_golden_durations(name, task, rows, expected):
    rec = recording(task, rows)
    for mode, value in expected.items():
        assert extract_duration(rec, mode) == value, (name, mode)


def test_bad_mode():
    with pytest.raises(ValueError):
        extract_duration(recording(1, [(0, 1.0)]), 6)


# -- random streams ---------------------------------------------------------------


@st.composite
def streams(draw):
    n = draw(st.integers(1, 40))
    gaps = draw(st.lists(st.integers(1, 3000), min_size=n, max_size=n))
    down = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    if not any(down):
        down[draw(st.integers(0, n - 1))] = True
    levels = draw(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n))
    t = np.cumsum(gaps).tolist()
    rows = [(ti, lv if d else 0.0) for ti, d, lv in zip(t, down, levels)]
    task = draw(st.integers(1, 7))
    return task, rows


def interval_oracle(rows):
    """Span and summed run lengths (ms), by walking the samples one by one."""
    runs, current = [], None
    for t, p in rows:
        if p > 0:
            current = [t, t] if current is None else [current[0], t]
        elif current is not None:
            runs.append(current)
            current = None
    if current is not None:
        runs.append(current)
    span = runs[-1][1] - runs[0][0]
    return span, sum(b - a for a, b in runs)


@settings(max_examples=100, deadline=None)
@given(streams())
def test_mode5_is_mode1_minus_mode2(stream):
    task, rows = stream
    rec = recording(task, rows)
    span, down = interval_oracle(rows)
    assert extract_duration(rec, 1) == span / 1000.0
    assert extract_duration(rec, 2) == down / 1000.0
    assert extract_duration(rec, 5) == extract_duration(rec, 1) - extract_duration(rec, 2)


@settings(max_examples=100, deadline=None)
@given(streams())
def test_mode4_bounds(stream):
    task, rows = stream
    rec = recording(task, rows)
    m4 = extract_duration(rec, 4)
    if task in (4, 6, 7):
        assert 0.0 <= m4 <= 15.0
        assert m4 == min(extract_duration(rec, 3), 15.0)
    else:
        assert m4 == extract_duration(rec, 3)


@settings(max_examples=60, deadline=None)
@given(streams(), st.integers(1, 5), st.integers(1, 2000))
def test_trailing_pen_up_tail_changes_nothing(stream, n_tail, step):
    task, rows = stream
    last = rows[-1][0]
    tail = [(last + step * (k + 1), 0.0) for k in range(n_tail)]
    a, b = recording(task, rows), recording(task, rows + tail)
    for mode in (1, 2, 3, 4):
        assert extract_duration(a, mode) == extract_duration(b, mode)


@settings(max_examples=60, deadline=None)
@given(streams(), st.floats(-1e6, 1e6, allow_nan=False))
def test_serialize_parse_round_trip(stream, coord):
    task, rows = stream
    rec = recording(task, rows)
    rec = type(rec)(task, rec.t_ms, rec.x + coord, rec.y - coord / 3, rec.pressure,
                    rec.azimuth, rec.altitude)
    subject = SubjectRecording("S-1", "MD-MCI", {task: rec})
    text = serialize_recording(subject)
    back = parse_recording(text)
    assert back.tasks[task] == rec
    assert serialize_recording(back) == text


# -- dataset building --------------------------------------------------------------


def _subject(sid, label, tasks):
    return SubjectRecording(
        sid, label, {t: recording(t, [(0, 0.0), (100, 1.0), (100 + 1000 * t, 1.0)]) for t in tasks}
    )


def test_two_complete_subjects():
    ds = build_duration_dataset([_subject("a", "HC", range(1, 8)), _subject("b", "ES-AD", range(1, 8))], 4)
    assert ds.features.shape == (2, 7)
    assert not np.isnan(ds.features).any()
    assert ds.labels == ("HC", "ES-AD")


def test_missing_tasks_marked():
    ds = build_duration_dataset([_subject("a", "ES-AD", (1, 2, 3))], 1)
    assert ds.features[0, :3].tolist() == [1.0, 2.0, 3.0]
    assert all(math.isnan(v) for v in ds.features[0, 3:])


def test_duplicate_subject():
    with pytest.raises(DuplicateSubject):
        build_duration_dataset([_subject("a", "HC", (1,)), _subject("a", "HC", (2,))], 1)


def test_cohort_count_and_selection():
    subjects = [_subject(f"h{k}", "HC", range(1, 8)) for k in range(27)]
    subjects += [_subject(f"e{k}", "ES-AD", range(1, 8)) for k in range(25)]
    subjects += [_subject("e25", "ES-AD", (1, 2, 3)), _subject("e26", "ES-AD", (1, 2, 3, 4, 6))]
    subjects += [_subject(f"m{k}", "MD-MCI", range(1, 8)) for k in range(5)]
    ds = build_duration_dataset(subjects, 4)
    pair = pair_subset(ds, "HC", "ES-AD")
    assert len(pair) == 54
    sel = select_features(pair, IndicatorVector.from_tasks((2, 4, 7)))
    assert len(sel) == 52 and sel.dropped == 2
