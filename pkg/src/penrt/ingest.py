"""Pen-tablet recording files and task-duration extraction.

Recording CSV layout (one file per subject)::

    # subject: S001
    # label: HC
    task,t_ms,x,y,pressure,azimuth,altitude
    1,0,1203.5,880.0,0.0,45.0,60.0
    ...

Rows are grouped by task and strictly increasing in ``t_ms`` within a task.
The column header row is optional on input and always written on output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .dataset import ALL_TASKS, N_TASKS, DurationDataset, check_label
from .errors import DuplicateSubject, EmptyTask, MalformedRow, NonMonotonicTime

COLUMNS = ("task", "t_ms", "x", "y", "pressure", "azimuth", "altitude")
MODES = (1, 2, 3, 4, 5)
TIMED_TASKS = (4, 6, 7)
PRESCRIBED_S = 15.0


@dataclass(frozen=True)
class PenSample:
    t_ms: int
    x: float
    y: float
    pressure: float
    azimuth: float
    altitude: float


@dataclass(frozen=True, eq=False)
class TaskRecording:
    """One task's pen stream, stored column-wise."""

    task_id: int
    t_ms: np.ndarray
    x: np.ndarray
    y: np.ndarray
    pressure: np.ndarray
    azimuth: np.ndarray
    altitude: np.ndarray

    def __post_init__(self):
        if self.task_id not in ALL_TASKS:
            raise MalformedRow(f"task id {self.task_id} outside 1..{N_TASKS}")
        for name in ("t_ms", "x", "y", "pressure", "azimuth", "altitude"):
            dtype = np.int64 if name == "t_ms" else np.float64
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.t_ms)
        if n == 0:
            raise EmptyTask(f"task {self.task_id} has no samples")
        if any(len(getattr(self, c)) != n for c in COLUMNS[2:]):
            raise ValueError("sample columns differ in length")
        if np.any(np.diff(self.t_ms) <= 0):
            raise NonMonotonicTime(f"task {self.task_id}: timestamps not strictly increasing")
        if np.any(self.pressure < 0):
            raise MalformedRow(f"task {self.task_id}: negative pressure")
        if not np.any(self.pressure > 0):
            raise EmptyTask(f"task {self.task_id}: pen never touches the tablet")

    @classmethod
    def from_samples(cls, task_id: int, samples: Iterable[PenSample]) -> "TaskRecording":
        samples = list(samples)
        cols = {c: [getattr(s, c) for s in samples] for c in COLUMNS[1:]}
        return cls(task_id, **cols)

    def __len__(self) -> int:
        return len(self.t_ms)

    @property
    def samples(self) -> list[PenSample]:
        return [
            PenSample(int(t), float(x), float(y), float(p), float(az), float(al))
            for t, x, y, p, az, al in zip(
                self.t_ms, self.x, self.y, self.pressure, self.azimuth, self.altitude
            )
        ]

    def __eq__(self, other):
        if not isinstance(other, TaskRecording):
            return NotImplemented
        return self.task_id == other.task_id and all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in COLUMNS[1:]
        )


@dataclass(frozen=True)
class SubjectRecording:
    subject_id: str
    label: str
    tasks: Mapping[int, TaskRecording]

    def __post_init__(self):
        check_label(self.label)
        object.__setattr__(self, "tasks", dict(sorted(self.tasks.items())))


def _parse_number(cell: str, lineno: int, integer: bool = False):
    cell = cell.strip()
    try:
        if integer:
            return int(cell)
        value = float(cell)
    except ValueError:
        raise MalformedRow(f"non-numeric value {cell!r}", lineno) from None
    if not math.isfinite(value):
        raise MalformedRow(f"non-finite value {cell!r}", lineno)
    return value


def parse_recording(text: str) -> SubjectRecording:
    """Parse one subject's recording CSV."""
    subject_id = label = None
    blocks: dict[int, list[list]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            key = key.strip().lower()
            if sep and key == "subject":
                subject_id = value.strip()
            elif sep and key == "label":
                label = check_label(value.strip())
            continue
        cells = line.split(",")
        if [c.strip() for c in cells] == list(COLUMNS):
            continue
        if len(cells) != len(COLUMNS):
            raise MalformedRow(f"expected {len(COLUMNS)} columns, got {len(cells)}", lineno)
        task = _parse_number(cells[0], lineno, integer=True)
        if task not in ALL_TASKS:
            raise MalformedRow(f"task id {task} outside 1..{N_TASKS}", lineno)
        t_ms = _parse_number(cells[1], lineno, integer=True)
        rest = [_parse_number(c, lineno) for c in cells[2:]]
        if rest[2] < 0:
            raise MalformedRow(f"negative pressure {rest[2]!r}", lineno)
        if task != current:
            if task in blocks:
                raise MalformedRow(f"rows of task {task} are not contiguous", lineno)
            blocks[task] = []
            current = task
        rows = blocks[task]
        if rows and t_ms <= rows[-1][0]:
            raise NonMonotonicTime(
                f"task {task}: t_ms {t_ms} does not increase past {rows[-1][0]}", lineno
            )
        rows.append([t_ms] + rest)
    if subject_id is None or label is None:
        raise MalformedRow("missing '# subject:' or '# label:' header line")
    tasks = {}
    for task, rows in blocks.items():
        cols = list(zip(*rows))
        tasks[task] = TaskRecording(task, *cols)
    return SubjectRecording(subject_id, label, tasks)


def serialize_recording(rec: SubjectRecording) -> str:
    lines = [f"# subject: {rec.subject_id}", f"# label: {rec.label}", ",".join(COLUMNS)]
    for task_id, task in rec.tasks.items():
        for t, x, y, p, az, al in zip(
            task.t_ms, task.x, task.y, task.pressure, task.azimuth, task.altitude
        ):
            lines.append(
                f"{task_id},{int(t)},{float(x)!r},{float(y)!r},{float(p)!r},"
                f"{float(az)!r},{float(al)!r}"
            )
    return "\n".join(lines) + "\n"


def pen_down_runs(rec: TaskRecording, threshold: float = 0.0) -> list[tuple[int, int]]:
    """Maximal runs of consecutive samples with pressure above ``threshold``.

    Returns ``(t_start_ms, t_end_ms)`` for each run, taken from the first and
    last sample of the run.
    """
    down = rec.pressure > threshold
    edges = np.diff(np.concatenate(([0], down.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return [(int(rec.t_ms[s]), int(rec.t_ms[e])) for s, e in zip(starts, ends)]


def extract_duration(rec: TaskRecording, mode: int, threshold: float = 0.0) -> float:
    """Task duration in seconds under measurement mode 1..5."""
    if mode not in MODES:
        raise ValueError(f"measurement mode must be one of {MODES}, got {mode!r}")
    runs = pen_down_runs(rec, threshold)
    if not runs:
        raise EmptyTask(f"task {rec.task_id}: no sample with pressure > {threshold}")
    span_ms = runs[-1][1] - runs[0][0]
    down_ms = sum(end - start for start, end in runs)
    if mode == 1:
        return span_ms / 1000.0
    if mode == 2:
        return down_ms / 1000.0
    if mode == 5:
        # float subtraction keeps mode5 == mode1 - mode2 bit-exact
        return span_ms / 1000.0 - down_ms / 1000.0
    value = (down_ms if rec.task_id == 3 else span_ms) / 1000.0
    if mode == 4 and rec.task_id in TIMED_TASKS:
        value = min(value, PRESCRIBED_S)
    return value


def build_duration_dataset(
    recordings: Iterable[SubjectRecording], mode: int, threshold: float = 0.0
) -> DurationDataset:
    recordings = list(recordings)
    seen = set()
    for rec in recordings:
        if rec.subject_id in seen:
            raise DuplicateSubject(f"duplicate subject id {rec.subject_id!r}")
        seen.add(rec.subject_id)
    feats = np.full((len(recordings), N_TASKS), np.nan)
    for i, rec in enumerate(recordings):
        for task_id, task in rec.tasks.items():
            feats[i, task_id - 1] = extract_duration(task, mode, threshold)
    return DurationDataset(
        tuple(r.subject_id for r in recordings), tuple(r.label for r in recordings), feats
    )
