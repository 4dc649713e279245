"""Labelled duration samples, task-subset selection, class pairing and scaling.

A :class:`DurationDataset` is an immutable table of subjects by task durations
(seconds).  Missing tasks are stored as NaN and never imputed: selecting a
task subset drops every subject lacking one of the selected tasks.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ClassAbsent,
    DegenerateFeature,
    DuplicateSubject,
    EmptyResult,
    InvalidIndicator,
    MalformedRow,
    UnknownLabel,
)

LABELS = ("HC", "E-MCI", "A-MCI", "MD-MCI", "ES-AD")
N_TASKS = 7
ALL_TASKS = tuple(range(1, N_TASKS + 1))
CSV_HEADER = ["subject", "label"] + [f"t{j}" for j in ALL_TASKS]


def check_label(label: str) -> str:
    if label not in LABELS:
        raise UnknownLabel(f"unknown group label {label!r}; expected one of {LABELS}")
    return label


@dataclass(frozen=True)
class IndicatorVector:
    """Seven task-selection bits; ``bits[j - 1]`` selects task ``j``.

    The integer code puts task 1 in the least significant bit, so code 1 is
    ``{1}`` and code 127 selects every task.
    """

    bits: tuple[bool, ...]

    def __post_init__(self):
        bits = tuple(bool(b) for b in self.bits)
        if len(bits) != N_TASKS:
            raise InvalidIndicator(f"indicator needs {N_TASKS} bits, got {len(bits)}")
        if not any(bits):
            raise InvalidIndicator("indicator vector selects no task")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_int(cls, code: int) -> "IndicatorVector":
        if not 0 < code < 2**N_TASKS:
            raise InvalidIndicator(f"indicator code {code} outside 1..{2**N_TASKS - 1}")
        return cls(tuple(bool(code >> j & 1) for j in range(N_TASKS)))

    @classmethod
    def from_tasks(cls, tasks: Iterable[int]) -> "IndicatorVector":
        tasks = set(tasks)
        bad = tasks - set(ALL_TASKS)
        if bad:
            raise InvalidIndicator(f"task ids out of range: {sorted(bad)}")
        return cls(tuple(j in tasks for j in ALL_TASKS))

    @classmethod
    def all_vectors(cls) -> list["IndicatorVector"]:
        """The 2**7 - 1 non-empty indicators in ascending integer order."""
        return [cls.from_int(code) for code in range(1, 2**N_TASKS)]

    def __int__(self) -> int:
        return sum(1 << j for j, b in enumerate(self.bits) if b)

    @property
    def tasks(self) -> tuple[int, ...]:
        return tuple(j for j, b in zip(ALL_TASKS, self.bits) if b)

    def __str__(self) -> str:
        return ",".join(str(t) for t in self.tasks)


@dataclass(frozen=True)
class DurationDataset:
    """Per-subject task durations with group labels.

    Attributes:
        subject_ids: one id per row, unique.
        labels: group label per row.
        features: float array ``(n, len(tasks))``; NaN marks a missing task.
        tasks: task id of every feature column.
        pair: ``(negative, positive)`` labels once restricted to a class pair.
        dropped: subjects removed by the last :func:`select_features` call.
    """

    subject_ids: tuple[str, ...]
    labels: tuple[str, ...]
    features: np.ndarray
    tasks: tuple[int, ...] = ALL_TASKS
    pair: tuple[str, str] | None = None
    dropped: int = 0

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64, copy=True)
        if feats.ndim != 2:
            feats = feats.reshape(len(self.subject_ids), len(self.tasks))
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "labels", tuple(check_label(lab) for lab in self.labels))
        object.__setattr__(self, "tasks", tuple(int(t) for t in self.tasks))
        if feats.shape != (len(self.subject_ids), len(self.tasks)):
            raise ValueError(
                f"features shape {feats.shape} does not match "
                f"{len(self.subject_ids)} subjects x {len(self.tasks)} tasks"
            )
        if len(self.labels) != len(self.subject_ids):
            raise ValueError("labels and subject_ids differ in length")
        if len(set(self.subject_ids)) != len(self.subject_ids):
            seen, dup = set(), None
            for s in self.subject_ids:
                if s in seen:
                    dup = s
                    break
                seen.add(s)
            raise DuplicateSubject(f"duplicate subject id {dup!r}")
        present = feats[~np.isnan(feats)]
        if np.any(present < 0):
            raise ValueError("durations must be non-negative")

    def __len__(self) -> int:
        return len(self.subject_ids)

    def column(self, task: int) -> np.ndarray:
        return self.features[:, self.tasks.index(task)]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for lab in self.labels:
            out[lab] = out.get(lab, 0) + 1
        return out

    def binary_targets(self) -> np.ndarray:
        """+1 for the positive class of :attr:`pair`, -1 for the negative one."""
        if self.pair is None:
            raise ClassAbsent("dataset has no class pair; call pair_subset first")
        pos = self.pair[1]
        return np.array([1.0 if lab == pos else -1.0 for lab in self.labels])

    def subset(self, rows: Sequence[int] | np.ndarray) -> "DurationDataset":
        rows = np.asarray(rows, dtype=np.intp)
        return DurationDataset(
            subject_ids=tuple(self.subject_ids[i] for i in rows),
            labels=tuple(self.labels[i] for i in rows),
            features=self.features[rows],
            tasks=self.tasks,
            pair=self.pair,
        )

    def with_features(self, features: np.ndarray) -> "DurationDataset":
        return DurationDataset(self.subject_ids, self.labels, features, self.tasks, self.pair)

    # -- CSV --------------------------------------------------------------

    def to_csv(self) -> str:
        if self.tasks != ALL_TASKS:
            full = np.full((len(self), N_TASKS), np.nan)
            for k, t in enumerate(self.tasks):
                full[:, t - 1] = self.features[:, k]
        else:
            full = self.features
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for sid, lab, row in zip(self.subject_ids, self.labels, full):
            writer.writerow([sid, lab] + ["" if math.isnan(v) else repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DurationDataset":
        reader = csv.reader(io.StringIO(text))
        rows = [r for r in reader if r and not r[0].startswith("#")]
        if not rows or [c.strip() for c in rows[0]] != CSV_HEADER:
            raise MalformedRow(f"duration CSV must start with header {','.join(CSV_HEADER)}", 1)
        ids, labels, feats = [], [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != len(CSV_HEADER):
                raise MalformedRow(f"expected {len(CSV_HEADER)} columns, got {len(row)}", lineno)
            ids.append(row[0].strip())
            labels.append(check_label(row[1].strip()))
            vals = []
            for cell in row[2:]:
                cell = cell.strip()
                try:
                    vals.append(float(cell) if cell else math.nan)
                except ValueError:
                    raise MalformedRow(f"non-numeric duration {cell!r}", lineno) from None
            feats.append(vals)
        arr = np.array(feats, dtype=np.float64).reshape(len(ids), N_TASKS)
        return cls(tuple(ids), tuple(labels), arr)


def select_features(ds: DurationDataset, indicator: IndicatorVector) -> DurationDataset:
    """Project onto the indicator's tasks, dropping subjects missing any of them."""
    missing = [t for t in indicator.tasks if t not in ds.tasks]
    if missing:
        raise InvalidIndicator(f"tasks {missing} are not columns of this dataset")
    cols = [ds.tasks.index(t) for t in indicator.tasks]
    sub = ds.features[:, cols]
    keep = ~np.isnan(sub).any(axis=1)
    if not keep.any():
        raise EmptyResult(f"no subject has every task in {{{indicator}}}")
    idx = np.flatnonzero(keep)
    return DurationDataset(
        subject_ids=tuple(ds.subject_ids[i] for i in idx),
        labels=tuple(ds.labels[i] for i in idx),
        features=sub[idx],
        tasks=indicator.tasks,
        pair=ds.pair,
        dropped=int(len(ds) - len(idx)),
    )


def pair_subset(ds: DurationDataset, neg: str, pos: str) -> DurationDataset:
    """Keep the two groups ``neg`` (class -1) and ``pos`` (class +1)."""
    check_label(neg)
    check_label(pos)
    if neg == pos:
        raise ValueError(f"class pair needs two distinct labels, got {neg}:{pos}")
    counts = ds.counts()
    for lab in (neg, pos):
        if counts.get(lab, 0) == 0:
            raise ClassAbsent(f"no {lab} subject in dataset")
    idx = [i for i, lab in enumerate(ds.labels) if lab in (neg, pos)]
    return DurationDataset(
        subject_ids=tuple(ds.subject_ids[i] for i in idx),
        labels=tuple(ds.labels[i] for i in idx),
        features=ds.features[idx],
        tasks=ds.tasks,
        pair=(neg, pos),
    )


def parse_pair(text: str) -> tuple[str, str]:
    neg, sep, pos = text.partition(":")
    if not sep:
        raise ValueError(f"class pair must look like NEG:POS, got {text!r}")
    return check_label(neg.strip()), check_label(pos.strip())


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature ``min``/``max`` of a [-1, 1] affine map."""

    tasks: tuple[int, ...]
    mins: np.ndarray = field(repr=False)
    maxs: np.ndarray = field(repr=False)

    def __post_init__(self):
        mins = np.array(self.mins, dtype=np.float64)
        maxs = np.array(self.maxs, dtype=np.float64)
        if np.any(maxs < mins):
            raise ValueError("scaler max below min")
        mins.setflags(write=False)
        maxs.setflags(write=False)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (np.asarray(x, dtype=np.float64) - self.mins) / (self.maxs - self.mins) - 1.0

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return (np.asarray(z, dtype=np.float64) + 1.0) / 2.0 * (self.maxs - self.mins) + self.mins

    def to_dict(self) -> dict:
        return {"tasks": list(self.tasks), "min": self.mins.tolist(), "max": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(tuple(d["tasks"]), np.array(d["min"]), np.array(d["max"]))


def fit_scaler_array(x: np.ndarray, tasks: Sequence[int]) -> ScalerParams:
    mins = x.min(axis=0)
    maxs = x.max(axis=0)
    flat = np.flatnonzero(maxs == mins)
    if flat.size:
        raise DegenerateFeature(
            f"task {tasks[flat[0]]} is constant ({mins[flat[0]]!r}) and cannot be scaled"
        )
    return ScalerParams(tuple(tasks), mins, maxs)


def fit_scaler(ds: DurationDataset) -> ScalerParams:
    if np.isnan(ds.features).any():
        raise ValueError("fit_scaler needs complete features; run select_features first")
    return fit_scaler_array(ds.features, ds.tasks)


def apply_scaler(ds: DurationDataset, params: ScalerParams) -> DurationDataset:
    """Map features into [-1, 1]; held-out values beyond min/max extrapolate.

    The result holds scaled values, not durations, so it skips the
    non-negativity check by going through ``object.__new__``.
    """
    if tuple(params.tasks) != ds.tasks:
        raise ValueError(f"scaler fitted on tasks {params.tasks}, dataset has {ds.tasks}")
    out = object.__new__(DurationDataset)
    scaled = params.transform(ds.features)
    scaled.setflags(write=False)
    for name, value in (
        ("subject_ids", ds.subject_ids),
        ("labels", ds.labels),
        ("features", scaled),
        ("tasks", ds.tasks),
        ("pair", ds.pair),
        ("dropped", ds.dropped),
    ):
        object.__setattr__(out, name, value)
    return out
