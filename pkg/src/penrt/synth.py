"""Seeded synthetic cohorts and matching raw pen streams.

A cohort is drawn cell by cell from a region mixture: coordinates with zero
deviation sit at the cell mean, the others come from a normal truncated to
the region's domain (``[0, 15)`` for t4/t7 below the prescribed time,
``[0, inf)`` for t2) by rejection.  Durations are rounded to whole
milliseconds so that the pen streams emitted for them reproduce them
exactly through the ingest pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Mapping

import numpy as np

from .dataset import ALL_TASKS, N_TASKS, DurationDataset
from .errors import UnsampleableCell
from .gaussian_regions import ACTIVE_DIMS, FEATURE_TASKS, REGIONS, CellParams, RegionMixtureModel
from .ingest import PRESCRIBED_S, TIMED_TASKS, SubjectRecording, TaskRecording

PRESET = "reference_cohort.json"
DEFAULT_OVERRIDE_STD = (0.5, 0.0, 15.0)
_BATCH = 64


@dataclass(frozen=True)
class CohortSpec:
    """What to sample: a mixture, per-cell counts and a seed.

    Attributes:
        model: cell means/deviations (weights are not used for sampling).
        counts: samples per ``(region, label)``; missing cells draw nothing.
        seed: root of every random draw.
        emit_streams: also produce raw pen streams (see :func:`emit_pen_streams`).
        std_override: deviations for cells whose own are unusable.
        filler: ``task -> (mean, std)`` for tasks outside (t4, t7, t2), drawn
            independently of class; tasks 4, 6, 7 are clamped at 15.
        resolution_ms: rounding step of every duration; ``None`` keeps raw floats.
    """

    model: RegionMixtureModel
    counts: Mapping[tuple[int, str], int]
    seed: int = 0
    emit_streams: bool = False
    std_override: Mapping[tuple[int, str], tuple[float, float, float]] = field(
        default_factory=dict
    )
    filler: Mapping[int, tuple[float, float]] = field(default_factory=dict)
    resolution_ms: int | None = 1

    def __post_init__(self):
        for key, n in self.counts.items():
            if n < 0:
                raise ValueError(f"negative count {n} for cell {key}")
        for task in self.filler:
            if task in FEATURE_TASKS or task not in ALL_TASKS:
                raise ValueError(f"filler task {task} must be one of 1, 3, 5, 6")

    @property
    def n_samples(self) -> int:
        return sum(self.counts.values())

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "CohortSpec":
        classes = tuple(d.get("classes", ("HC", "ES-AD")))
        region_total = {r: 0 for r in REGIONS}
        for c in d["cells"]:
            region_total[int(c["region"])] += int(c["count"])
        cells, counts, overrides = {}, {}, {}
        for c in d["cells"]:
            r, lab, n = int(c["region"]), c["label"], int(c["count"])
            std = c.get("std")
            cells[(r, lab)] = CellParams(
                region=r,
                label=lab,
                count=n,
                pi=Fraction(n, region_total[r]) if region_total[r] else Fraction(0),
                mean=tuple(float(v) for v in c["mean"]),
                std=None if std is None else tuple(float(v) for v in std),
                usable=std is not None,
                n_used=n,
            )
            counts[(r, lab)] = n
            if c.get("override_std") is not None:
                overrides[(r, lab)] = tuple(float(v) for v in c["override_std"])
        for r in REGIONS:
            for lab in classes:
                if (r, lab) not in cells:
                    cells[(r, lab)] = CellParams(r, lab, 0, Fraction(0), None, None, False)
        return cls(
            model=RegionMixtureModel(cells, classes, dict(ACTIVE_DIMS)),
            counts=counts,
            seed=int(d.get("seed", 0) if seed is None else seed),
            std_override=overrides,
            filler={int(t): (float(m), float(s)) for t, (m, s) in d.get("filler", {}).items()},
            resolution_ms=d.get("resolution_ms", 1),
        )

    @classmethod
    def from_json(cls, text: str, seed: int | None = None) -> "CohortSpec":
        return cls.from_dict(json.loads(text), seed)

    def with_counts(self, counts: Mapping[tuple[int, str], int]) -> "CohortSpec":
        return CohortSpec(
            self.model, dict(counts), self.seed, self.emit_streams,
            self.std_override, self.filler, self.resolution_ms,
        )

    def with_seed(self, seed: int) -> "CohortSpec":
        return CohortSpec(
            self.model, self.counts, seed, self.emit_streams,
            self.std_override, self.filler, self.resolution_ms,
        )


def preset_text(name: str = PRESET) -> str:
    return resources.files("penrt.presets").joinpath(name).read_text()


def reference_spec(seed: int = 42) -> CohortSpec:
    """The bundled 53-sample reference cohort (HC vs ES-AD)."""
    return CohortSpec.from_json(preset_text(), seed=seed)


def _quantize(v: np.ndarray, resolution_ms: int | None) -> np.ndarray:
    if resolution_ms is None:
        return v
    return np.round(v * 1000.0 / resolution_ms) * resolution_ms / 1000.0


def _truncated_normal(rng, mu, sigma, n, upper, resolution_ms) -> np.ndarray:
    """``n`` draws of N(mu, sigma) restricted to [0, upper) after rounding."""
    out = np.empty(0)
    while len(out) < n:
        draw = _quantize(rng.normal(mu, sigma, max(_BATCH, 2 * (n - len(out)))), resolution_ms)
        draw = draw[(draw >= 0) & (draw < upper)]
        out = np.concatenate([out, draw])
    return out[:n]


def _cell_std(spec: CohortSpec, cell: CellParams) -> tuple[float, ...]:
    key = (cell.region, cell.label)
    if key in spec.std_override:
        return spec.std_override[key]
    if not cell.usable or cell.std is None:
        raise UnsampleableCell(
            f"region {cell.region} {cell.label}: no usable deviations and no override"
        )
    return cell.std


def sample_cohort(spec: CohortSpec) -> DurationDataset:
    """Draw the requested number of samples from every cell, deterministically."""
    cell_ss, filler_ss = np.random.SeedSequence(spec.seed).spawn(2)
    rng = np.random.default_rng(cell_ss)
    ids, labels, rows = [], [], []
    for r in REGIONS:
        for lab in spec.model.classes:
            n = int(spec.counts.get((r, lab), 0))
            if n == 0:
                continue
            cell = spec.model.cell(r, lab)
            if cell.mean is None:
                raise UnsampleableCell(f"region {r} {lab}: no mean")
            std = _cell_std(spec, cell)
            block = np.empty((n, 3))
            for d in range(3):
                if std[d] == 0:
                    block[:, d] = cell.mean[d]
                else:
                    upper = PRESCRIBED_S if d < 2 else np.inf
                    block[:, d] = _truncated_normal(
                        rng, cell.mean[d], std[d], n, upper, spec.resolution_ms
                    )
            rows.append(block)
            width = max(2, len(str(n)))
            ids += [f"R{r}-{lab}-{k + 1:0{width}d}" for k in range(n)]
            labels += [lab] * n
    X = np.vstack(rows) if rows else np.empty((0, 3))

    feats = np.full((len(ids), N_TASKS), np.nan)
    for col, task in enumerate(FEATURE_TASKS):
        feats[:, task - 1] = X[:, col]
    frng = np.random.default_rng(filler_ss)
    for task in sorted(spec.filler):
        mu, sigma = spec.filler[task]
        v = _truncated_normal(frng, mu, sigma, len(ids), np.inf, spec.resolution_ms)
        if task in TIMED_TASKS:
            v = np.minimum(v, PRESCRIBED_S)
        feats[:, task - 1] = v
    return DurationDataset(tuple(ids), tuple(labels), feats, pair=tuple(spec.model.classes))


# -- pen streams ----------------------------------------------------------------


def _runs_for(total_ms: int, by_down_time: bool, rng) -> list[tuple[int, int]]:
    """Pen-down runs, relative to the first touch.

    With ``by_down_time`` the summed run lengths equal ``total_ms``;
    otherwise the span from first to last touch does.  Two runs separated
    by a lift are used whenever there is room, so span and down time differ.
    """
    if by_down_time:
        if total_ms < 2:
            return [(0, total_ms)]
        first = int(rng.integers(1, total_ms))
        gap = int(rng.integers(2, 200))
        return [(0, first), (first + gap, total_ms + gap)]
    if total_ms < 4:
        return [(0, total_ms)]
    lift = int(rng.integers(1, total_ms - 2))
    gap = int(rng.integers(2, min(200, total_ms - lift) + 1))
    return [(0, lift), (lift + gap, total_ms)]


def _task_stream(task_id: int, seconds: float, rng) -> TaskRecording:
    target = int(round(seconds * 1000.0))
    if abs(target / 1000.0 - seconds) > 1e-9:
        raise ValueError(f"task {task_id}: {seconds!r} s is not a whole number of ms")
    if task_id in TIMED_TASKS and target >= PRESCRIBED_S * 1000:
        # anything past the prescribed time is clamped back to 15 s
        target = int(PRESCRIBED_S * 1000) + int(rng.integers(200, 3000))
    runs = _runs_for(target, task_id == 3, rng)
    lead = int(rng.integers(50, 500))
    t, p = [0], [0.0]
    prev_end = None
    for start, end in runs:
        start, end = start + lead, end + lead
        if prev_end is not None:
            t.append((prev_end + start) // 2)
            p.append(0.0)
        t.append(start)
        p.append(float(rng.uniform(0.2, 1.0)))
        if end > start:
            t.append(end)
            p.append(float(rng.uniform(0.2, 1.0)))
        prev_end = end
    t.append(prev_end + int(rng.integers(50, 500)))
    p.append(0.0)
    n = len(t)
    xy = np.round(rng.uniform(0, 10000, (2, n)), 1)
    return TaskRecording(
        task_id,
        t_ms=np.array(t),
        x=xy[0],
        y=xy[1],
        pressure=np.array(p),
        azimuth=np.full(n, 45.0),
        altitude=np.full(n, 60.0),
    )


def emit_pen_streams(ds: DurationDataset, seed: int = 0) -> list[SubjectRecording]:
    """Minimal recordings whose mode-4 durations equal the dataset's features.

    Each present task gets a leading and trailing pen-up sample and, when its
    duration allows, two pen-down runs, so all five modes are defined and
    modes 1 and 2 differ.  Durations must be whole milliseconds.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i, sid in enumerate(ds.subject_ids):
        tasks = {}
        for col, task_id in enumerate(ds.tasks):
            v = ds.features[i, col]
            if np.isnan(v):
                continue
            tasks[task_id] = _task_stream(task_id, float(v), rng)
        out.append(SubjectRecording(sid, ds.labels[i], tasks))
    return out
