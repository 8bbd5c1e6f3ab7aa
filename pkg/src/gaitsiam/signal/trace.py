"""Accelerometer traces and the ``t,ax,ay,az`` CSV adapter."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

COLUMNS = ("t", "ax", "ay", "az")


class TraceFormatError(ValueError):
    pass


class MissingColumnsError(TraceFormatError):
    pass


class NonMonotoneTimeError(TraceFormatError):
    pass


class EmptyTraceError(TraceFormatError):
    pass


@dataclass
class SensorTrace:
    """Uniformly sampled 3-axis acceleration in m/s^2, shape ``(n, 3)``."""

    sample_rate: float
    samples: np.ndarray
    subject_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.ndim != 2 or self.samples.shape[1] != 3:
            raise ValueError(f"samples must have shape (n, 3), got {self.samples.shape}")
        if len(self.samples) < 1:
            raise EmptyTraceError("trace has no samples")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("trace contains non-finite samples")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.sample_rate

    def with_samples(self, samples) -> "SensorTrace":
        return SensorTrace(self.sample_rate, samples, self.subject_id)

    def slice_seconds(self, start: float, stop: float) -> "SensorTrace":
        i, j = int(round(start * self.sample_rate)), int(round(stop * self.sample_rate))
        return self.with_samples(self.samples[i:j])


def resample(t, values, sample_rate):
    """Linearly interpolate irregular samples onto a uniform grid from ``t[0]``."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    n = int(np.floor((t[-1] - t[0]) * sample_rate + 1e-9)) + 1
    grid = t[0] + np.arange(n) / sample_rate
    return np.column_stack([np.interp(grid, t, values[:, a]) for a in range(values.shape[1])])


def ingest_csv(path, sample_rate=None, subject_id=None) -> SensorTrace:
    """Read a ``t,ax,ay,az`` CSV and resample it to a uniform rate.

    Without ``sample_rate`` the rate is inferred from the median time step.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyTraceError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise MissingColumnsError(f"{path}: missing columns {missing}")
        cols = [header.index(c) for c in COLUMNS]
        rows = [[float(row[i]) for i in cols] for row in reader if row]
    if not rows:
        raise EmptyTraceError(f"{path}: no samples")
    data = np.asarray(rows)
    t = data[:, 0]
    steps = np.diff(t)
    if np.any(steps <= 0):
        bad = int(np.argmax(steps <= 0)) + 1
        raise NonMonotoneTimeError(f"{path}: time does not increase at row {bad + 1}")
    if sample_rate is None:
        sample_rate = 1.0 / float(np.median(steps)) if len(t) > 1 else 1.0
    values = resample(t, data[:, 1:], sample_rate) if len(t) > 1 else data[:, 1:]
    return SensorTrace(float(sample_rate), values, subject_id if subject_id is not None else path.stem)


def write_csv(trace: SensorTrace, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for t, (ax, ay, az) in zip(trace.times, trace.samples):
            writer.writerow([repr(float(t)), repr(float(ax)), repr(float(ay)), repr(float(az))])
