"""Obfuscation noise and the secret sinusoid fingerprint."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .synth import CADENCE_RANGE
from .trace import SensorTrace

NOISE_KINDS = ("gaussian", "laplacian", "uniform", "sinusoid")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "gaussian"
    # samples; None means one second at the trace's rate
    moving_window: int | None = None
    std_scale: float = 1.0
    # Hz; None draws a per-device secret frequency from the cadence range
    sinusoid_freq: float | None = None
    sinusoid_amp_ratio: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.moving_window is not None and self.moving_window < 1:
            raise ValueError("moving_window must be >= 1")
        if self.std_scale < 0:
            raise ValueError("std_scale must be >= 0")
        if self.sinusoid_amp_ratio < 0:
            raise ValueError("sinusoid_amp_ratio must be >= 0")


def moving_std(x, window: int):
    """Causal trailing-window std; the first ``window - 1`` samples reuse the first full window."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n <= window:
        return np.full(n, x.std())
    out = np.empty(n)
    out[window - 1:] = sliding_window_view(x, window).std(axis=-1)
    out[:window - 1] = out[window - 1]
    return out


def _unit_noise(kind, rng, shape):
    if kind == "gaussian":
        return rng.standard_normal(shape)
    if kind == "laplacian":
        return rng.laplace(0.0, 1.0 / np.sqrt(2.0), shape)
    return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), shape)


def fingerprint_frequency(spec: NoiseSpec) -> float:
    if spec.sinusoid_freq is not None:
        return spec.sinusoid_freq
    return float(np.random.default_rng([spec.seed, 1]).uniform(*CADENCE_RANGE))


def inject_noise(trace: SensorTrace, spec: NoiseSpec) -> SensorTrace:
    """Add obfuscation noise per axis; length, rate and subject are preserved."""
    x = trace.samples
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "sinusoid":
        t = trace.times
        freq = fingerprint_frequency(spec)
        phases = rng.uniform(0, 2 * np.pi, size=3)
        amp = spec.sinusoid_amp_ratio * x.std(axis=0)
        added = amp * np.sin(2 * np.pi * freq * t[:, None] + phases)
    else:
        window = spec.moving_window or max(1, int(round(trace.sample_rate)))
        scale = np.column_stack([moving_std(x[:, a], window) for a in range(3)])
        added = spec.std_scale * scale * _unit_noise(spec.kind, rng, x.shape)
    return trace.with_samples(x + added)
