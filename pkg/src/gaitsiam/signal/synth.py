"""Synthetic harmonic gait generator used as a desk-scale dataset."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .trace import SensorTrace

CADENCE_RANGE = (1.4, 2.6)
GRAVITY = (0.0, 0.0, 9.81)


@dataclass(frozen=True)
class SyntheticSubjectSpec:
    """Per-axis harmonic model of one walker.

    ``amplitudes`` and ``phases`` are ``(3, K)``: row = axis, column =
    harmonic ``k = 1..K`` of ``fundamental_freq``.
    """

    fundamental_freq: float
    amplitudes: tuple
    phases: tuple
    noise_std: float = 0.3
    seed: int = 0
    gravity: tuple = field(default=GRAVITY)
    subject_id: str = ""

    def __post_init__(self):
        lo, hi = CADENCE_RANGE
        if not lo <= self.fundamental_freq <= hi:
            raise ValueError(f"cadence {self.fundamental_freq} Hz outside [{lo}, {hi}]")
        amps = np.asarray(self.amplitudes, dtype=float)
        phases = np.asarray(self.phases, dtype=float)
        if amps.ndim != 2 or amps.shape[0] != 3 or amps.shape[1] < 3:
            raise ValueError("amplitudes must be (3, K) with K >= 3")
        if phases.shape != amps.shape:
            raise ValueError("phases must match amplitudes")
        if np.any(amps < 0):
            raise ValueError("amplitudes must be non-negative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        object.__setattr__(self, "amplitudes", tuple(map(tuple, amps)))
        object.__setattr__(self, "phases", tuple(map(tuple, phases)))

    @property
    def harmonics(self) -> int:
        return len(self.amplitudes[0])


def synth_gait(spec: SyntheticSubjectSpec, duration: float, sample_rate: float,
               offset: float = 0.0) -> SensorTrace:
    """Sample the harmonic model plus seeded Gaussian sensor noise.

    ``offset`` shifts the time origin (seconds), so separate recording
    sessions of one subject can be drawn with distinct noise by changing
    ``spec.seed``.
    """
    n = int(round(duration * sample_rate))
    if n < 1:
        raise ValueError("duration * sample_rate must be at least 1")
    t = offset + np.arange(n) / sample_rate
    amps = np.asarray(spec.amplitudes)
    phases = np.asarray(spec.phases)
    k = np.arange(1, amps.shape[1] + 1)
    arg = 2 * np.pi * spec.fundamental_freq * t[:, None] * k[None, :]
    out = np.empty((n, 3))
    for a in range(3):
        out[:, a] = np.sin(arg + phases[a]) @ amps[a] + spec.gravity[a]
    if spec.noise_std > 0:
        rng = np.random.default_rng(spec.seed)
        out += spec.noise_std * rng.standard_normal(out.shape)
    return SensorTrace(sample_rate, out, spec.subject_id)


def random_subject(rng, subject_id="", harmonics=4, noise_std=0.3) -> SyntheticSubjectSpec:
    """Draw a plausible walker: vertical axis dominated by the step rhythm."""
    rng = np.random.default_rng(rng)
    freq = rng.uniform(*CADENCE_RANGE)
    k = np.arange(1, harmonics + 1)
    amps = rng.uniform(0.2, 1.2, size=(3, harmonics)) / k
    amps[2, 0] = rng.uniform(1.5, 2.5)
    amps[2, 1:] *= 0.6
    phases = rng.uniform(0, 2 * np.pi, size=(3, harmonics))
    return SyntheticSubjectSpec(freq, amps, phases, noise_std=noise_std,
                                seed=int(rng.integers(2**31)), subject_id=subject_id)


def perturb_session(spec: SyntheticSubjectSpec, rng, cadence_shift=0.2,
                    amplitude_jitter=0.5) -> SyntheticSubjectSpec:
    """A later recording session: shifted cadence and rescaled harmonics."""
    rng = np.random.default_rng(rng)
    lo, hi = CADENCE_RANGE
    sign = rng.choice([-1.0, 1.0])
    freq = spec.fundamental_freq * (1 + sign * cadence_shift)
    if not lo <= freq <= hi:
        freq = spec.fundamental_freq * (1 - sign * cadence_shift)
    freq = float(np.clip(freq, lo, hi))
    amps = np.asarray(spec.amplitudes)
    scale = rng.uniform(1 - amplitude_jitter, 1 + amplitude_jitter, size=amps.shape)
    return replace(spec, fundamental_freq=freq, amplitudes=amps * scale,
                   seed=int(rng.integers(2**31)))
