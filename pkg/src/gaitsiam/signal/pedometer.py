"""Peak-detecting step counter used as the usability yardstick for obfuscation."""

from __future__ import annotations

import numpy as np
from scipy.signal import find_peaks

from .denoise import gaussian_filter
from .trace import SensorTrace

MIN_STEP_INTERVAL = 0.25  # seconds
SMOOTHING = 0.04  # seconds of Gaussian sigma


def count_steps(trace: SensorTrace, smoothing: float = SMOOTHING) -> int:
    """Peaks of the smoothed acceleration magnitude above mean + 0.5 std."""
    mag = np.linalg.norm(trace.samples, axis=1)
    sigma = smoothing * trace.sample_rate
    if sigma > 0:
        mag = gaussian_filter(mag, sigma)
    threshold = mag.mean() + 0.5 * mag.std()
    distance = max(1, int(np.ceil(MIN_STEP_INTERVAL * trace.sample_rate)))
    peaks, _ = find_peaks(mag, height=threshold, distance=distance)
    return int(len(peaks))


def pedometer_error(clean: SensorTrace, noised: SensorTrace, **kwargs) -> float:
    """Relative step-count error ``|steps_noised - steps_clean| / steps_clean``."""
    c = count_steps(clean, **kwargs)
    n = count_steps(noised, **kwargs)
    if c == 0:
        return 0.0 if n == 0 else float("inf")
    return abs(n - c) / c
