"""Stacked per-axis log-magnitude spectrograms (33 x 42 images)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from .trace import SensorTrace

IMAGE_ROWS = 33
IMAGE_COLS = 42


class TraceTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class STFTConfig:
    window_len: int = 32
    hop: int = 8
    fft_len: int = 32
    freq_bins_kept: int = 11
    frames_kept: int = 42
    log_floor: float = -10.0
    window: str = "hann"
    # stride between consecutive images; None means back-to-back images
    image_hop: int | None = None

    def __post_init__(self):
        if not 0 < self.hop <= self.window_len <= self.fft_len:
            raise ValueError("need 0 < hop <= window_len <= fft_len")
        if self.freq_bins_kept * 3 != IMAGE_ROWS:
            raise ValueError("three stacked axes must give 33 rows")
        if self.freq_bins_kept > self.fft_len // 2 + 1:
            raise ValueError("freq_bins_kept exceeds the one-sided spectrum")
        if self.frames_kept != IMAGE_COLS:
            raise ValueError("images are 42 frames wide")
        if self.image_hop is not None and self.image_hop <= 0:
            raise ValueError("image_hop must be positive")

    @property
    def span(self) -> int:
        """Samples consumed by one image."""
        return self.window_len + self.hop * (self.frames_kept - 1)

    @property
    def stride(self) -> int:
        return self.image_hop or self.span


@dataclass
class SpectrogramImage:
    pixels: np.ndarray
    subject_id: str = ""
    segment_index: int = 0


def log_magnitude(x, cfg: STFTConfig):
    """``(freq_bins_kept, frames)`` log-magnitude STFT of a 1-D signal."""
    x = np.asarray(x, dtype=float)
    if len(x) < cfg.window_len:
        raise TraceTooShortError(f"need at least {cfg.window_len} samples, got {len(x)}")
    frames = sliding_window_view(x, cfg.window_len)[::cfg.hop]
    win = get_window(cfg.window, cfg.window_len)
    spec = np.abs(np.fft.rfft(frames * win, n=cfg.fft_len, axis=-1))[:, :cfg.freq_bins_kept]
    return np.log(np.maximum(spec, np.exp(cfg.log_floor))).T


def stacked_log_magnitude(samples, cfg: STFTConfig):
    """x, y and z spectrograms stacked vertically: ``(33, frames)``."""
    samples = np.asarray(samples, dtype=float)
    return np.vstack([log_magnitude(samples[:, a], cfg) for a in range(3)])


def standardize(image):
    """Zero mean, unit std; constant images map to zeros."""
    image = np.asarray(image, dtype=float)
    std = image.std()
    if std == 0:
        return np.zeros_like(image)
    return (image - image.mean()) / std


def spectrogram(trace: SensorTrace, cfg: STFTConfig = STFTConfig(), normalize=True):
    """Cut a trace into consecutive 33 x 42 images."""
    n = len(trace.samples)
    if n < cfg.span:
        raise TraceTooShortError(
            f"trace has {n} samples; one image needs window_len + hop*(frames_kept-1) = {cfg.span}")
    images = []
    for idx, start in enumerate(range(0, n - cfg.span + 1, cfg.stride)):
        pixels = stacked_log_magnitude(trace.samples[start:start + cfg.span], cfg)
        if normalize:
            pixels = standardize(pixels)
        images.append(SpectrogramImage(pixels, trace.subject_id, idx))
    return images


def image_stack(images) -> np.ndarray:
    """Model-ready ``(N, 1, 33, 42)`` array."""
    if not images:
        return np.zeros((0, 1, IMAGE_ROWS, IMAGE_COLS))
    return np.stack([im.pixels for im in images])[:, None]


def write_image_csv(image: SpectrogramImage, path) -> None:
    np.savetxt(path, image.pixels, delimiter=",", fmt="%.10g")
