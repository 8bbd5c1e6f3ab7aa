"""Denoisers an attacker may apply: exact 1-D TV prox and a Gaussian filter."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter1d


def tv_denoise(signal, lam: float):
    """Exact solution of ``min_u 0.5*||u - x||^2 + lam * sum|u[i+1] - u[i]|``.

    Direct taut-string style sweep (Condat, 2013): the output is built
    segment by segment while tracking the lower/upper candidate levels
    ``vmin``/``vmax`` and their running residuals ``umin``/``umax``.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    y = np.asarray(signal, dtype=float)
    n = len(y)
    out = np.empty(n)
    if n == 0:
        return out
    k = k0 = kminus = kplus = 0
    umin, umax = lam, -lam
    vmin, vmax = y[0] - lam, y[0] + lam
    twolam = 2.0 * lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                out[k0:kminus + 1] = vmin
                k0 = kminus + 1
                kminus = k = k0
                vmin = y[k0]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                out[k0:kplus + 1] = vmax
                k0 = kplus + 1
                kplus = k = k0
                vmax = y[k0]
                umax = -lam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                out[k0:k + 1] = vmin
                return out
        umin += y[k + 1] - vmin
        if umin < -lam:
            out[k0:kminus + 1] = vmin
            k0 = kminus + 1
            kplus = kminus = k = k0
            vmin = y[k0]
            vmax = vmin + twolam
            umin, umax = lam, -lam
            continue
        umax += y[k + 1] - vmax
        if umax > lam:
            out[k0:kplus + 1] = vmax
            k0 = kplus + 1
            kplus = kminus = k = k0
            vmax = y[k0]
            vmin = vmax - twolam
            umin, umax = lam, -lam
            continue
        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= -lam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = -lam


def total_variation(signal) -> float:
    return float(np.abs(np.diff(np.asarray(signal, dtype=float))).sum())


def gaussian_filter(signal, sigma: float):
    """Gaussian smoothing: kernel truncated at +-4 sigma, normalized, reflect-padded."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return gaussian_filter1d(np.asarray(signal, dtype=float), sigma, mode="reflect", truncate=4.0)


def denoise_trace(trace, method: str, param: float):
    """Apply a denoiser to every axis of a trace; ``method`` in {tv, gaussian_filter}."""
    if method == "tv":
        fn = tv_denoise
    elif method in ("gaussian", "gaussian_filter"):
        fn = gaussian_filter
    else:
        raise ValueError(f"unknown denoiser {method!r}")
    cols = [fn(trace.samples[:, a], param) for a in range(3)]
    return trace.with_samples(np.column_stack(cols))
