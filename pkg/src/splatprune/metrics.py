"""PSNR and single-scale SSIM for float RGB images in [0, 1]."""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateInputError, ShapeError

INF_SENTINEL = "inf"

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(reference, candidate):
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(candidate, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("images contain non-finite values")
    return a, b


def psnr(reference, candidate, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical images."""
    a, b = _pair(reference, candidate)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value * max_value / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable weighted mean over every full window, (H, W) -> (H-s+1, W-s+1)
    rows = sliding_window_view(img, len(g), axis=1) @ g
    return sliding_window_view(rows, len(g), axis=0) @ g


def ssim_map(x: np.ndarray, y: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Local SSIM over all full 11x11 Gaussian windows of one channel."""
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(reference, candidate, data_range: float = 1.0) -> float:
    """Mean SSIM, computed per channel and averaged."""
    a, b = _pair(reference, candidate)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise DegenerateInputError(
            f"image {a.shape[1]}x{a.shape[0]} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    vals = [ssim_map(a[..., c], b[..., c], data_range).mean() for c in range(a.shape[2])]
    return float(np.mean(vals))


def metric_record(reference, candidate) -> dict:
    a, _ = _pair(reference, candidate)
    p = psnr(reference, candidate)
    return {
        "psnr_db": INF_SENTINEL if math.isinf(p) else p,
        "ssim": ssim(reference, candidate),
        "width": int(a.shape[1]),
        "height": int(a.shape[0]),
        "lpips": None,
    }
