"""Reconstruction quality metrics.

PSNR is computed on the declared intensity range; SSIM is the mean local
structural similarity with the conventional 11x11 Gaussian window (std 1.5)
and stabilizers K1 = 0.01, K2 = 0.03. Complex grids are compared through
their magnitudes.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage


def _as_comparable(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    return np.abs(a) if np.iscomplexobj(a) else a.astype(np.float64)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 2.0) -> float:
    """10 log10(peak^2 / MSE) in dB; +inf when the grids are identical."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean(np.abs(a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def _ssim_window() -> np.ndarray:
    coords = np.arange(-5, 6, dtype=np.float64)
    one_d = np.exp(-0.5 * (coords / 1.5) ** 2)
    k = np.outer(one_d, one_d)
    return k / k.sum()


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 2.0) -> float:
    """Mean local SSIM over the interior (windows fully inside the grids)."""
    a, b = _as_comparable(a), _as_comparable(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < 11:
        raise ValueError("grids must be at least 11x11 for the SSIM window")
    window = _ssim_window()
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    def smooth(m):
        return ndimage.convolve(m, window, mode="nearest")

    mu_a, mu_b = smooth(a), smooth(b)
    var_a = smooth(a * a) - mu_a**2
    var_b = smooth(b * b) - mu_b**2
    cov = smooth(a * b) - mu_a * mu_b
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    interior = ssim_map[5:-5, 5:-5]
    return float(np.mean(interior))
