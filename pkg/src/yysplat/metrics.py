"""Image quality metrics for unit-range images."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import convolve2d

PSNR_CAP = 99.0  # display cap for report tables; raw values may be inf

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03

_LUMA = np.array([0.299, 0.587, 0.114])


def to_grayscale(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.ndim == 3 and image.shape[2] == 3:
        return image @ _LUMA
    if image.ndim == 3 and image.shape[2] == 1:
        return image[:, :, 0]
    if image.ndim == 2:
        return image
    raise ValueError(f"expected 1- or 3-channel image, got shape {image.shape}")


def psnr(image: np.ndarray, reference: np.ndarray) -> float:
    """Peak signal-to-noise ratio against a [0, 1] reference, in dB.

    Returns ``math.inf`` when the mean squared error drops below 1e-12.
    """
    image = np.asarray(image, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if image.shape != reference.shape:
        raise ValueError("image shapes differ")
    mse = float(np.mean((image - reference) ** 2))
    if mse < 1e-12:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    kernel = np.outer(kernel, kernel)
    return kernel / kernel.sum()


def ssim(image: np.ndarray, reference: np.ndarray) -> float:
    """Mean structural similarity on grayscale luminance, 11x11 Gaussian window."""
    gray_a = to_grayscale(image)
    gray_b = to_grayscale(reference)
    if gray_a.shape != gray_b.shape:
        raise ValueError("image shapes differ")
    if min(gray_a.shape) < _SSIM_WINDOW:
        raise ValueError("images smaller than the SSIM window")
    kernel = _gaussian_kernel(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2

    mu_a = convolve2d(gray_a, kernel, mode="valid")
    mu_b = convolve2d(gray_b, kernel, mode="valid")
    var_a = convolve2d(gray_a * gray_a, kernel, mode="valid") - mu_a**2
    var_b = convolve2d(gray_b * gray_b, kernel, mode="valid") - mu_b**2
    cov = convolve2d(gray_a * gray_b, kernel, mode="valid") - mu_a * mu_b

    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    return float(score.mean())
