"""PSNR and SSIM for data-cubes."""
import numpy as np
from scipy.signal import convolve2d

from .errors import ArgumentError

PSNR_CAP = 100.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(reference, estimate):
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(estimate, dtype=np.float64)
    if a.shape != b.shape:
        raise ArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(reference, estimate, peak=1.0):
    """10 log10(peak^2 / MSE), capped at 100 dB (also for MSE = 0)."""
    if not peak > 0:
        raise ArgumentError(f"peak must be > 0, got {peak}")
    a, b = _pair(reference, estimate)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return float(np.clip(10.0 * np.log10(peak * peak / mse), 0.0, PSNR_CAP))


def _gaussian_window(size=SSIM_WIN, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_frame(a, b, data_range=1.0):
    """Mean SSIM over the valid (unpadded) window positions of one frame."""
    if min(a.shape) < SSIM_WIN:
        raise ArgumentError(f"SSIM needs frames of at least {SSIM_WIN}x{SSIM_WIN}, got {a.shape}")
    w = _gaussian_window()
    filt = lambda z: convolve2d(z, w, mode="valid")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(reference, estimate, data_range=1.0):
    """SSIM per frame (11x11 Gaussian window, sigma 1.5), averaged over frames."""
    a, b = _pair(reference, estimate)
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    vals = [ssim_frame(a[:, :, k], b[:, :, k], data_range) for k in range(a.shape[2])]
    return float(np.clip(np.mean(vals), -1.0, 1.0))
