"""Cube quality metrics: band-averaged PSNR and SSIM, and the mean
spectral angle (SAM).

Conventions, since they matter for comparability: the peak value is 1.0
(normalized data); MPSNR is the mean of per-band PSNRs, not the PSNR of
the pooled MSE; SSIM uses the 11x11 Gaussian window (std 1.5) with
stabilizers (0.01)^2 and (0.03)^2 on unit dynamic range, evaluated over
fully-contained windows; SAM is reported in radians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import DimensionError, GeometryError
from .hsidata import HsiCube

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@dataclass
class MetricReport:
    mpsnr: float
    mssim: float
    sam: float
    sam_skipped: int = 0  # pixels with a zero-norm spectrum, excluded from SAM

    def to_text(self) -> str:
        psnr = "inf" if np.isinf(self.mpsnr) else f"{self.mpsnr:.4g}"
        out = f"mpsnr={psnr}\nmssim={self.mssim:.4f}\nsam={self.sam:.4f}\n"
        if self.sam_skipped:
            out += f"sam_skipped={self.sam_skipped}\n"
        return out

    def to_csv(self) -> str:
        return ("mpsnr,mssim,sam,sam_skipped\n"
                f"{self.mpsnr!r},{self.mssim!r},{self.sam!r},{self.sam_skipped}\n")


def _as_cube_array(x) -> np.ndarray:
    arr = x.data if isinstance(x, HsiCube) else np.asarray(x)
    if arr.ndim != 3:
        raise DimensionError(f"expected a (S, H, W) cube, got ndim {arr.ndim}")
    return arr.astype(np.float64)


def _check_same(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {gt.shape}")


def mpsnr(pred, gt) -> float:
    """Mean over bands of 10*log10(1 / MSE_band), peak 1. A band with
    zero error contributes +inf, so identical cubes report inf."""
    p, g = _as_cube_array(pred), _as_cube_array(gt)
    _check_same(p, g)
    vals = []
    for b in range(p.shape[0]):
        mse = float(np.mean((p[b] - g[b]) ** 2))
        vals.append(np.inf if mse == 0.0 else 10.0 * np.log10(1.0 / mse))
    return float(np.mean(vals))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim_band(pred: np.ndarray, gt: np.ndarray, window: int = SSIM_WINDOW,
              sigma: float = SSIM_SIGMA, c1: float = SSIM_C1, c2: float = SSIM_C2) -> float:
    """Mean SSIM of one band over all fully-contained windows."""
    if pred.shape[0] < window or pred.shape[1] < window:
        raise GeometryError(f"band {pred.shape} smaller than the {window}x{window} window")
    win = _gaussian_window(window, sigma)
    mu1 = fftconvolve(pred, win, mode="valid")
    mu2 = fftconvolve(gt, win, mode="valid")
    m11 = fftconvolve(pred * pred, win, mode="valid")
    m22 = fftconvolve(gt * gt, win, mode="valid")
    m12 = fftconvolve(pred * gt, win, mode="valid")
    var1 = m11 - mu1 * mu1
    var2 = m22 - mu2 * mu2
    cov = m12 - mu1 * mu2
    num = (2 * mu1 * mu2 + c1) * (2 * cov + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2)
    return float(np.mean(num / den))


def mssim(pred, gt) -> float:
    """Per-band SSIM averaged over all bands; exactly 1.0 iff inputs equal."""
    p, g = _as_cube_array(pred), _as_cube_array(gt)
    _check_same(p, g)
    if np.array_equal(p, g):
        return 1.0
    return float(np.mean([ssim_band(p[b], g[b]) for b in range(p.shape[0])]))


def sam(pred, gt) -> float:
    """Mean spectral angle in radians over all pixels."""
    return sam_with_skipped(pred, gt)[0]


def sam_with_skipped(pred, gt) -> tuple[float, int]:
    """SAM plus the count of skipped zero-norm-spectrum pixels."""
    p, g = _as_cube_array(pred), _as_cube_array(gt)
    _check_same(p, g)
    dots = np.sum(p * g, axis=0)
    np_ = np.sqrt(np.sum(p * p, axis=0))
    ng = np.sqrt(np.sum(g * g, axis=0))
    valid = (np_ > 0) & (ng > 0)
    skipped = int(np.size(valid) - np.count_nonzero(valid))
    if not np.any(valid) or np.array_equal(p, g):
        # identical spectra have angle 0 by definition; computing it would
        # pick up sqrt rounding of order 1e-8 radians
        return 0.0, skipped
    cosang = np.clip(dots[valid] / (np_[valid] * ng[valid]), -1.0, 1.0)
    return float(np.mean(np.arccos(cosang))), skipped


def evaluate(pred, gt) -> MetricReport:
    angle, skipped = sam_with_skipped(pred, gt)
    return MetricReport(mpsnr=mpsnr(pred, gt), mssim=mssim(pred, gt),
                        sam=angle, sam_skipped=skipped)
