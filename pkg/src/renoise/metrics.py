"""PSNR and SSIM image quality metrics, and the evaluation report type.

Both metrics clip their inputs to [0, peak] first (matching how images
would be written to disk) but do not quantize to integers; the difference
against quantized evaluation is on the order of a few hundredths of a dB.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ShapeMismatchError, SpecError
from .image import ImageBuffer

PSNR_CAP_DB = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _as_array(img) -> np.ndarray:
    if isinstance(img, ImageBuffer):
        return img.data
    return np.asarray(img, dtype=np.float64)


def psnr(a, b, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB, saturating at the 99 dB sentinel.

    The MSE is taken jointly over all channels; zero (or near-zero) MSE
    reports the cap. Inputs are clipped to [0, peak] but not quantized.
    """
    x = np.clip(_as_array(a), 0.0, peak)
    y = np.clip(_as_array(b), 0.0, peak)
    if x.shape != y.shape:
        raise ShapeMismatchError("psnr", x.shape, y.shape)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / mse))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    t = np.arange(size) - half
    g = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with a 1-D window along both axes."""
    k = window.size
    h, w = img.shape
    rows = np.zeros((h, w - k + 1))
    for i in range(k):
        rows += window[i] * img[:, i:i + w - k + 1]
    out = np.zeros((h - k + 1, w - k + 1))
    for i in range(k):
        out += window[i] * rows[i:i + h - k + 1, :]
    return out


def _ssim_channel(x: np.ndarray, y: np.ndarray, peak: float) -> float:
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu_x = _filter_valid(x, win)
    mu_y = _filter_valid(y, win)
    xx = _filter_valid(x * x, win) - mu_x * mu_x
    yy = _filter_valid(y * y, win) - mu_y * mu_y
    xy = _filter_valid(x * y, win) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def ssim(a, b, peak: float = 255.0) -> float:
    """Mean local SSIM with an 11x11 Gaussian window (std 1.5).

    K1 = 0.01, K2 = 0.03. Multi-channel images are averaged per channel.
    Images smaller than the window are rejected.
    """
    x = np.clip(_as_array(a), 0.0, peak)
    y = np.clip(_as_array(b), 0.0, peak)
    if x.shape != y.shape:
        raise ShapeMismatchError("ssim", x.shape, y.shape)
    if x.ndim == 2:
        x = x[:, :, None]
        y = y[:, :, None]
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise SpecError(
            f"ssim needs images at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape[0]}x{x.shape[1]}")
    vals = [_ssim_channel(x[:, :, c], y[:, :, c], peak) for c in range(x.shape[2])]
    return float(np.mean(vals))


@dataclass
class EvalRow:
    image_id: str
    sigma: float | None
    lam: float | None
    psnr: float | None
    ssim: float | None

    def to_json_dict(self) -> dict:
        return {"id": self.image_id, "sigma": self.sigma, "lambda": self.lam,
                "psnr": self.psnr, "ssim": self.ssim}


@dataclass
class EvalReport:
    """Per-image metric rows plus their aggregate and run metadata.

    ``wall_clock_sec`` is kept in memory only; serialized artifacts must be
    byte-identical across reruns with the same seed, so timing never enters
    the JSON form.
    """

    rows: list[EvalRow] = field(default_factory=list)
    seed: int = 0
    config_digest: str = ""
    errors: list[dict] = field(default_factory=list)
    wall_clock_sec: float | None = None

    @property
    def mean_psnr(self) -> float | None:
        vals = [r.psnr for r in self.rows if r.psnr is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def mean_ssim(self) -> float | None:
        vals = [r.ssim for r in self.rows if r.ssim is not None]
        return float(np.mean(vals)) if vals else None

    def to_json_dict(self) -> dict:
        return {
            "rows": [r.to_json_dict() for r in self.rows],
            "mean_psnr": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "errors": self.errors,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"
