"""Baseline purifiers: bicubic down/up resampling and db1 BayesShrink denoising."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imageio import GrayImage, as_gray, to_pixels

BICUBIC_A = -0.5
MAD_SCALE = 0.6745


def cubic_kernel(t, a: float = BICUBIC_A):
    """Keys cubic convolution kernel; ``a = -0.5`` is Catmull-Rom."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2 = t * t
    t3 = t2 * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def resample_matrix(n_in: int, n_out: int, a: float = BICUBIC_A) -> np.ndarray:
    """Dense ``(n_out, n_in)`` matrix applying 1-D bicubic resampling.

    Pixel centres are aligned (``src = (dst + 0.5) * n_in / n_out - 0.5``)
    and out-of-range taps are clamped onto the edge samples.
    """
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    base = np.floor(src).astype(np.int64)
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for off in range(-1, 3):
        idx = base + off
        w = cubic_kernel(src - idx, a)
        np.add.at(m, (rows, np.clip(idx, 0, n_in - 1)), w)
    return m


def resize_float(x: np.ndarray, out_shape, a: float = BICUBIC_A) -> np.ndarray:
    """Separable bicubic resize of a real 2-D array (no rounding)."""
    x = np.asarray(x, dtype=np.float64)
    out_h, out_w = out_shape
    ry = resample_matrix(x.shape[0], out_h, a)
    rx = resample_matrix(x.shape[1], out_w, a)
    return ry @ x @ rx.T


def resize_1d(x: np.ndarray, n_out: int, a: float = BICUBIC_A) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    # banded matrix; build it blockwise for long signals
    if x.size * n_out <= 4_000_000:
        return resample_matrix(x.size, n_out, a) @ x
    scale = x.size / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    base = np.floor(src).astype(np.int64)
    out = np.zeros(n_out)
    for off in range(-1, 3):
        idx = base + off
        out += cubic_kernel(src - idx, a) * x[np.clip(idx, 0, x.size - 1)]
    return out


def bicubic_resize(img: GrayImage, out_w: int, out_h: int) -> GrayImage:
    if out_w < 1 or out_h < 1:
        raise ValueError("output size must be positive")
    return to_pixels(resize_float(as_gray(img), (out_h, out_w)))


def bicubic_purify(img: GrayImage) -> GrayImage:
    """Downscale by 2 then upscale back, both bicubic."""
    img = as_gray(img)
    h, w = img.shape
    if h < 4 or w < 4:
        raise ValueError(f"image too small for bicubic purification: {w}x{h}")
    small = bicubic_resize(img, w // 2, h // 2)
    return bicubic_resize(small, w, h)


# -- db1 wavelets -----------------------------------------------------------

_S = 1.0 / np.sqrt(2.0)


@dataclass
class WaveletBands:
    """Multi-level 2-D db1 decomposition.

    ``details[0]`` is the finest level.  Each entry is ``(LH, HL, HH)``:
    LH is low-pass vertically and high-pass horizontally, HL the converse.
    ``shapes[k]`` is the input shape at level ``k``, kept so odd sizes
    (symmetric extension) invert to the exact original size.
    """

    approx: np.ndarray
    details: list = field(default_factory=list)
    shapes: list = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.details)


def _pad_even(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    if h % 2 or w % 2:
        x = np.pad(x, ((0, h % 2), (0, w % 2)), mode="symmetric")
    return x


def _haar_step(x: np.ndarray):
    x = _pad_even(x)
    a = x[0::2, 0::2]
    b = x[0::2, 1::2]
    c = x[1::2, 0::2]
    d = x[1::2, 1::2]
    ll = (a + b + c + d) * 0.5
    lh = (a - b + c - d) * 0.5
    hl = (a + b - c - d) * 0.5
    hh = (a - b - c + d) * 0.5
    return ll, (lh, hl, hh)


def _haar_inverse_step(ll, details, shape) -> np.ndarray:
    lh, hl, hh = details
    h2, w2 = ll.shape
    x = np.empty((2 * h2, 2 * w2))
    x[0::2, 0::2] = (ll + lh + hl + hh) * 0.5
    x[0::2, 1::2] = (ll - lh + hl - hh) * 0.5
    x[1::2, 0::2] = (ll + lh - hl - hh) * 0.5
    x[1::2, 1::2] = (ll - lh - hl + hh) * 0.5
    return x[:shape[0], :shape[1]]


def dwt2_db1(img, levels: int) -> WaveletBands:
    if levels < 1:
        raise ValueError("levels must be >= 1")
    x = np.asarray(img, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a 2-D array")
    bands = WaveletBands(approx=x)
    for _ in range(levels):
        bands.shapes.append(x.shape)
        x, det = _haar_step(x)
        bands.details.append(det)
    bands.approx = x
    return bands


def idwt2_db1(bands: WaveletBands) -> np.ndarray:
    x = bands.approx
    for det, shape in zip(reversed(bands.details), reversed(bands.shapes)):
        x = _haar_inverse_step(x, det, shape)
    return x


def soft_threshold(c: np.ndarray, t: float) -> np.ndarray:
    return np.sign(c) * np.maximum(np.abs(c) - t, 0.0)


def bayes_threshold(band: np.ndarray, sigma_noise: float) -> float:
    """BayesShrink threshold ``sigma_n^2 / sigma_x`` for one detail band."""
    if sigma_noise == 0.0:
        return 0.0
    var = float(np.mean(band * band))
    sigma_x = np.sqrt(max(var - sigma_noise ** 2, 0.0))
    if sigma_x == 0.0:
        return float(np.abs(band).max())
    return sigma_noise ** 2 / sigma_x


def noise_sigma(bands: WaveletBands) -> float:
    """Robust noise estimate from the finest diagonal band."""
    hh1 = bands.details[0][2]
    return float(np.median(np.abs(hh1)) / MAD_SCALE)


def bayes_shrink(x: np.ndarray, levels: int = 2) -> np.ndarray:
    """Float64 BayesShrink soft-threshold denoising of a 1-D or 2-D array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return bayes_shrink_1d(x, levels)
    bands = dwt2_db1(x, levels)
    sigma = noise_sigma(bands)
    bands.details = [
        tuple(soft_threshold(b, bayes_threshold(b, sigma)) for b in det)
        for det in bands.details
    ]
    return idwt2_db1(bands)


def bayes_shrink_denoise(img: GrayImage, levels: int = 2) -> GrayImage:
    return to_pixels(bayes_shrink(as_gray(img), levels))


# -- 1-D variant for audio baselines ----------------------------------------

def dwt_db1(x: np.ndarray, levels: int):
    if levels < 1:
        raise ValueError("levels must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    details, lengths = [], []
    for _ in range(levels):
        lengths.append(x.size)
        if x.size % 2:
            x = np.append(x, x[-1])
        details.append((x[0::2] - x[1::2]) * _S)
        x = (x[0::2] + x[1::2]) * _S
    return x, details, lengths


def idwt_db1(approx, details, lengths) -> np.ndarray:
    x = approx
    for d, n in zip(reversed(details), reversed(lengths)):
        y = np.empty(2 * x.size)
        y[0::2] = (x + d) * _S
        y[1::2] = (x - d) * _S
        x = y[:n]
    return x


def bayes_shrink_1d(x: np.ndarray, levels: int = 2) -> np.ndarray:
    approx, details, lengths = dwt_db1(x, levels)
    sigma = float(np.median(np.abs(details[0])) / MAD_SCALE)
    details = [soft_threshold(d, bayes_threshold(d, sigma)) for d in details]
    return idwt_db1(approx, details, lengths)
