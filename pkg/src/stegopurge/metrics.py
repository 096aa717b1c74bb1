"""Image quality and destruction metrics: BER, MSE, PSNR, SSIM and UQI.

All metrics take two equally sized gray images and work in float64.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import signal

PEAK = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
UQI_WINDOW = 8

REPORT_FIELDS = ("method", "ber", "mse", "psnr", "ssim", "uqi", "n")


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    d = a - b
    return float(np.mean(d * d))


def psnr_from_mse(err: float, peak: float = PEAK) -> float:
    if err == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def psnr(a, b, peak: float = PEAK) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical inputs."""
    return psnr_from_mse(mse(a, b), peak)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, peak: float = PEAK) -> float:
    """Mean SSIM over all valid 11x11 Gaussian-weighted windows.

    Uses the original constants K1=0.01, K2=0.03 with population
    (biased) local statistics.
    """
    a, b = _pair(a, b)
    if a.ndim != 2 or min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    w = gaussian_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2

    def filt(x):
        return signal.correlate(x, w, mode="valid", method="direct")

    mu_a = filt(a)
    mu_b = filt(b)
    s_aa = filt(a * a) - mu_a * mu_a
    s_bb = filt(b * b) - mu_b * mu_b
    s_ab = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * s_ab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (s_aa + s_bb + c2)
    return float(np.mean(num / den))


def uqi_map(a, b, window: int = UQI_WINDOW) -> np.ndarray:
    """Universal quality index for every valid ``window``-sized block position.

    Degenerate windows follow Wang and Bovik's reference code: when only
    the variance term vanishes the luminance factor is reported, when only
    the mean term vanishes the contrast/structure factor, and 1 when both do.
    """
    a, b = _pair(a, b)
    if a.ndim != 2 or min(a.shape) < window:
        raise ValueError(f"image smaller than the {window}x{window} UQI window")
    n = window * window

    def box(x):
        # integral image: exact window sums for integer pixels
        c = np.zeros((x.shape[0] + 1, x.shape[1] + 1))
        c[1:, 1:] = x.cumsum(0).cumsum(1)
        return (c[window:, window:] - c[:-window, window:]
                - c[window:, :-window] + c[:-window, :-window])

    sa, sb = box(a), box(b)
    saa, sbb, sab = box(a * a), box(b * b), box(a * b)
    # window sums rather than means; every term carries the same n^2 factor
    mean_ab = sa * sb
    mean_sq = sa * sa + sb * sb
    var_sum = n * (saa + sbb) - mean_sq
    cov = n * sab - mean_ab
    num = 4.0 * cov * mean_ab
    den = var_sum * mean_sq
    q = np.ones_like(den)
    full = den != 0
    q[full] = num[full] / den[full]
    lum_only = (var_sum == 0) & (mean_sq != 0)
    q[lum_only] = 2.0 * mean_ab[lum_only] / mean_sq[lum_only]
    con_only = (mean_sq == 0) & (var_sum != 0)
    q[con_only] = 2.0 * cov[con_only] / var_sum[con_only]
    return q


def uqi(a, b, window: int = UQI_WINDOW) -> float:
    return float(np.mean(uqi_map(a, b, window)))


def ber(a, b) -> float:
    """Fraction of differing bits across all 8 bit-planes."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.unpackbits(a ^ b).sum()) / (8 * a.size)


@dataclass
class MetricsRow:
    method: str
    ber: float
    mse: float
    psnr: float
    ssim: float
    uqi: float
    n: int

    def as_csv(self) -> list[str]:
        return [self.method] + [fmt(getattr(self, k)) for k in REPORT_FIELDS[1:-1]] + [str(self.n)]


def fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6g}"


def image_metrics(reference, purified, method: str = "") -> MetricsRow:
    """All five metrics for one (stego, purified) pair."""
    return MetricsRow(
        method=method,
        ber=ber(reference, purified),
        mse=mse(reference, purified),
        psnr=psnr(reference, purified),
        ssim=ssim(reference, purified),
        uqi=uqi(reference, purified),
        n=1,
    )


def aggregate(rows, method: str) -> MetricsRow:
    """Arithmetic mean of per-image rows (compensated summation)."""
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to aggregate")
    n = len(rows)

    def mean(key):
        vals = [getattr(r, key) for r in rows]
        if any(math.isinf(v) for v in vals):
            return math.inf
        return math.fsum(vals) / n

    return MetricsRow(method, mean("ber"), mean("mse"), mean("psnr"),
                      mean("ssim"), mean("uqi"), n)


def evaluate(covers, stegos, purifier, method: str = "", per_image: list | None = None) -> MetricsRow:
    """Purify every stego and score it against that stego.

    BER counts the bits purification flipped; MSE/PSNR/SSIM/UQI compare the
    purified image to its stego counterpart.  ``covers`` only fixes the
    pairing.  Per-image rows are appended to ``per_image`` when given.
    """
    covers = list(covers)
    stegos = list(stegos)
    if not stegos:
        raise ValueError("empty image set")
    if len(covers) != len(stegos):
        raise ValueError(f"unpaired sets: {len(covers)} covers, {len(stegos)} stegos")
    rows = []
    for stego in stegos:
        row = image_metrics(stego, purifier(stego), method)
        rows.append(row)
    if per_image is not None:
        per_image.extend(rows)
    return aggregate(rows, method)


def report_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in rows:
        w.writerow(r.as_csv())
    return buf.getvalue()


def report_json(rows) -> str:
    out = []
    for r in rows:
        d = asdict(r)
        for k in ("ber", "mse", "psnr", "ssim", "uqi"):
            d[k] = fmt(d[k]) if math.isinf(d[k]) else float(fmt(d[k]))
        out.append(d)
    return json.dumps(out, indent=2)


def read_report_csv(text: str) -> list[MetricsRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(MetricsRow(rec["method"], *(float(rec[k]) for k in REPORT_FIELDS[1:-1]),
                               int(rec["n"])))
    return rows
