import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from stegopurge import metrics
from stegopurge.metrics import MetricsRow, ber, mse, psnr, psnr_from_mse, ssim, uqi


def uqi_bruteforce(a, b, win=8):
    """Loop-per-window universal quality index (Wang-Bovik reference cases)."""
    a = a.astype(float)
    b = b.astype(float)
    vals = []
    for i in range(a.shape[0] - win + 1):
        for j in range(a.shape[1] - win + 1):
            x = a[i:i + win, j:j + win].ravel()
            y = b[i:i + win, j:j + win].ravel()
            mx, my = x.mean(), y.mean()
            vx = ((x - mx) ** 2).mean()
            vy = ((y - my) ** 2).mean()
            cxy = ((x - mx) * (y - my)).mean()
            lum = mx * mx + my * my
            var = vx + vy
            if lum == 0 and var == 0:
                vals.append(1.0)
            elif var == 0:
                vals.append(2 * mx * my / lum)
            elif lum == 0:
                vals.append(2 * cxy / var)
            else:
                vals.append(4 * cxy * mx * my / (var * lum))
    return float(np.mean(vals))


def skimage_ssim(a, b):
    return structural_similarity(a, b, gaussian_weights=True, sigma=1.5,
                                 use_sample_covariance=False, data_range=255)


def test_mse_cases():
    a = np.zeros((2, 2), np.uint8)
    assert mse(a, a) == 0
    assert mse(a, np.array([[0, 3], [4, 0]], np.uint8)) == 6.25
    assert mse(a, np.full((2, 2), 255, np.uint8)) == 65025


@pytest.mark.parametrize("err,db", [(5.27, 40.91), (6942.51, 9.72)])
def test_psnr_reference_pairs(err, db):
    assert abs(psnr_from_mse(err) - db) <= 0.01


def test_psnr_identical_is_inf():
    a = np.ones((4, 4), np.uint8)
    assert psnr(a, a) == math.inf


def test_ssim_identity_and_constants():
    x = np.random.default_rng(0).integers(0, 256, (32, 32), dtype=np.uint8)
    assert ssim(x, x) == pytest.approx(1.0)
    c100 = np.full((16, 16), 100, np.uint8)
    assert ssim(c100, c100) == 1.0
    c1 = (0.01 * 255) ** 2
    expected = (2 * 100 * 200 + c1) / (100**2 + 200**2 + c1)
    assert ssim(c100, np.full((16, 16), 200, np.uint8)) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.8001, abs=1e-4)


@given(st.integers(11, 40), st.integers(11, 40), st.integers(0, 10**6), st.floats(0, 100))
def test_ssim_matches_independent_reference(h, w, seed, sigma):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (h, w), dtype=np.uint8)
    b = np.clip(a + rng.normal(0, sigma, a.shape), 0, 255).astype(np.uint8)
    assert ssim(a, b) == pytest.approx(skimage_ssim(a, b), abs=1e-9)


def test_ssim_large_noise_low():
    # mid-range content so the noise is not mostly clipped away
    rng = np.random.default_rng(1)
    a = rng.integers(64, 192, (64, 64), dtype=np.uint8)
    b = np.clip(a + rng.normal(0, 80, a.shape), 0, 255).astype(np.uint8)
    assert ssim(a, b) < 0.5
    assert skimage_ssim(a, b) < 0.5


def test_ssim_too_small():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8), np.uint8), np.zeros((8, 8), np.uint8))


def test_uqi_identity():
    x = np.random.default_rng(2).integers(0, 256, (20, 20), dtype=np.uint8)
    assert uqi(x, x) == pytest.approx(1.0)


def test_uqi_doubling():
    rng = np.random.default_rng(3)
    a = rng.integers(1, 127, (16, 16)).astype(np.uint8)
    q = metrics.uqi_map(a, (2 * a).astype(np.uint8))
    assert np.allclose(q, 0.64)


def test_uqi_independent_images():
    rng = np.random.default_rng(4)
    a = rng.integers(0, 256, (107, 107), dtype=np.uint8)  # 10^4 windows
    b = rng.integers(0, 256, (107, 107), dtype=np.uint8)
    assert metrics.uqi_map(a, b).size == 10_000
    assert abs(uqi(a, b)) < 0.1


@given(st.integers(8, 20), st.integers(8, 20), st.integers(0, 10**6), st.booleans())
def test_uqi_matches_bruteforce(h, w, seed, flat):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (h, w), dtype=np.uint8)
    b = rng.integers(0, 256, (h, w), dtype=np.uint8)
    if flat:  # exercise the degenerate-window branches
        a[: h // 2] = 0
        b[: h // 2, : w // 2] = 0
        b[h // 2:, w // 2:] = 9
    assert uqi(a, b) == pytest.approx(uqi_bruteforce(a, b), abs=1e-9)


def test_ber_cases():
    a = np.array([[3, 0], [0, 0]], np.uint8)
    b = np.array([[2, 0], [0, 0]], np.uint8)
    assert ber(a, a) == 0
    assert ber(a, b) == 0.03125
    assert ber(a, a ^ 0xFF) == 1.0


@given(st.integers(0, 10**6))
def test_metric_ranges(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (16, 16), dtype=np.uint8)
    b = rng.integers(0, 256, (16, 16), dtype=np.uint8)
    assert 0 <= ber(a, b) <= 1
    assert mse(a, b) >= 0
    assert -1 <= ssim(a, b) <= 1 and -1 <= uqi(a, b) <= 1
    m = mse(a, b)
    if m > 0:
        assert psnr(a, b) == pytest.approx(10 * math.log10(255**2 / m))


def test_evaluate_identity():
    rng = np.random.default_rng(5)
    imgs = [rng.integers(0, 256, (16, 16), dtype=np.uint8) for _ in range(3)]
    per = []
    row = metrics.evaluate(imgs, imgs, lambda x: x, "identity", per)
    assert (row.ber, row.mse, row.psnr, row.ssim, row.uqi, row.n) == (0, 0, math.inf, 1, 1, 3)
    assert len(per) == 3


def test_evaluate_unpaired():
    with pytest.raises(ValueError):
        metrics.evaluate([np.zeros((16, 16), np.uint8)], [], lambda x: x)


def test_report_round_trip():
    rows = [MetricsRow("a", 0.25, 5.27, 40.911, 0.99, 0.98, 4),
            MetricsRow("b", 0.0, 0.0, math.inf, 1.0, 1.0, 4)]
    text = metrics.report_csv(rows)
    assert text.splitlines()[0] == "method,ber,mse,psnr,ssim,uqi,n"
    assert text.splitlines()[2] == "b,0,0,inf,1,1,4"
    back = metrics.read_report_csv(text)
    assert back[0].psnr == pytest.approx(40.911) and back[1].psnr == math.inf
    assert '"inf"' in metrics.report_json(rows)
