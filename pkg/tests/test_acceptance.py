"""Acceptance criteria 1-10.

Each test records a PASS/FAIL line that is printed in the terminal summary.
The desk pipeline (dataset, pretraining, GAN phase, benchmarks) runs once per
session for criteria 4-7 and 9, and a second time for the determinism check.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import ACCEPTANCE
from stegopurge import audio, classical, pipeline, stego
from stegopurge.metrics import psnr_from_mse
from stegopurge.neural import (BatchNorm2d, Conv2d, Dense, LeakyReLU, ReLU, Sigmoid, Tanh,
                               Upsample2x, bce_loss, mse_loss)
from stegopurge.neural.gradcheck import check_layer, numerical_grad, rel_error

N_SHAPES = 20


class _Record:
    detail = ""


@pytest.fixture
def criterion(request):
    results = request.config.stash[ACCEPTANCE]

    @contextmanager
    def run(n, title):
        rec = _Record()
        try:
            yield rec
        except BaseException:
            results[n] = (False, title, rec.detail or "assertion failed")
            raise
        results[n] = (True, title, rec.detail)

    return run


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    return pipeline.run_desk_pipeline(tmp_path_factory.mktemp("desk_a"), seed=0)


# -- 1 ------------------------------------------------------------------------

def test_c01_psnr_formula(criterion):
    with criterion(1, "PSNR formula") as c:
        a, b = psnr_from_mse(5.27), psnr_from_mse(6942.51)
        c.detail = f"psnr(5.27)={a:.3f}, psnr(6942.51)={b:.3f}"
        assert abs(a - 40.91) <= 0.01 and abs(b - 9.72) <= 0.01


# -- 2 ------------------------------------------------------------------------

def _layer_cases(seed):
    r = np.random.default_rng(seed)
    k = int(r.choice([1, 3, 5]))
    pad = int(r.integers(0, k // 2 + 1))
    c_in, f = int(r.integers(1, 4)), int(r.integers(1, 4))
    hw = (int(r.integers(max(1, k - 2 * pad), 7)), int(r.integers(max(1, k - 2 * pad), 7)))
    n = int(r.integers(1, 3))
    conv = Conv2d(c_in, f, k, stride=int(r.choice([1, 2])), pad=pad, rng=r)
    conv.bias.value[...] = r.normal(size=f)
    yield "conv2d", conv, r.normal(size=(n, c_in, *hw)), True, 1e-4

    bn = BatchNorm2d(c_in)
    bn.gamma.value[...] = r.uniform(0.5, 2, c_in)
    bn.beta.value[...] = r.normal(size=c_in)
    x = r.normal(1.0, 2.0, size=(int(r.integers(2, 4)), c_in, *hw))
    yield "batchnorm/train", bn, x, True, 1e-3
    yield "batchnorm/eval", bn, x, False, 1e-3

    d_in = int(r.integers(1, 7))
    dense = Dense(d_in, f, rng=r)
    dense.bias.value[...] = r.normal(size=f)
    yield "dense", dense, r.normal(size=(n, d_in)), True, 1e-4

    x = r.normal(size=(n, c_in, *hw))
    x[np.abs(x) < 1e-2] = 0.5
    for name, layer in (("relu", ReLU()), ("leaky_relu", LeakyReLU(0.2)), ("tanh", Tanh()),
                        ("sigmoid", Sigmoid()), ("upsample", Upsample2x())):
        yield name, layer, x, True, 1e-4


def test_c02_gradient_oracle(criterion):
    with criterion(2, "gradient oracle") as c:
        t0 = time.perf_counter()
        worst = {}
        for seed in range(N_SHAPES):
            for name, layer, x, train, tol in _layer_cases(seed):
                err = max(check_layer(layer, x, train=train).values())
                worst[name] = max(worst.get(name, 0.0), err / tol)
            r = np.random.default_rng(1000 + seed)
            shape = (int(r.integers(1, 4)), int(r.integers(1, 6)))
            pred, target = r.normal(size=shape), r.normal(size=shape)
            g = mse_loss(pred, target)[1]
            e = rel_error(g, numerical_grad(lambda: mse_loss(pred, target)[0], pred))
            worst["mse"] = max(worst.get("mse", 0.0), e / 1e-4)
            p = r.uniform(0.05, 0.95, size=shape)
            lab = r.integers(0, 2, size=shape).astype(float)
            g = bce_loss(p, lab)[1]
            e = rel_error(g, numerical_grad(lambda: bce_loss(p, lab)[0], p, h=1e-6))
            worst["bce"] = max(worst.get("bce", 0.0), e / 1e-4)
        secs = time.perf_counter() - t0
        bad = sorted(k for k, v in worst.items() if not v < 1)
        c.detail = f"{N_SHAPES} shapes x {len(worst)} checks, worst err/tol {max(worst.values()):.2e}, {secs:.1f}s"
        assert not bad, bad
        assert secs < 60


# -- 3 ------------------------------------------------------------------------

def test_c03_stego_round_trip(criterion):
    with criterion(3, "steganography round trip") as c:
        rng = np.random.default_rng(3)
        for _ in range(1000):
            h, w = (int(v) for v in rng.integers(6, 40, 2))
            cover = rng.integers(0, 256, (h, w), dtype=np.uint8)
            n = int(rng.integers(0, stego.capacity_bytes((h, w)) + 1))
            data = rng.integers(0, 256, n, dtype=np.uint8).tobytes()
            assert stego.lsb_extract(stego.lsb_embed(cover, data)).data == data
        fractions = {}
        covers = pipeline.synth_covers(3, 64, 3) + [rng.integers(0, 256, (96, 80), dtype=np.uint8)]
        for rate in stego.STANDARD_RATES:
            for i, cov in enumerate(covers):
                frac = float(np.mean(stego.adaptive_embed(cov, rate, i) != cov))
                fractions[rate] = frac
                assert abs(frac - rate / 2) <= 0.1 * rate / 2
        c.detail = "1000 LSB pairs exact; changed fraction " + ", ".join(
            f"{r}:{f:.4f}" for r, f in fractions.items())


# -- 4 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c04_destruction(criterion, desk):
    with criterion(4, "LSB destruction") as c:
        bits = 8 * pipeline.DeskConfig().eval_payload_bytes
        c.detail = f"{bits}-bit payloads, BER " + ", ".join(
            f"{m} {b:.3f}" for m, b in desk.destruction.items())
        assert bits >= 10_000
        assert set(desk.destruction) == {"bicubic", "wavelet", "autoencoder", "ddsp"}
        assert all(abs(b - 0.5) <= 0.05 for b in desk.destruction.values())


# -- 5 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c05_quality_ordering(criterion, desk):
    with criterion(5, "neural beats bicubic on PSNR and SSIM") as c:
        bic = desk.benchmark.row("bicubic")
        rows = {m: desk.benchmark.row(m) for m in ("autoencoder", "ddsp")}
        c.detail = f"bicubic {bic.psnr:.2f}dB/{bic.ssim:.4f}; " + "; ".join(
            f"{m} {r.psnr:.2f}dB/{r.ssim:.4f}" for m, r in rows.items()) + f"; {desk.seconds:.0f}s"
        assert desk.seconds < 1800
        for r in rows.values():
            assert r.psnr > bic.psnr and r.ssim > bic.ssim


# -- 6 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c06_pretraining_efficacy(criterion, desk):
    with criterion(6, "pretraining halves validation MSE") as c:
        mses = desk.pretrain_log.val_mse()
        best = min(mses[1:])
        c.detail = f"epoch-0 {mses[0]:.1f} -> best {best:.1f} ({best / mses[0]:.3f})"
        assert best <= 0.5 * mses[0]


# -- 7 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c07_gan_stability(criterion, desk):
    with criterion(7, "GAN phase keeps PSNR within 1 dB") as c:
        recs = desk.gan_log.records
        before, after = psnr_from_mse(recs[0].val_mse), psnr_from_mse(recs[-1].val_mse)
        c.detail = f"{len(recs) - 1} epochs, val PSNR {before:.2f} -> {after:.2f} dB"
        assert len(recs) - 1 == 5
        for r in recs[1:]:
            assert all(math.isfinite(v) for v in (r.train_loss, r.val_mse, r.d_loss, r.g_adv))
        assert before - after < 1.0


# -- 8 ------------------------------------------------------------------------

def test_c08_wavelet(criterion):
    with criterion(8, "wavelet exactness and shrinkage") as c:
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(100):
            h, w = (int(v) for v in rng.integers(2, 65, 2))
            x = rng.uniform(0, 255, (h, w))
            levels = int(rng.integers(1, 4))
            worst = max(worst, float(np.max(np.abs(
                classical.idwt2_db1(classical.dwt2_db1(x, levels)) - x))))
        ramp = np.tile(np.linspace(0, 255, 64), (64, 1))
        noisy = ramp + np.random.default_rng(0).normal(0, 10, ramp.shape)
        before = float(np.mean((noisy - ramp) ** 2))
        after = float(np.mean((classical.bayes_shrink(noisy) - ramp) ** 2))
        c.detail = f"max reconstruction error {worst:.1e}; ramp MSE {before:.1f} -> {after:.1f}"
        assert worst < 1e-9
        assert after < before


# -- 9 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c09_audio(criterion, desk):
    with criterion(9, "audio pipeline") as c:
        rng = np.random.default_rng(9)
        for _ in range(50):
            n = int(rng.integers(1, 5000))
            sig = audio.AudioSignal(rng.integers(-32768, 32768, n).astype(np.int16), 16000)
            tiles, rec = audio.vector_to_tiles(sig, int(rng.integers(2, 40)))
            back = audio.tiles_to_vector(tiles, rec, 16000)
            assert np.max(np.abs(back.samples.astype(int) - sig.samples)) <= 129  # half of one 257-sample pixel step, rounded up

        pass_g = audio.butterworth_gain(0.1, 4, 0.8) ** 2
        stop_g = audio.butterworth_gain(0.95, 4, 0.5) ** 2
        k = audio.hann_kernel(5)
        nyq = abs(float(np.sum(k * (-1.0) ** np.arange(5))))
        assert abs(1 - pass_g) < 0.02 and stop_g < 0.1
        assert abs(k.sum() - 1) < 1e-12 and nyq < 0.15

        bers = {r.method: r.ber for r in desk.audio_rows}
        lowest = min(bers, key=bers.get)
        c.detail = ("payload BER " + ", ".join(f"{m} {b:.3f}" for m, b in desk.audio_destruction.items())
                    + "; sample BER " + ", ".join(f"{m} {b:.3f}" for m, b in bers.items()))
        assert all(abs(b - 0.5) <= 0.05 for b in desk.audio_destruction.values())
        assert lowest == "bicubic"


# -- 10 -----------------------------------------------------------------------

REPORTS = ("benchmark.csv", "benchmark_per_image.csv", "transfer.csv", "transfer_per_image.csv",
           "audio.csv")
CHECKPOINTS = ("ae.ckpt", "ddsp.ckpt", "disc.ckpt")


def _numeric_cells(path):
    out = []
    for line in path.read_text().splitlines():
        for cell in line.split(","):
            try:
                out.append(float(cell))
            except ValueError:
                out.append(cell)
    return out


def _same_cells(a, b):
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if isinstance(x, float) and isinstance(y, float):
            if not (x == y or (math.isnan(x) and math.isnan(y)) or abs(x - y) <= 1e-5 * max(1, abs(x))):
                return False
        elif x != y:
            return False
    return True


@pytest.mark.slow
def test_c10_determinism(criterion, desk, tmp_path_factory):
    with criterion(10, "determinism") as c:
        other = pipeline.run_desk_pipeline(tmp_path_factory.mktemp("desk_b"), seed=0)
        a, b = desk.out_dir, other.out_dir
        mismatched = [f for f in REPORTS if not _same_cells(_numeric_cells(a / f), _numeric_cells(b / f))]
        mismatched += [f for f in CHECKPOINTS if (a / f).read_bytes() != (b / f).read_bytes()]
        c.detail = f"{len(REPORTS)} reports, {len(CHECKPOINTS)} checkpoints compared"
        if mismatched:
            c.detail += "; differ: " + ", ".join(mismatched)
        assert not mismatched
