import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stegopurge import audio
from stegopurge.audio import AudioSignal
from stegopurge.stego import lsb_embed, lsb_extract, payload_ber, random_payload

int16s = arrays(np.int16, st.integers(1, 3000))


def sine(freq_frac, n=4096, amp=10000.0):
    t = np.arange(n)
    return AudioSignal(audio.clip16(amp * np.sin(np.pi * freq_frac * t)), 16000)


def rms(x):
    return float(np.sqrt(np.mean(np.asarray(x, dtype=float) ** 2)))


def test_signal_invariants():
    with pytest.raises(ValueError):
        AudioSignal(np.array([], dtype=np.int16), 8000)
    with pytest.raises(ValueError):
        AudioSignal(np.zeros(3, np.int16), 0)


@given(int16s, st.sampled_from([4, 8, 32]))
def test_tiling_round_trip_bound(samples, side):
    sig = AudioSignal(samples, 8000)
    tiles, rec = audio.vector_to_tiles(sig, side)
    assert all(t.shape == (side, side) for t in tiles)
    back = audio.tiles_to_vector(tiles, rec, 8000)
    assert len(back) == len(sig)
    assert np.max(np.abs(back.samples.astype(int) - samples)) <= 129


def test_exact_tile_count_and_constant_zero():
    tiles, rec = audio.vector_to_tiles(AudioSignal(np.zeros(64, np.int16), 8000), 8)
    assert len(tiles) == 1 and rec.n_tiles == 1
    assert (tiles[0] == 128).all()


def test_pixel_map_endpoints():
    assert audio.samples_to_pixels([-32768, 32767, 0]).tolist() == [0, 255, 128]
    p = np.arange(256)
    assert np.array_equal(audio.samples_to_pixels(audio.pixels_to_samples(p)), p)


def test_tile_record_mismatch():
    tiles, rec = audio.vector_to_tiles(AudioSignal(np.zeros(100, np.int16), 8000), 8)
    with pytest.raises(ValueError):
        audio.tiles_to_vector(tiles[:-1], rec, 8000)


def test_butterworth_dc_and_length():
    sig = AudioSignal(np.full(500, 1234, np.int16), 8000)
    out = audio.butterworth_lowpass(sig)
    assert len(out) == 500
    assert np.max(np.abs(out.samples.astype(int) - 1234)) <= 1


def test_butterworth_stopband():
    # analytic |H|^2 of the forward-backward pair at 0.95 Nyquist
    g = audio.butterworth_gain(0.95, 4, 0.5) ** 2
    assert g < 0.1
    sig = sine(0.95)
    out = audio.butterworth_lowpass(sig, 4, 0.5)
    core = slice(500, -500)
    assert rms(out.samples[core]) < 0.1 * rms(sig.samples[core])
    assert rms(out.samples[core]) == pytest.approx(g * rms(sig.samples[core]), abs=0.01 * rms(sig.samples))


def test_butterworth_passband():
    g = audio.butterworth_gain(0.1, 4, 0.8) ** 2
    assert abs(1 - g) < 0.02
    sig = sine(0.1)
    out = audio.butterworth_lowpass(sig, 4, 0.8)
    assert rms(out.samples) == pytest.approx(rms(sig.samples), rel=0.02)


def test_butterworth_rejects_bad_cutoff():
    for c in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            audio.butterworth_lowpass(sine(0.1, 64), 4, c)


def test_hann_constant_and_impulse():
    sig = AudioSignal(np.full(50, -700, np.int16), 8000)
    assert np.array_equal(audio.hanning_smooth(sig).samples, sig.samples)
    imp = np.zeros(21, np.int16)
    imp[10] = 10000
    out = audio.hanning_smooth(AudioSignal(imp, 8000), 5).samples
    k = np.hanning(5) / np.hanning(5).sum()
    assert np.allclose(out[8:13], 10000 * k, atol=0.5)
    assert k.sum() == pytest.approx(1.0)


def test_hann_nyquist_attenuation():
    a = 8000
    sig = AudioSignal(np.where(np.arange(200) % 2, a, -a).astype(np.int16), 8000)
    out = audio.hanning_smooth(sig, 5).samples
    assert np.max(np.abs(out[5:-5])) < 0.15 * a


def test_hann_rejects_even_window():
    with pytest.raises(ValueError):
        audio.hanning_smooth(sine(0.1, 64), 4)


@given(int16s)
def test_filters_preserve_length(samples):
    sig = AudioSignal(samples, 8000)
    assert len(audio.butterworth_lowpass(sig)) == len(sig)
    assert len(audio.hanning_smooth(sig)) == len(sig)


def test_identity_pipeline_snr():
    for seed in range(3):
        sig = audio.synth_speech(8192, seed=seed)
        out = audio.purify_audio(sig, lambda t: t, 32)
        assert len(out) == len(sig)
        assert audio.snr_db(sig, out) > 30


def test_one_d_baselines():
    sig = audio.synth_speech(4096, seed=1)
    for method in ("bicubic", "wavelet"):
        out = audio.purify_audio(sig, None, 32, method=method)
        assert len(out) == len(sig)
        assert audio.snr_db(sig, out) > 10
    with pytest.raises(ValueError):
        audio.purify_audio(sig, None, 32, method="identity")


def test_tile_path_destroys_lsb_payload():
    from stegopurge.classical import bicubic_purify

    sig = audio.synth_speech(12288, seed=4)
    img = audio.to_tile_image(sig, 32)
    payload = random_payload(1300, 3)
    stego_sig = audio.from_tile_image(lsb_embed(img, payload), len(sig), sig.sample_rate)
    out = audio.purify_audio(stego_sig, bicubic_purify, 32)
    ber = payload_ber(payload, lsb_extract(audio.to_tile_image(out, 32), 1300))
    assert abs(ber - 0.5) < 0.05


def test_wav_round_trip(tmp_path):
    sig = audio.synth_speech(1000, 8000, seed=2)
    audio.write_wav(sig, tmp_path / "a.wav")
    back = audio.read_wav(tmp_path / "a.wav")
    assert back.sample_rate == 8000 and np.array_equal(back.samples, sig.samples)


def test_synth_speech_deterministic():
    a = audio.synth_speech(500, seed=9)
    assert np.array_equal(a.samples, audio.synth_speech(500, seed=9).samples)
