import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cslid import dsp
from cslid.errors import (
    ConfigurationError,
    EmptyInputError,
    TooShortError,
    UnsupportedCodecError,
    WavFormatError,
)


def _tone(freq, seconds=0.5, sr=16000, amp=0.5):
    t = np.arange(int(seconds * sr)) / sr
    return dsp.AudioClip(amp * np.sin(2 * np.pi * freq * t), sr)


def _loop_log_mel(samples, sr, win, hop, n_fft, n_mels):
    """Frame-by-frame reference built from explicit DFT sums and HTK formulas."""
    mel = lambda f: 2595.0 * math.log10(1.0 + f / 700.0)
    inv = lambda m: 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    top = mel(sr / 2)
    edges = [inv(top * i / (n_mels + 1)) for i in range(n_mels + 2)]
    window = [0.54 - 0.46 * math.cos(2 * math.pi * n / (win - 1)) for n in range(win)]
    n_frames = (len(samples) - win) // hop + 1
    out = np.zeros((n_frames, n_mels))
    for f in range(n_frames):
        seg = [samples[f * hop + n] * window[n] for n in range(win)]
        mags = []
        for k in range(n_fft // 2 + 1):
            re = sum(x * math.cos(2 * math.pi * k * n / n_fft) for n, x in enumerate(seg))
            im = sum(x * math.sin(2 * math.pi * k * n / n_fft) for n, x in enumerate(seg))
            mags.append(math.hypot(re, im))
        for m in range(n_mels):
            lo, c, hi = edges[m], edges[m + 1], edges[m + 2]
            e = 0.0
            for k, a in enumerate(mags):
                hz = k * sr / n_fft
                w = max(0.0, min((hz - lo) / (c - lo), (hi - hz) / (hi - c)))
                e += w * a
            out[f, m] = math.log(max(e, 1e-10))
    return out - out.mean()


class TestFraming:
    def test_defaults(self):
        c = dsp.FramingConfig()
        assert (c.window_samples, c.hop_samples) == (320, 160)

    def test_frame_count_one_second(self):
        assert dsp.FramingConfig().n_frames(16000) == 99

    @given(
        st.integers(min_value=8000, max_value=48000),
        st.integers(min_value=2, max_value=40),
        st.integers(min_value=1, max_value=40),
        st.integers(min_value=0, max_value=50000),
    )
    def test_frame_count_formula(self, sr, window_ms, hop_ms, extra):
        if hop_ms > window_ms:
            hop_ms, window_ms = window_ms, hop_ms
        c = dsp.FramingConfig(window_ms=window_ms, hop_ms=hop_ms, sample_rate=sr, n_fft=4096, n_mels=10)
        n = c.window_samples + extra
        frames = dsp.frame_signal(np.zeros(n), c)
        assert frames.shape[0] == (n - c.window_samples) // c.hop_samples + 1
        assert frames.shape[0] == c.n_frames(n)

    def test_too_short(self):
        with pytest.raises(TooShortError):
            dsp.frame_signal(np.zeros(100), dsp.FramingConfig())

    def test_bad_config(self):
        with pytest.raises(ConfigurationError):
            dsp.FramingConfig(window_ms=10, hop_ms=20)
        with pytest.raises(ConfigurationError):
            dsp.FramingConfig(n_fft=128)

    def test_frames_per_label_char(self):
        assert dsp.frames_per_label_char(dsp.FramingConfig()) == 20
        assert dsp.frames_per_label_char(15.0) == 13
        with pytest.raises(ConfigurationError):
            dsp.frames_per_label_char(250.0)


class TestMel:
    def test_htk_reference_points(self):
        assert dsp.hz_to_mel(0.0) == 0.0
        assert dsp.hz_to_mel(700.0) == pytest.approx(2595.0 * math.log10(2.0))
        assert dsp.hz_to_mel(1000.0) == pytest.approx(999.98553, abs=1e-4)

    def test_mel_roundtrip(self):
        hz = np.linspace(0, 8000, 101)
        np.testing.assert_allclose(dsp.mel_to_hz(dsp.hz_to_mel(hz)), hz, atol=1e-9)

    def test_filterbank_shape_and_peaks(self):
        fb = dsp.mel_filterbank(80, 512, 16000)
        assert fb.shape == (80, 257)
        assert fb.min() >= 0.0 and fb.max() <= 1.0
        centers = dsp.mel_center_frequencies(80, 16000)
        assert np.all(np.diff(centers) > 0)
        assert centers[-1] < 8000.0

    def test_tone_peaks_near_its_frequency(self):
        s = dsp.log_mel_spectrogram(_tone(1000.0))
        band = int(np.argmax(s.values.mean(axis=0)))
        centers = dsp.mel_center_frequencies(80, 16000)
        assert abs(centers[band] - 1000.0) < 60.0


class TestLogMel:
    def test_matches_loop_reference(self, rng):
        # small configuration so the O(N^2) reference stays cheap
        sr = 4000
        c = dsp.FramingConfig(window_ms=16, hop_ms=8, n_mels=6, n_fft=64, sample_rate=sr)
        samples = rng.normal(size=200)
        got = dsp.log_mel_spectrogram(dsp.AudioClip(samples, sr), c).values
        want = _loop_log_mel(samples, sr, c.window_samples, c.hop_samples, 64, 6)
        np.testing.assert_allclose(got, want, atol=1e-9)

    @given(st.integers(min_value=0, max_value=2**32 - 1), st.floats(min_value=1e-4, max_value=10.0))
    def test_mean_zero(self, seed, scale):
        samples = np.random.default_rng(seed).normal(scale=scale, size=3200)
        s = dsp.log_mel_spectrogram(dsp.AudioClip(samples, 16000))
        assert abs(s.values.mean()) < 1e-6
        assert s.mean_normalized

    def test_silence_hits_floor(self):
        s = dsp.log_mel_spectrogram(dsp.AudioClip(np.zeros(1600), 16000), normalize=False)
        assert np.all(s.values == math.log(1e-10))

    def test_deterministic(self, rng):
        clip = dsp.AudioClip(rng.normal(size=8000), 16000)
        a = dsp.log_mel_spectrogram(clip).values
        b = dsp.log_mel_spectrogram(clip).values
        assert a.tobytes() == b.tobytes()

    @given(st.integers(min_value=0, max_value=2**32 - 1), st.floats(min_value=1.0, max_value=100.0))
    def test_energy_monotone_in_gain(self, seed, gain):
        samples = np.random.default_rng(seed).normal(scale=0.1, size=2000)
        a = dsp.log_mel_spectrogram(dsp.AudioClip(samples, 16000), normalize=False).values
        b = dsp.log_mel_spectrogram(dsp.AudioClip(samples * gain, 16000), normalize=False).values
        assert np.all(b >= a - 1e-12)

    def test_sample_rate_mismatch(self):
        with pytest.raises(ConfigurationError):
            dsp.log_mel_spectrogram(dsp.AudioClip(np.zeros(8000), 8000))

    def test_spectrogram_is_read_only(self, rng):
        s = dsp.log_mel_spectrogram(dsp.AudioClip(rng.normal(size=1600), 16000))
        with pytest.raises(ValueError):
            s.values[0, 0] = 1.0


class TestWav:
    def test_pcm16_roundtrip(self, tmp_path, rng):
        clip = dsp.AudioClip(rng.uniform(-0.9, 0.9, size=1000), 16000)
        dsp.save_wav(tmp_path / "a.wav", clip)
        back = dsp.load_wav(tmp_path / "a.wav")
        assert back.sample_rate == 16000
        np.testing.assert_allclose(back.samples, clip.samples, atol=1.0 / 32768)

    def test_float32_passthrough(self, tmp_path):
        import scipy.io.wavfile

        x = np.linspace(-0.5, 0.5, 100, dtype=np.float32)
        scipy.io.wavfile.write(tmp_path / "f.wav", 8000, x)
        np.testing.assert_array_equal(dsp.load_wav(tmp_path / "f.wav").samples, x.astype(np.float64))

    def test_stereo_takes_first_channel(self, tmp_path):
        import scipy.io.wavfile

        x = np.stack([np.full(50, 1000, np.int16), np.full(50, -1000, np.int16)], axis=1)
        scipy.io.wavfile.write(tmp_path / "s.wav", 16000, x)
        with pytest.warns(UserWarning):
            clip = dsp.load_wav(tmp_path / "s.wav")
        assert np.all(clip.samples > 0)

    def test_unsupported_codec(self, tmp_path):
        import scipy.io.wavfile

        scipy.io.wavfile.write(tmp_path / "u.wav", 16000, np.zeros(10, np.uint8))
        with pytest.raises(UnsupportedCodecError):
            dsp.load_wav(tmp_path / "u.wav")

    def test_garbage(self, tmp_path):
        (tmp_path / "g.wav").write_bytes(b"not a riff file at all")
        with pytest.raises(WavFormatError):
            dsp.load_wav(tmp_path / "g.wav")

    def test_empty(self, tmp_path):
        import scipy.io.wavfile

        scipy.io.wavfile.write(tmp_path / "e.wav", 16000, np.zeros(0, np.int16))
        with pytest.raises(EmptyInputError):
            dsp.load_wav(tmp_path / "e.wav")
